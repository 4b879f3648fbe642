#include "attnaudit/audit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "attnaudit/util.hpp"

namespace attnaudit {

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: distributions differ in length");
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) a += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) b += q[i] * std::log(q[i] / m);
  }
  return std::clamp(0.5 * a + 0.5 * b, 0.0, std::log(2.0));
}

std::optional<KendallTau> kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: lengths differ");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: needs at least two entries");
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0) ++ties_a;
      if (db == 0.0) ++ties_b;
      if (da == 0.0 || db == 0.0) continue;
      ((da > 0.0) == (db > 0.0) ? concordant : discordant) += 1;
    }
  const double n0 = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double denom = std::sqrt((n0 - static_cast<double>(ties_a)) * (n0 - static_cast<double>(ties_b)));
  if (denom == 0.0) return std::nullopt;
  KendallTau r;
  const double s = static_cast<double>(concordant - discordant);
  r.tau = std::clamp(s / denom, -1.0, 1.0);

  // Variance of S under independence, corrected for tie groups.
  auto group_sizes = [](std::span<const double> x) {
    std::vector<double> v(x.begin(), x.end());
    std::sort(v.begin(), v.end());
    std::vector<double> sizes;
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j] == v[i]) ++j;
      if (j - i > 1) sizes.push_back(static_cast<double>(j - i));
      i = j;
    }
    return sizes;
  };
  const auto ta = group_sizes(a), tb = group_sizes(b);
  const double nn = static_cast<double>(n);
  double vt = 0, vu = 0, t1 = 0, u1 = 0, t2 = 0, u2 = 0;
  for (double t : ta) {
    vt += t * (t - 1) * (2 * t + 5);
    t1 += t * (t - 1);
    t2 += t * (t - 1) * (t - 2);
  }
  for (double u : tb) {
    vu += u * (u - 1) * (2 * u + 5);
    u1 += u * (u - 1);
    u2 += u * (u - 1) * (u - 2);
  }
  double var = (nn * (nn - 1) * (2 * nn + 5) - vt - vu) / 18.0 + t1 * u1 / (2 * nn * (nn - 1));
  if (n > 2) var += t2 * u2 / (9 * nn * (nn - 1) * (nn - 2));
  r.p_approx = var > 0.0 ? std::erfc(std::abs(s) / std::sqrt(var) / std::sqrt(2.0)) : 1.0;
  r.p_approx = std::min(1.0, r.p_approx);
  return r;
}

std::string_view gradient_measure_name(GradientMeasure m) {
  return m == GradientMeasure::gradient_times_input ? "gxi" : "l2";
}

GradientMeasure parse_gradient_measure(std::string_view name) {
  if (name == "gxi") return GradientMeasure::gradient_times_input;
  if (name == "l2") return GradientMeasure::l2_norm;
  throw ValidationError("unknown gradient measure '" + std::string(name) + "' (gxi|l2)");
}

std::vector<double> gradient_attribution(const Model& model, std::span<const TokenIndex> tokens,
                                         GradientMeasure measure) {
  Tape tape;
  ForwardGraph g = model.build(tape, tokens);
  const Tensor& yhat = g.prediction.value();
  tape.backward(g.prediction, Tensor(yhat.shape(), 1.0 / static_cast<double>(yhat.size())));
  const Tensor grad = tape.grad(g.embedded);
  const Tensor& emb = g.embedded.value();
  const std::size_t T = tokens.size(), E = emb.cols();
  std::vector<double> scores(T, 0.0);
  double total = 0.0;
  std::size_t real = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (tokens[t] == Vocabulary::kPad) continue;
    ++real;
    double s = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
      const double gv = grad.at(t, e);
      s += measure == GradientMeasure::gradient_times_input ? gv * emb.at(t, e) : gv * gv;
    }
    scores[t] = measure == GradientMeasure::gradient_times_input ? std::abs(s) : std::sqrt(s);
    total += scores[t];
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (tokens[t] == Vocabulary::kPad) continue;
    scores[t] = total > 0.0 ? scores[t] / total : 1.0 / static_cast<double>(real);
  }
  return scores;
}

namespace {

// Entries of v at real-token positions.
std::vector<double> unmasked(std::span<const double> v, std::span<const std::uint8_t> mask) {
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) out.push_back(v[i]);
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::uint64_t instance_seed(std::uint64_t seed, const std::string& id) {
  return derive_seed(seed, "instance:" + id);
}

}  // namespace

GradientRecord gradient_experiment(const Model& model, const Document& doc,
                                   GradientMeasure measure) {
  GradientRecord r;
  r.id = doc.id;
  r.attention = model.forward(doc.tokens).attention.at(0);
  r.attribution = gradient_attribution(model, doc.tokens, measure);
  const auto mask = padding_mask(doc.tokens);
  const auto a = unmasked(r.attention, mask), g = unmasked(r.attribution, mask);
  if (a.size() >= 2) r.tau = kendall_tau(a, g);
  return r;
}

double output_change(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("output_change: prediction vectors differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double permuted_output_change(const Model& model, const Tensor& hidden,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> attention,
                              std::span<const double> permuted) {
  const AttentionOverride base{{{attention.begin(), attention.end()}}};
  const AttentionOverride perm{{{permuted.begin(), permuted.end()}}};
  return output_change(model.forward_from_hidden(hidden, mask, &base).prediction,
                       model.forward_from_hidden(hidden, mask, &perm).prediction);
}

PermutationRecord permutation_experiment(const Model& model, const Document& doc,
                                         std::size_t n_perms, std::uint64_t seed) {
  PermutationRecord r;
  r.id = doc.id;
  r.labels = doc.labels;
  const ModelOutput out = model.forward(doc.tokens);
  const auto& alpha = out.attention.at(0);
  r.max_attention = *std::max_element(alpha.begin(), alpha.end());
  const auto mask = padding_mask(doc.tokens);
  std::vector<std::size_t> positions;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) positions.push_back(t);

  const AttentionOverride base{{alpha}};
  r.yhat = model.forward_from_hidden(out.hidden, mask, &base).prediction;
  if (positions.size() <= 1) {
    r.trivial = true;
    r.deltas.assign(n_perms, 0.0);
    r.median_dy = 0.0;
    return r;
  }
  std::mt19937_64 rng(instance_seed(seed, doc.id));
  std::vector<double> values;
  for (auto t : positions) values.push_back(alpha[t]);
  std::vector<double> permuted(alpha.size(), 0.0);
  for (std::size_t k = 0; k < n_perms; ++k) {
    std::vector<double> shuffled = values;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t i = 0; i < positions.size(); ++i) permuted[positions[i]] = shuffled[i];
    const AttentionOverride ov{{permuted}};
    r.deltas.push_back(
        output_change(model.forward_from_hidden(out.hidden, mask, &ov).prediction, r.yhat));
  }
  r.median_dy = median(r.deltas);
  return r;
}

void AdversarialConfig::validate() const {
  if (!(eps > 0.0)) throw ValidationError("adversarial eps must be positive");
  if (restarts < 1) throw ValidationError("adversarial restarts must be >= 1");
  if (!(step_size > 0.0)) throw ValidationError("adversarial step size must be positive");
  if (!(penalty >= 0.0)) throw ValidationError("adversarial penalty must be >= 0");
}

namespace {

// Predictions for an attention distribution under the model's decoder:
// y_l = sigmoid(sum_t alpha_t * score[l][t] + bias_l), score = hidden . theta_l.
struct LinearHead {
  std::vector<std::vector<double>> score;  // [L][T]
  std::vector<double> bias;

  std::vector<double> predict(std::span<const double> alpha) const {
    std::vector<double> y;
    for (std::size_t l = 0; l < score.size(); ++l) {
      double z = bias[l];
      for (std::size_t t = 0; t < alpha.size(); ++t) z += alpha[t] * score[l][t];
      y.push_back(z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
    }
    return y;
  }
};

LinearHead linear_head(const Model& model, const Tensor& hidden) {
  const Tensor& theta = model.params().get("decoder.theta");
  const Tensor& bias = model.params().get("decoder.bias");
  const std::size_t L = theta.rows(), D = theta.cols(), T = hidden.rows();
  LinearHead h;
  h.score.assign(L, std::vector<double>(T, 0.0));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += hidden.at(t, d) * theta.at(l, d);
      h.score[l][t] = s;
    }
    h.bias.push_back(bias[l]);
  }
  return h;
}

std::vector<double> softmax_masked(std::span<const double> z, std::span<const std::uint8_t> mask) {
  double mx = -INFINITY;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (mask[i]) mx = std::max(mx, z[i]);
  std::vector<double> p(z.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (mask[i]) s += (p[i] = std::exp(z[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

double logit(double p) {
  if (p <= 0.0) return -INFINITY;
  if (p >= 1.0) return INFINITY;
  return std::log(p) - std::log1p(-p);
}

// x log(x / m) with m = (x + y) / 2; 0 log 0 = 0.
double jsd_term(double x, double y) { return x > 0.0 ? x * std::log(2.0 * x / (x + y)) : 0.0; }

// JSD(e_i, alpha).
double jsd_one_point(std::span<const double> alpha, std::size_t i) {
  const double rest = std::max(0.0, 1.0 - alpha[i]);
  return 0.5 * jsd_term(1.0, alpha[i]) + 0.5 * (rest * std::log(2.0) + jsd_term(alpha[i], 1.0));
}

// JSD(a e_i + b e_j, alpha) for i != j, a + b = 1.
double jsd_two_point(std::span<const double> alpha, std::size_t i, std::size_t j, double a,
                     double b) {
  const auto half = jsd_term;
  const double rest = std::max(0.0, 1.0 - alpha[i] - alpha[j]);
  return 0.5 * (half(a, alpha[i]) + half(b, alpha[j])) +
         0.5 * (rest * std::log(2.0) + half(alpha[i], a) + half(alpha[j], b));
}

// Single-label case: the feasible set is the simplex cut by a slab on
// sum_t alpha_t * score_t, so the JSD maximum lies on a point supported on
// at most two positions. Enumerates every such point exactly.
std::vector<double> best_feasible_vertex(const LinearHead& head, std::span<const double> alpha,
                                         std::span<const std::uint8_t> mask, double yhat,
                                         double eps) {
  const double margin = eps * (1.0 - 1e-9);
  const double lo = logit(yhat - margin) - head.bias[0];
  const double hi = logit(yhat + margin) - head.bias[0];
  const auto& s = head.score[0];
  std::vector<std::size_t> pos;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) pos.push_back(t);
  double best = -1.0;
  std::size_t bi = 0, bj = 0;
  double bw = 0.0;
  auto offer = [&](std::size_t i, std::size_t j, double w) {
    const double d = i == j ? jsd_one_point(alpha, i) : jsd_two_point(alpha, i, j, 1.0 - w, w);
    if (d > best) {
      best = d;
      bi = i;
      bj = j;
      bw = w;
    }
  };
  for (std::size_t a = 0; a < pos.size(); ++a) {
    const std::size_t i = pos[a];
    if (s[i] >= lo && s[i] <= hi) offer(i, i, 0.0);
    for (std::size_t b = a + 1; b < pos.size(); ++b) {
      const std::size_t j = pos[b];
      // z(w) = s_i + w (s_j - s_i), w in [0, 1]
      const double slope = s[j] - s[i];
      if (slope == 0.0) continue;
      for (double bound : {lo, hi}) {
        if (!std::isfinite(bound)) continue;
        const double w = (bound - s[i]) / slope;
        if (w > 0.0 && w < 1.0) offer(i, j, w);
      }
    }
  }
  if (best < 0.0) return {};
  std::vector<double> out(alpha.size(), 0.0);
  if (bi == bj) {
    out[bi] = 1.0;
  } else {
    out[bi] = 1.0 - bw;
    out[bj] = bw;
  }
  return out;
}

}  // namespace

AdversarialRecord adversarial_attention_search(const Model& model, const Document& doc,
                                               const AdversarialConfig& config,
                                               std::uint64_t seed) {
  config.validate();
  AdversarialRecord r;
  r.id = doc.id;
  r.tokens = doc.tokens;
  const ModelOutput out = model.forward(doc.tokens);
  const auto mask = padding_mask(doc.tokens);
  r.attention = out.attention.at(0);
  r.max_attention = *std::max_element(r.attention.begin(), r.attention.end());
  const AttentionOverride base{{r.attention}};
  r.yhat = model.forward_from_hidden(out.hidden, mask, &base).prediction;
  r.adversarial = r.attention;
  r.yhat_adversarial = r.yhat;

  const std::size_t T = r.attention.size();
  const LinearHead head = linear_head(model, out.hidden);
  const std::size_t L = head.score.size();
  std::mt19937_64 rng(instance_seed(seed, doc.id));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  double best_jsd = -1.0;
  std::vector<double> best;
  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    std::vector<double> z(T, 0.0), m(T, 0.0), v(T, 0.0), g_alpha(T), g_z(T);
    for (std::size_t t = 0; t < T; ++t)
      if (mask[t]) z[t] = std::log(std::max(r.attention[t], 1e-300)) + noise(rng);
    auto consider = [&](std::span<const double> logits) {
      const auto alpha = softmax_masked(logits, mask);
      const bool ok = output_change(head.predict(alpha), r.yhat) <= config.eps;
      const double div = jsd(alpha, r.attention);
      if (ok && div > best_jsd) {
        best_jsd = div;
        best = alpha;
      }
      return ok;
    };
    std::vector<double> z_prev;
    for (std::size_t step = 1; step <= config.steps; ++step) {
      const auto alpha = softmax_masked(z, mask);
      const auto y = head.predict(alpha);
      const double dy = output_change(y, r.yhat);
      if (consider(z)) {
        z_prev = z;
      } else if (!z_prev.empty()) {
        // Bisect the step that left the feasible set to land on its boundary.
        std::vector<double> lo = z_prev, hi = z, mid(T);
        for (int it = 0; it < 30; ++it) {
          for (std::size_t t = 0; t < T; ++t) mid[t] = 0.5 * (lo[t] + hi[t]);
          (consider(mid) ? lo : hi) = mid;
        }
        z_prev.clear();
      }
      // d JSD / d alpha_t = 0.5 * log(alpha_t / m_t)
      for (std::size_t t = 0; t < T; ++t) {
        g_alpha[t] = 0.0;
        if (!mask[t] || alpha[t] <= 0.0) continue;
        g_alpha[t] = 0.5 * std::log(alpha[t] / (0.5 * (alpha[t] + r.attention[t])));
      }
      if (dy > config.eps) {
        for (std::size_t l = 0; l < L; ++l) {
          const double sign = y[l] > r.yhat[l] ? 1.0 : (y[l] < r.yhat[l] ? -1.0 : 0.0);
          const double c = config.penalty * sign * y[l] * (1.0 - y[l]) / static_cast<double>(L);
          for (std::size_t t = 0; t < T; ++t) g_alpha[t] -= c * head.score[l][t];
        }
      }
      // Softmax Jacobian: g_z = alpha * (g_alpha - <g_alpha, alpha>).
      double inner = 0.0;
      for (std::size_t t = 0; t < T; ++t) inner += g_alpha[t] * alpha[t];
      for (std::size_t t = 0; t < T; ++t) g_z[t] = mask[t] ? alpha[t] * (g_alpha[t] - inner) : 0.0;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[t]) continue;
        m[t] = beta1 * m[t] + (1.0 - beta1) * g_z[t];
        v[t] = beta2 * v[t] + (1.0 - beta2) * g_z[t] * g_z[t];
        z[t] += config.step_size * (m[t] / c1) / (std::sqrt(v[t] / c2) + adam_eps);
      }
    }
    // Line search along the final logit ray; sharper scales reach vertices
    // of the simplex that the fixed step budget cannot.
    for (int k = 0; k <= 24; ++k) {
      const double c = std::exp2(0.25 * k);
      std::vector<double> zc(T);
      for (std::size_t t = 0; t < T; ++t) zc[t] = c * z[t];
      consider(zc);
    }
  }

  if (L == 1) {
    const auto vertex = best_feasible_vertex(head, r.attention, mask, r.yhat[0], config.eps);
    if (!vertex.empty() && jsd(vertex, r.attention) > best_jsd) best = vertex;
  }

  if (!best.empty()) {
    // Independent check through the model's own forward pass.
    const AttentionOverride ov{{best}};
    const auto y = model.forward_from_hidden(out.hidden, mask, &ov).prediction;
    const double dy = output_change(y, r.yhat);
    if (dy <= config.eps) {
      r.feasible = true;
      r.adversarial = best;
      r.yhat_adversarial = y;
      r.eps_max_jsd = jsd(best, r.attention);
      r.dy = dy;
    }
  }
  return r;
}

SwapResult logodds_swap_eval(const Model& model, const Dataset& dataset, Split split,
                             const LogOddsTable& table, bool use_abs, std::size_t jobs) {
  if (model.vocab_hash() != dataset.vocabulary.hash() || table.vocab_hash != model.vocab_hash())
    throw ValidationError("model, dataset and log-odds table use different vocabularies");
  if (table.label_count() != model.config().label_count)
    throw ValidationError("log-odds table label count does not match the model");
  const auto docs = dataset.split(split);
  SwapResult result;
  result.records.resize(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    const Document& doc = *docs[i];
    const ModelOutput out = model.forward(doc.tokens);
    const AttentionOverride lo = log_odds_override(doc.tokens, table, use_abs);
    SwapRecord& r = result.records[i];
    r.id = doc.id;
    r.yhat = out.prediction;
    r.yhat_logodds = model.forward_from_hidden(out.hidden, padding_mask(doc.tokens), &lo).prediction;
    double div = 0.0;
    for (const auto& d : lo.distributions) div += jsd(out.attention.at(0), d);
    r.jsd = div / static_cast<double>(lo.distributions.size());
    r.dy = output_change(r.yhat, r.yhat_logodds);
  });
  std::vector<std::vector<double>> orig, swapped;
  for (const auto& r : result.records) {
    orig.push_back(r.yhat);
    swapped.push_back(r.yhat_logodds);
  }
  result.original = evaluate_predictions(orig, dataset, split);
  result.swapped = evaluate_predictions(swapped, dataset, split);
  return result;
}

AttentionProvider logodds_provider(const LogOddsTable& table, bool use_abs) {
  return [table, use_abs](const Document& doc) -> std::optional<AttentionOverride> {
    return log_odds_override(doc.tokens, table, use_abs);
  };
}

TrainResult train_with_frozen_logodds(const Dataset& dataset, const LogOddsTable& table,
                                      EncoderConfig config, const TrainConfig& train_config,
                                      const EmbeddingMatrix& embeddings, std::uint64_t init_seed,
                                      bool use_abs) {
  if (table.vocab_hash != dataset.vocabulary.hash())
    throw ValidationError("log-odds table vocabulary does not match dataset vocabulary");
  if (table.label_count() != dataset.label_count)
    throw ValidationError("log-odds table label count does not match dataset");
  config.attention = AttentionKind::frozen_external;
  config.label_count = dataset.label_count;
  const Model init = Model::initialize(config, embeddings, init_seed, dataset.vocabulary.hash());
  return train(init, dataset, train_config, logodds_provider(table, use_abs));
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);  // lowest index first
}

std::vector<GradientRecord> run_gradient_audit(const Model& model, const Dataset& dataset,
                                               Split split, GradientMeasure measure,
                                               std::size_t jobs) {
  const auto docs = dataset.split(split);
  std::vector<GradientRecord> out(docs.size());
  parallel_for(docs.size(), jobs,
               [&](std::size_t i) { out[i] = gradient_experiment(model, *docs[i], measure); });
  return out;
}

std::vector<PermutationRecord> run_permutation_audit(const Model& model, const Dataset& dataset,
                                                     Split split, std::size_t n_perms,
                                                     std::uint64_t seed, std::size_t jobs) {
  const auto docs = dataset.split(split);
  std::vector<PermutationRecord> out(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    out[i] = permutation_experiment(model, *docs[i], n_perms, seed);
  });
  return out;
}

std::vector<AdversarialRecord> run_adversarial_audit(const Model& model, const Dataset& dataset,
                                                     Split split, const AdversarialConfig& config,
                                                     std::uint64_t seed, std::size_t jobs) {
  config.validate();
  const auto docs = dataset.split(split);
  std::vector<AdversarialRecord> out(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    out[i] = adversarial_attention_search(model, *docs[i], config, seed);
  });
  return out;
}

namespace {

std::string mean_text(const std::vector<double>& v) {
  return format_double(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
}

std::string label_text(const std::vector<int>& labels) {
  std::string s;
  for (int l : labels) s += l ? '1' : '0';
  return s;
}

}  // namespace

std::string gradients_csv(const std::vector<GradientRecord>& records) {
  std::string out = "id,tau,p_approx\n";
  for (const auto& r : records)
    out += csv_line({r.id, r.tau ? format_double(r.tau->tau) : "",
                     r.tau ? format_double(r.tau->p_approx) : ""});
  return out;
}

std::string permutation_csv(const std::vector<PermutationRecord>& records) {
  std::string out = "id,label,yhat,max_attn,median_dy\n";
  for (const auto& r : records)
    out += csv_line({r.id, label_text(r.labels), mean_text(r.yhat), format_double(r.max_attention),
                     format_double(r.median_dy)});
  return out;
}

std::string adversarial_csv(const std::vector<AdversarialRecord>& records) {
  std::string out = "id,yhat,max_attn,eps_max_jsd,dy,feasible\n";
  for (const auto& r : records)
    out += csv_line({r.id, mean_text(r.yhat), format_double(r.max_attention),
                     format_double(r.eps_max_jsd), format_double(r.dy), r.feasible ? "1" : "0"});
  return out;
}

std::string adversarial_jsonl(const std::vector<AdversarialRecord>& records,
                              const Vocabulary& vocab) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["tokens"] = decode(r.tokens, vocab);
    j["original"] = r.attention;
    j["adversarial"] = r.adversarial;
    j["yhat"] = r.yhat;
    j["yhat_adversarial"] = r.yhat_adversarial;
    j["feasible"] = r.feasible;
    out += j.dump() + "\n";
  }
  return out;
}

std::string swap_csv(const std::vector<SwapRecord>& records) {
  std::string out = "id,yhat,yhat_lo,jsd,dy\n";
  for (const auto& r : records)
    out += csv_line({r.id, mean_text(r.yhat), mean_text(r.yhat_logodds), format_double(r.jsd),
                     format_double(r.dy)});
  return out;
}

}  // namespace attnaudit
