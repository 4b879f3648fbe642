#include "attnaudit/lr_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "attnaudit/util.hpp"

namespace attnaudit {

SparseCounts featurize_bow(std::span<const TokenIndex> tokens) {
  std::map<TokenIndex, double> counts;
  for (auto t : tokens)
    if (t != Vocabulary::kPad) counts[t] += 1.0;
  return {counts.begin(), counts.end()};
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double margin(const SparseCounts& x, std::span<const double> beta, double bias) {
  double z = bias;
  for (const auto& [w, c] : x) z += beta[static_cast<std::size_t>(w)] * c;
  return z;
}

}  // namespace

double lr_objective(const std::vector<SparseCounts>& features, std::span<const int> labels,
                    std::span<const double> beta, double bias, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double z = margin(features[i], beta, bias);
    loss += labels[i] ? softplus(-z) : softplus(z);
  }
  double sq = 0.0;
  for (double b : beta) sq += b * b;
  return loss / static_cast<double>(features.size()) + 0.5 * l2 * sq;
}

LRModel train_lr(const Dataset& dataset, const LrConfig& config) {
  if (!(config.l2 >= 0.0)) throw ValidationError("LR l2 coefficient must be >= 0");
  const auto docs = dataset.split(Split::train);
  if (docs.empty()) throw ValidationError("LR training split is empty");
  const std::size_t V = dataset.vocabulary.size();
  const double N = static_cast<double>(docs.size());
  std::vector<SparseCounts> features;
  for (const auto* d : docs) features.push_back(featurize_bow(d->tokens));

  LRModel model;
  model.l2 = config.l2;
  model.vocab_hash = dataset.vocabulary.hash();
  for (std::size_t l = 0; l < dataset.label_count; ++l) {
    std::vector<int> y;
    for (const auto* d : docs) y.push_back(d->labels.at(l));
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size()))
      throw ValidationError("label " + std::to_string(l) + " has a single class in the train split");

    std::vector<double> beta(V, 0.0), grad(V), trial(V);
    double bias = 0.0;
    double f = lr_objective(features, y, beta, bias, config.l2);
    std::vector<double> trace{f};
    bool converged = false;
    double step = 1.0;
    for (std::size_t it = 0; it < config.max_iterations; ++it) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double gbias = 0.0;
      for (std::size_t i = 0; i < features.size(); ++i) {
        const double r = (sigmoid(margin(features[i], beta, bias)) - y[i]) / N;
        gbias += r;
        for (const auto& [w, c] : features[i]) grad[static_cast<std::size_t>(w)] += r * c;
      }
      double gnorm2 = gbias * gbias;
      for (std::size_t j = 0; j < V; ++j) {
        grad[j] += config.l2 * beta[j];
        gnorm2 += grad[j] * grad[j];
      }
      if (std::sqrt(gnorm2) < config.tolerance) {
        converged = true;
        break;
      }
      // Armijo backtracking: accept the first step with sufficient decrease.
      double f_new = f, trial_bias = bias;
      for (;;) {
        for (std::size_t j = 0; j < V; ++j) trial[j] = beta[j] - step * grad[j];
        trial_bias = bias - step * gbias;
        f_new = lr_objective(features, y, trial, trial_bias, config.l2);
        if (f_new <= f - 0.5 * step * gnorm2 || step < 1e-20) break;
        step *= 0.5;
      }
      if (!(f_new < f)) break;  // no further progress in floating point
      beta.swap(trial);
      bias = trial_bias;
      f = f_new;
      trace.push_back(f);
      step *= 2.0;
    }
    model.beta.push_back(std::move(beta));
    model.bias.push_back(bias);
    model.objective_trace.push_back(std::move(trace));
    model.converged.push_back(converged);
  }
  return model;
}

std::vector<double> predict_lr(const LRModel& model, std::span<const TokenIndex> tokens) {
  const auto x = featurize_bow(tokens);
  std::vector<double> out;
  for (std::size_t l = 0; l < model.beta.size(); ++l) {
    for (const auto& [w, c] : x)
      if (static_cast<std::size_t>(w) >= model.beta[l].size())
        throw std::invalid_argument("token index outside the LR vocabulary");
    out.push_back(sigmoid(margin(x, model.beta[l], model.bias[l])));
  }
  return out;
}

EvalResult evaluate_lr(const LRModel& model, const Dataset& dataset, Split split) {
  if (model.vocab_hash != dataset.vocabulary.hash())
    throw ValidationError("LR model vocabulary does not match dataset vocabulary");
  std::vector<std::vector<double>> preds;
  for (const auto* d : dataset.split(split)) preds.push_back(predict_lr(model, d->tokens));
  return evaluate_predictions(preds, dataset, split);
}

std::string LRModel::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["l2"] = l2;
  j["vocab_hash"] = vocab_hash;
  j["bias"] = bias;
  j["beta"] = beta;
  j["converged"] = converged;
  return j.dump();
}

LRModel LRModel::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed LR model: ") + e.what());
  }
  LRModel m;
  try {
    if (j.at("format_version").get<int>() != 1) throw ValidationError("unsupported LR model version");
    m.l2 = j.at("l2").get<double>();
    m.vocab_hash = j.at("vocab_hash").get<std::string>();
    m.bias = j.at("bias").get<std::vector<double>>();
    m.beta = j.at("beta").get<std::vector<std::vector<double>>>();
    m.converged = j.at("converged").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed LR model: ") + e.what());
  }
  if (m.beta.size() != m.bias.size()) throw ValidationError("LR model label counts disagree");
  return m;
}

LogOddsTable LogOddsTable::from_model(const LRModel& model) {
  return {model.beta, model.vocab_hash};
}

std::string LogOddsTable::to_csv(const Vocabulary& vocab) const {
  if (vocab.hash() != vocab_hash) throw ValidationError("log-odds table vocabulary mismatch");
  std::string out = "word,label,beta\n";
  for (std::size_t w = 0; w < vocab.size(); ++w)
    for (std::size_t l = 0; l < beta.size(); ++l)
      out += csv_line({vocab.word(static_cast<TokenIndex>(w)), std::to_string(l),
                       format_double(beta[l][w])});
  return out;
}

std::vector<double> log_odds_attention(std::span<const TokenIndex> tokens,
                                       const LogOddsTable& table, std::size_t label,
                                       bool use_abs) {
  if (label >= table.beta.size()) throw std::invalid_argument("log-odds label out of range");
  const auto& b = table.beta[label];
  std::vector<double> out(tokens.size(), 0.0);
  double mx = -INFINITY;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == Vocabulary::kPad) continue;
    const auto w = static_cast<std::size_t>(tokens[t]);
    if (w >= b.size()) throw std::invalid_argument("token index outside the log-odds table");
    out[t] = use_abs ? std::abs(b[w]) : b[w];
    mx = std::max(mx, out[t]);
  }
  if (mx == -INFINITY) throw std::invalid_argument("log-odds attention over an all-padding document");
  double z = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == Vocabulary::kPad) continue;
    out[t] = std::exp(out[t] - mx);
    z += out[t];
  }
  for (auto& v : out) v /= z;
  return out;
}

AttentionOverride log_odds_override(std::span<const TokenIndex> tokens,
                                    const LogOddsTable& table, bool use_abs) {
  AttentionOverride ov;
  for (std::size_t l = 0; l < table.label_count(); ++l)
    ov.distributions.push_back(log_odds_attention(tokens, table, l, use_abs));
  return ov;
}

}  // namespace attnaudit
