// Acceptance criteria runner. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Arguments select criteria by
// number; no arguments runs all eight.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attnaudit/audit.hpp"
#include "attnaudit/cli.hpp"
#include "attnaudit/lr_baseline.hpp"
#include "attnaudit/util.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace attnaudit;
using namespace attnaudit::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int digits = 4) { return format_fixed(v, digits); }

// ---------------------------------------------------------------------------
// Planted-signal corpus and the models trained on it, shared by 2, 4, 5, 8.

struct Planted {
  Dataset dataset;
  std::optional<Model> attentive;
  std::optional<Model> inattentive;
  double train_seconds = 0.0;
};

Planted& planted() {
  static Planted p = [] {
    SyntheticCorpusParams params;  // 2000 docs, length 200, vocab 100, one trigger
    params.seed = 1;
    return Planted{generate_synthetic_corpus(params), std::nullopt, std::nullopt, 0.0};
  }();
  return p;
}

EncoderConfig planted_encoder(AttentionKind attention) {
  EncoderConfig c;
  c.kind = EncoderKind::bilstm;
  c.embedding_dim = 32;
  c.lstm_hidden = 16;
  c.attention_dim = 16;
  c.attention = attention;
  return c;
}

Model train_planted(AttentionKind attention, std::uint64_t seed) {
  const Dataset& d = planted().dataset;
  const EncoderConfig c = planted_encoder(attention);
  const Model init = Model::initialize(c, load_embeddings("none", d.vocabulary, c.embedding_dim, seed + 1),
                                       seed, d.vocabulary.hash());
  TrainConfig t;  // lr 1e-3, batch 32, patience 5, at most 40 epochs
  t.seed = seed + 2;
  return train(init, d, t).model;
}

const Model& attentive_model() {
  Planted& p = planted();
  if (!p.attentive) {
    Stopwatch w;
    p.attentive = train_planted(AttentionKind::additive, 3);
    p.train_seconds += w.seconds();
  }
  return *p.attentive;
}

const Model& inattentive_model() {
  Planted& p = planted();
  if (!p.inattentive) {
    Stopwatch w;
    p.inattentive = train_planted(AttentionKind::none, 3);
    p.train_seconds += w.seconds();
  }
  return *p.inattentive;
}

// ---------------------------------------------------------------------------

// Smallest |pre-activation| of any ReLU in the encoder; central differences
// with step h are only valid when this exceeds h times the input scale.
double relu_margin(const Model& m, const std::vector<TokenIndex>& tokens) {
  const EncoderConfig& c = m.config();
  if (c.kind == EncoderKind::bilstm) return std::numeric_limits<double>::infinity();
  Tape tape;
  const Var x = tape.constant(m.build(tape, tokens).embedded.value());
  std::vector<Var> pre;
  if (c.kind == EncoderKind::cnn) {
    for (auto k : c.cnn_kernels) {
      const std::string prefix = "encoder.conv.k" + std::to_string(k);
      pre.push_back(ops::add(ops::conv1d_same(x, tape.constant(m.params().get(prefix + ".weight"))),
                             tape.constant(m.params().get(prefix + ".bias"))));
    }
  } else {
    pre.push_back(ops::add(ops::matmul(x, tape.constant(m.params().get("encoder.proj.weight"))),
                           tape.constant(m.params().get("encoder.proj.bias"))));
  }
  double margin = std::numeric_limits<double>::infinity();
  for (const Var& z : pre)
    for (double v : z.value().values()) margin = std::min(margin, std::abs(v));
  return margin;
}

Outcome criterion_gradients() {
  Stopwatch w;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> length(1, 6);
  const Vocabulary v = toy_vocabulary(12);
  double worst_rel = 0.0;
  std::string worst_where;
  std::size_t instances = 0, failures = 0;
  for (auto kind : {EncoderKind::bilstm, EncoderKind::cnn, EncoderKind::projection})
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const Model m = tiny_model(tiny_config(kind, 8, 8), v, 100 + seed);
      std::vector<TokenIndex> tokens;
      do {
        tokens = random_tokens(length(rng), v, rng);
        if (tokens.size() > 2 && seed % 2) tokens.back() = Vocabulary::kPad;
      } while (relu_margin(m, tokens) < 1e-3);
      const auto r = check_model_gradients(m, tokens, 1e-4, 1e-6);
      ++instances;
      if (!r.ok) ++failures;
      if (r.worst.worst_relative > worst_rel) {
        worst_rel = r.worst.worst_relative;
        worst_where = std::string(encoder_name(kind)) + ":" + r.worst_parameter;
      }
    }
  const double secs = w.seconds();
  return {failures == 0 && secs < 30.0,
          std::to_string(instances) + " instances, " + std::to_string(failures) +
              " outside tolerance, worst relative error " + format_double(worst_rel) + " (" +
              worst_where + "), " + fixed(secs, 1) + " s (limit 30 s)"};
}

Outcome criterion_attention_benefit() {
  Stopwatch w;
  const Dataset& d = planted().dataset;
  const double att = evaluate(attentive_model(), d, Split::test).macro_auc;
  const double inatt = evaluate(inattentive_model(), d, Split::test).macro_auc;
  const double secs = w.seconds();
  const bool pass = att - inatt >= 0.05 && att >= 0.95 && secs < 600.0;
  return {pass, "attentive test AUC " + fixed(att) + ", inattentive " + fixed(inatt) + ", gap " +
                    fixed(att - inatt) + " (need >= 0.05, attentive >= 0.95), " + fixed(secs, 0) +
                    " s (limit 600 s)"};
}

Outcome criterion_permutation() {
  SyntheticCorpusParams p;
  p.n_docs = 300;
  p.doc_len = 4;
  p.vocab_size = 20;
  p.seed = 5;
  const Dataset d = generate_synthetic_corpus(p);
  const Model init = tiny_model(tiny_config(EncoderKind::bilstm, 8, 8), d.vocabulary, 7);
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.max_epochs = 10;
  t.seed = 8;
  const Model m = train(init, d, t).model;

  std::size_t checked = 0, outside = 0, foreign = 0;
  for (const auto* doc : d.split(Split::test)) {
    const ModelOutput out = m.forward(doc->tokens);
    const auto mask = padding_mask(doc->tokens);
    const auto& alpha = out.attention[0];
    std::vector<double> exhaustive;
    std::vector<std::size_t> perm{0, 1, 2, 3};
    do {
      std::vector<double> a(4);
      for (std::size_t i = 0; i < 4; ++i) a[i] = alpha[perm[i]];
      const AttentionOverride ov{{a}};
      exhaustive.push_back(std::abs(m.forward_from_hidden(out.hidden, mask, &ov).prediction[0] -
                                    out.prediction[0]));
    } while (std::next_permutation(perm.begin(), perm.end()));
    // The median of any subsample of the 24 values lies within their range.
    const auto [lo, hi] = std::minmax_element(exhaustive.begin(), exhaustive.end());
    const auto r = permutation_experiment(m, *doc, 100, 11);
    for (double dlt : r.deltas)
      if (std::none_of(exhaustive.begin(), exhaustive.end(),
                       [&](double e) { return std::abs(e - dlt) <= 1e-12; }))
        ++foreign;
    if (r.median_dy < *lo || r.median_dy > *hi) ++outside;
    ++checked;
  }

  Model uniform = m;
  for (double& x : uniform.params().get_mutable("attention.v").values()) x = 0.0;
  std::size_t nonzero = 0;
  for (const auto* doc : d.split(Split::test))
    if (permutation_experiment(uniform, *doc, 100, 11).median_dy != 0.0) ++nonzero;

  return {checked > 0 && outside == 0 && foreign == 0 && nonzero == 0,
          std::to_string(checked) + " instances: " + std::to_string(outside) +
              " medians outside the exhaustive range, " + std::to_string(foreign) +
              " sampled deltas not among the 24 exhaustive values; uniform attention: " +
              std::to_string(nonzero) + " non-zero medians"};
}

Outcome criterion_adversarial() {
  const Dataset& d = planted().dataset;
  const Model& m = attentive_model();
  const AdversarialConfig config;
  const auto records = run_adversarial_audit(m, d, Split::test, config, 13);
  std::size_t feasible = 0, valid = 0;
  const auto docs = d.split(Split::test);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].feasible) continue;
    ++feasible;
    const AttentionOverride ov{{records[i].adversarial}};
    const auto y = m.forward(docs[i]->tokens, &ov).prediction;
    const auto y0 = m.forward(docs[i]->tokens).prediction;
    if (output_change(y, y0) <= config.eps + 1e-9) ++valid;
  }
  const double share = feasible ? static_cast<double>(valid) / static_cast<double>(feasible) : 0.0;

  Model flat = m;
  for (double& x : flat.params().get_mutable("decoder.theta").values()) x = 0.0;
  double min_jsd = std::log(2.0);
  const std::size_t n = std::min<std::size_t>(20, docs.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = adversarial_attention_search(flat, *docs[i], config, 17);
    min_jsd = std::min(min_jsd, r.feasible ? r.eps_max_jsd : 0.0);
  }
  return {feasible > 0 && share >= 0.95 && min_jsd >= 0.67,
          std::to_string(valid) + "/" + std::to_string(feasible) +
              " feasible results re-evaluate within eps (" + fixed(100 * share, 1) +
              "%, need >= 95%); theta=0 min eps-max JSD over " + std::to_string(n) +
              " documents " + fixed(min_jsd) + " (need >= 0.67)"};
}

Outcome criterion_logodds() {
  const Dataset& d = planted().dataset;
  const auto table = LogOddsTable::from_model(train_lr(d));
  const SwapResult swap = logodds_swap_eval(attentive_model(), d, Split::test, table);
  TrainConfig t;
  t.seed = 21;
  const EncoderConfig c = planted_encoder(AttentionKind::frozen_external);
  const TrainResult frozen = train_with_frozen_logodds(
      d, table, c, t, load_embeddings("none", d.vocabulary, c.embedding_dim, 22), 23);
  const double frozen_auc = evaluate(frozen.model, d, Split::test, logodds_provider(table)).macro_auc;
  const double orig = swap.original.macro_auc, swapped = swap.swapped.macro_auc;
  return {swapped >= orig - 0.05 && frozen_auc >= 0.9,
          "original AUC " + fixed(orig) + ", swap-at-test AUC " + fixed(swapped) +
              " (need >= original - 0.05); frozen log-odds model AUC " + fixed(frozen_auc) +
              " (need >= 0.9)"};
}

Outcome criterion_tau_jsd() {
  std::size_t perms = 0, tau_bad = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<double> base(n), other(n);
    std::iota(base.begin(), base.end(), 0.0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      long s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        other[i] = perm[i];
        for (std::size_t j = i + 1; j < n; ++j) s += perm[i] < perm[j] ? 1 : -1;
      }
      const double expected = static_cast<double>(s) / static_cast<double>(n * (n - 1) / 2);
      const auto t = kendall_tau(base, other);
      if (!t || std::abs(t->tau - expected) > 1e-15) ++tau_bad;
      ++perms;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t jsd_bad = 0, pairs = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
    std::vector<double> p(n), q(n);
    for (auto& x : p) x = u(rng);
    for (auto& x : q) x = u(rng) < 0.25 ? 0.0 : u(rng);
    q[0] += 0.1;
    const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    if (jsd(p, p) != 0.0 || jsd(p, q) != jsd(q, p)) ++jsd_bad;
    // Disjoint supports: p on the first half, q on the second.
    std::vector<double> a(2 * n, 0.0), b(2 * n, 0.0);
    std::copy(p.begin(), p.end(), a.begin());
    std::copy(q.begin(), q.end(), b.begin() + static_cast<std::ptrdiff_t>(n));
    if (std::abs(jsd(a, b) - std::log(2.0)) > 1e-12) ++jsd_bad;
    ++pairs;
  }
  return {tau_bad == 0 && jsd_bad == 0,
          std::to_string(perms) + " permutations (n = 2..6), " + std::to_string(tau_bad) +
              " tau mismatches; " + std::to_string(pairs) + " distribution pairs, " +
              std::to_string(jsd_bad) + " JSD identity/symmetry/disjointness violations"};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  return files;
}

Outcome criterion_determinism() {
  const fs::path base = fs::temp_directory_path() / "attnaudit_acceptance_determinism";
  fs::remove_all(base);
  const std::string config = (fs::path(ATTNAUDIT_SOURCE_DIR) / "configs" / "smoke.json").string();
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const int code = run_cli({"attnaudit", "all", "--config", config, "--out", (base / run).string()}, sink, sink);
    if (code != 0) return {false, std::string("pipeline run ") + run + " exited with " + std::to_string(code)};
  }
  auto a = tree_contents(base / "a"), b = tree_contents(base / "b");
  // config.json records the output directory itself.
  a.erase("config.json");
  b.erase("config.json");
  std::size_t differing = 0, by_kind[4] = {0, 0, 0, 0};
  for (const auto& [path, bytes] : a) {
    const auto it = b.find(path);
    if (it == b.end() || it->second != bytes) ++differing;
    const auto ext = fs::path(path).extension().string();
    if (path.rfind("manifests/", 0) == 0 || path == "report/manifest.json") ++by_kind[0];
    else if (ext == ".ckpt") ++by_kind[1];
    else if (ext == ".csv") ++by_kind[2];
    else if (ext == ".svg") ++by_kind[3];
  }
  const bool same_set = a.size() == b.size();
  fs::remove_all(base);
  return {same_set && differing == 0 && by_kind[0] > 0 && by_kind[1] > 0 && by_kind[2] > 0 && by_kind[3] > 0,
          std::to_string(a.size()) + " files compared (" + std::to_string(by_kind[0]) + " manifests, " +
              std::to_string(by_kind[1]) + " checkpoints, " + std::to_string(by_kind[2]) + " CSVs, " +
              std::to_string(by_kind[3]) + " SVGs), " + std::to_string(differing) + " differ"};
}

Outcome criterion_lr() {
  const Dataset tiny = tiny_dataset();
  LrConfig c;
  c.l2 = 0.1;
  const LRModel m = train_lr(tiny, c);
  const auto w = newton_oracle(tiny, c.l2);
  double worst = std::abs(m.bias[0] - w[3]);
  for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(m.beta[0][3 + k] - w[k]));
  const double auc = evaluate_lr(train_lr(planted().dataset), planted().dataset, Split::test).macro_auc;
  return {worst <= 1e-4 && auc >= 0.95,
          "max coefficient difference from Newton reference " + format_double(worst) +
              " (need <= 1e-4); planted-corpus LR test AUC " + fixed(auc) + " (need >= 0.95)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion_gradients},   {2, criterion_attention_benefit}, {3, criterion_permutation},
      {4, criterion_adversarial}, {5, criterion_logodds},           {6, criterion_tau_jsd},
      {7, criterion_determinism}, {8, criterion_lr}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("CRITERION %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
