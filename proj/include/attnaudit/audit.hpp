#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnaudit/corpus.hpp"
#include "attnaudit/lr_baseline.hpp"
#include "attnaudit/models.hpp"
#include "attnaudit/training.hpp"

namespace attnaudit {

// ---------------------------------------------------------------------------
// Divergences and rank correlation

/// Jensen-Shannon divergence in nats; 0 log 0 := 0. Result lies in [0, ln 2].
double jsd(std::span<const double> p, std::span<const double> q);

struct KendallTau {
  double tau = 0.0;       // tau-b
  double p_approx = 1.0;  // two-sided, normal approximation with tie correction
};

/// Tau-b over all pairs. nullopt when either input is constant.
/// Throws std::invalid_argument for fewer than two entries or unequal lengths.
std::optional<KendallTau> kendall_tau(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Gradient attribution

enum class GradientMeasure { gradient_times_input, l2_norm };
std::string_view gradient_measure_name(GradientMeasure m);  // "gxi" | "l2"
GradientMeasure parse_gradient_measure(std::string_view name);

/// Per-token importance from the gradient of the mean prediction with respect
/// to each token embedding, normalized to sum to one over real tokens.
/// Falls back to uniform when every score is zero. Padding scores zero.
std::vector<double> gradient_attribution(const Model& model, std::span<const TokenIndex> tokens,
                                         GradientMeasure measure = GradientMeasure::gradient_times_input);

struct GradientRecord {
  std::string id;
  std::optional<KendallTau> tau;  // attention vs gradient attribution
  std::vector<double> attention;
  std::vector<double> attribution;
};

GradientRecord gradient_experiment(const Model& model, const Document& doc,
                                   GradientMeasure measure);

// ---------------------------------------------------------------------------
// Output change between two prediction vectors: mean absolute per-label difference.
double output_change(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Permutation

struct PermutationRecord {
  std::string id;
  std::vector<int> labels;
  std::vector<double> yhat;
  double max_attention = 0.0;
  double median_dy = 0.0;
  std::vector<double> deltas;  // one per permutation, in sampling order
  bool trivial = false;        // at most one real token
};

/// Output change when the attention weights over real tokens are replaced by
/// `permuted` (same length as the sequence).
double permuted_output_change(const Model& model, const Tensor& hidden,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> attention,
                              std::span<const double> permuted);

PermutationRecord permutation_experiment(const Model& model, const Document& doc,
                                         std::size_t n_perms, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Adversarial attention

struct AdversarialConfig {
  double eps = 0.01;
  std::size_t restarts = 5;
  std::size_t steps = 500;
  double step_size = 0.01;
  double penalty = 500.0;

  void validate() const;
};

struct AdversarialRecord {
  std::string id;
  std::vector<TokenIndex> tokens;
  std::vector<double> yhat;
  std::vector<double> yhat_adversarial;
  std::vector<double> attention;
  std::vector<double> adversarial;
  double max_attention = 0.0;
  double eps_max_jsd = 0.0;
  double dy = 0.0;
  bool feasible = false;
};

/// Maximizes JSD(alpha', alpha) - penalty * max(0, dy - eps) over attention
/// logits with Adam-style ascent from `restarts` noisy starts around log alpha.
/// Returns the feasible candidate (dy <= eps, re-evaluated by a forward pass)
/// with the largest JSD, or the original attention with `feasible` false.
AdversarialRecord adversarial_attention_search(const Model& model, const Document& doc,
                                               const AdversarialConfig& config,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Log-odds attention

struct SwapRecord {
  std::string id;
  std::vector<double> yhat;
  std::vector<double> yhat_logodds;
  double jsd = 0.0;  // JSD(alpha, alpha_LO), averaged over labels
  double dy = 0.0;
};

struct SwapResult {
  EvalResult original;
  EvalResult swapped;
  std::vector<SwapRecord> records;
};

/// Scores every document of a split with the model's own attention and with
/// log-odds attention. Throws ValidationError on vocabulary mismatch.
SwapResult logodds_swap_eval(const Model& model, const Dataset& dataset, Split split,
                             const LogOddsTable& table, bool use_abs = true,
                             std::size_t jobs = 1);

/// Attention provider that always returns the document's log-odds attention.
AttentionProvider logodds_provider(const LogOddsTable& table, bool use_abs = true);

/// Trains a model whose attention is fixed to log-odds attention.
TrainResult train_with_frozen_logodds(const Dataset& dataset, const LogOddsTable& table,
                                      EncoderConfig config, const TrainConfig& train_config,
                                      const EmbeddingMatrix& embeddings, std::uint64_t init_seed,
                                      bool use_abs = true);

// ---------------------------------------------------------------------------
// Split-level runners. Results follow document order regardless of `jobs`.

/// Calls fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::vector<GradientRecord> run_gradient_audit(const Model& model, const Dataset& dataset,
                                               Split split, GradientMeasure measure,
                                               std::size_t jobs = 1);
std::vector<PermutationRecord> run_permutation_audit(const Model& model, const Dataset& dataset,
                                                     Split split, std::size_t n_perms,
                                                     std::uint64_t seed, std::size_t jobs = 1);
std::vector<AdversarialRecord> run_adversarial_audit(const Model& model, const Dataset& dataset,
                                                     Split split, const AdversarialConfig& config,
                                                     std::uint64_t seed, std::size_t jobs = 1);

/// Columns: id,tau,p_approx (empty tau when undefined)
std::string gradients_csv(const std::vector<GradientRecord>& records);
/// Columns: id,label,yhat,max_attn,median_dy
std::string permutation_csv(const std::vector<PermutationRecord>& records);
/// Columns: id,yhat,max_attn,eps_max_jsd,dy,feasible
std::string adversarial_csv(const std::vector<AdversarialRecord>& records);
/// One JSON object per line with tokens, original and adversarial attention.
std::string adversarial_jsonl(const std::vector<AdversarialRecord>& records,
                              const Vocabulary& vocab);
/// Columns: id,yhat,yhat_lo,jsd,dy
std::string swap_csv(const std::vector<SwapRecord>& records);

}  // namespace attnaudit
