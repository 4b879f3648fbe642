#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnaudit/corpus.hpp"
#include "attnaudit/models.hpp"
#include "attnaudit/training.hpp"

namespace attnaudit {

/// Sorted (word index, count) pairs; padding never appears.
using SparseCounts = std::vector<std::pair<TokenIndex, double>>;

SparseCounts featurize_bow(std::span<const TokenIndex> tokens);

struct LrConfig {
  double l2 = 1e-4;
  double tolerance = 1e-6;  // on the gradient norm
  std::size_t max_iterations = 5000;
};

/// Per-label bag-of-words logistic regression. Minimizes
/// mean log-loss + (l2 / 2) * |beta|^2; the bias is not penalized.
struct LRModel {
  std::vector<std::vector<double>> beta;  // [L][|V|]
  std::vector<double> bias;               // [L]
  double l2 = 0.0;
  std::string vocab_hash;
  std::vector<std::vector<double>> objective_trace;  // per label, per iteration
  std::vector<bool> converged;                       // per label

  std::string to_json() const;
  static LRModel from_json(std::string_view text);
};

/// Value of the regularized objective for one label.
double lr_objective(const std::vector<SparseCounts>& features, std::span<const int> labels,
                    std::span<const double> beta, double bias, double l2);

/// Full-batch gradient descent with Armijo backtracking on the train split.
/// Throws ValidationError when a label lacks either class.
LRModel train_lr(const Dataset& dataset, const LrConfig& config = {});

std::vector<double> predict_lr(const LRModel& model, std::span<const TokenIndex> tokens);
EvalResult evaluate_lr(const LRModel& model, const Dataset& dataset, Split split);

/// Word -> per-label coefficient, one entry for every vocabulary word.
struct LogOddsTable {
  std::vector<std::vector<double>> beta;  // [L][|V|]
  std::string vocab_hash;

  static LogOddsTable from_model(const LRModel& model);
  std::size_t label_count() const { return beta.size(); }
  /// Columns: word,label,beta
  std::string to_csv(const Vocabulary& vocab) const;
};

/// softmax over positions of |beta| (or beta when use_abs is false) for one
/// label; padding positions get exactly zero.
std::vector<double> log_odds_attention(std::span<const TokenIndex> tokens,
                                       const LogOddsTable& table, std::size_t label,
                                       bool use_abs = true);

/// One log-odds distribution per label, for use as an attention override.
AttentionOverride log_odds_override(std::span<const TokenIndex> tokens,
                                    const LogOddsTable& table, bool use_abs = true);

}  // namespace attnaudit
