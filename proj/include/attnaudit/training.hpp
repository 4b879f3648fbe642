#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnaudit/autodiff.hpp"
#include "attnaudit/corpus.hpp"
#include "attnaudit/models.hpp"

namespace attnaudit {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double l2 = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct EvalResult {
  std::vector<double> auc;  // per label
  double macro_auc = 0.0;
  std::vector<std::size_t> positives;  // per label
  std::size_t instances = 0;
  std::string split_hash;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_macro_auc = 0.0;
  double best_so_far = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  /// Columns: epoch,train_loss,dev_macro_auc,best_so_far
  std::string to_csv() const;
};

struct TrainResult {
  Model model;  // best dev checkpoint
  TrainingLog log;
};

/// Supplies a fixed attention distribution per document (e.g. log-odds
/// attention); returning nullopt uses the model's own attention.
using AttentionProvider =
    std::function<std::optional<AttentionOverride>(const Document&)>;

/// Binary cross-entropy, averaged over labels. Predictions are clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> predicted, std::span<const int> labels);

struct AdamState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::size_t step = 0;
};

/// One bias-corrected Adam update for every parameter named in `grads`,
/// with `l2 * param` added to the gradient first.
void adam_step(ParameterStore& params, const GradientTable& grads, AdamState& state,
               const TrainConfig& config);

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// count one half. Throws ValidationError unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Per-label predictions for every document of a split, in dataset order.
std::vector<std::vector<double>> predict_split(const Model& model, const Dataset& dataset,
                                               Split split,
                                               const AttentionProvider& attention = {});

EvalResult evaluate_predictions(const std::vector<std::vector<double>>& predictions,
                                const Dataset& dataset, Split split);
EvalResult evaluate(const Model& model, const Dataset& dataset, Split split,
                    const AttentionProvider& attention = {});

/// Shuffled mini-batch maximum-likelihood training; keeps the checkpoint
/// with the best dev macro AUC and stops after `patience` epochs without
/// improvement.
TrainResult train(Model model, const Dataset& dataset, const TrainConfig& config,
                  const AttentionProvider& attention = {});

}  // namespace attnaudit
