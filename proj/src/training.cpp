#include "attnaudit/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "attnaudit/util.hpp"

namespace attnaudit {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (!(l2 >= 0.0)) throw ValidationError("L2 coefficient must be >= 0");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
}

std::string TrainingLog::to_csv() const {
  std::string out = "epoch,train_loss,dev_macro_auc,best_so_far\n";
  for (const auto& e : epochs)
    out += csv_line({std::to_string(e.epoch), format_double(e.train_loss),
                     format_double(e.dev_macro_auc), format_double(e.best_so_far)});
  return out;
}

double bce_loss(std::span<const double> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || predicted.empty())
    throw std::invalid_argument("bce_loss: prediction and label counts differ");
  double total = 0.0;
  for (std::size_t l = 0; l < predicted.size(); ++l) {
    const double p = std::clamp(predicted[l], 1e-12, 1.0 - 1e-12);
    total -= labels[l] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(predicted.size());
}

void adam_step(ParameterStore& params, const GradientTable& grads, AdamState& state,
               const TrainConfig& config) {
  for (const auto& [name, g] : grads)
    if (!g.all_finite()) throw std::domain_error("non-finite gradient for parameter " + name);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.get_mutable(name);
    if (p.shape() != g.shape())
      throw std::invalid_argument("gradient shape mismatch for " + name);
    auto [mit, _m] = state.first_moment.try_emplace(name, Tensor(p.shape()));
    auto [vit, _v] = state.second_moment.try_emplace(name, Tensor(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + config.l2 * p[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
    }
  }
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("auc needs both positive and negative examples");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<std::vector<double>> predict_split(const Model& model, const Dataset& dataset,
                                               Split split,
                                               const AttentionProvider& attention) {
  std::vector<std::vector<double>> out;
  for (const auto* doc : dataset.split(split)) {
    std::optional<AttentionOverride> ov;
    if (attention) ov = attention(*doc);
    out.push_back(model.forward(doc->tokens, ov ? &*ov : nullptr).prediction);
  }
  return out;
}

EvalResult evaluate_predictions(const std::vector<std::vector<double>>& predictions,
                                const Dataset& dataset, Split split) {
  const auto docs = dataset.split(split);
  if (docs.size() != predictions.size())
    throw std::invalid_argument("prediction count does not match split size");
  EvalResult r;
  r.instances = docs.size();
  r.split_hash = dataset.split_hash(split);
  for (std::size_t l = 0; l < dataset.label_count; ++l) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      scores.push_back(predictions[i].at(l));
      labels.push_back(docs[i]->labels[l]);
    }
    r.positives.push_back(static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)));
    r.auc.push_back(auc(scores, labels));
  }
  r.macro_auc = std::accumulate(r.auc.begin(), r.auc.end(), 0.0) /
                static_cast<double>(r.auc.size());
  return r;
}

EvalResult evaluate(const Model& model, const Dataset& dataset, Split split,
                    const AttentionProvider& attention) {
  return evaluate_predictions(predict_split(model, dataset, split, attention), dataset, split);
}

namespace {

double global_norm(const GradientTable& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(Model model, const Dataset& dataset, const TrainConfig& config,
                  const AttentionProvider& attention) {
  config.validate();
  dataset.validate();
  if (model.config().label_count != dataset.label_count)
    throw ValidationError("model label count does not match dataset");
  if (model.vocab_hash() != dataset.vocabulary.hash())
    throw ValidationError("model vocabulary does not match dataset vocabulary");
  const auto train_docs = dataset.split(Split::train);
  if (dataset.split(Split::dev).empty()) throw ValidationError("dataset has no dev split");

  TrainResult result{model, {}};
  if (config.max_epochs == 0) return result;

  std::vector<std::string> trainable;
  for (const auto& name : model.params().names())
    if (name != "embedding" || model.config().train_embeddings) trainable.push_back(name);

  std::mt19937_64 rng(config.seed);
  AdamState adam;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);
  const double L = static_cast<double>(dataset.label_count);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      GradientTable batch;
      for (const auto& name : trainable) batch.emplace(name, Tensor(model.params().get(name).shape()));
      for (std::size_t k = start; k < end; ++k) {
        const Document& doc = *train_docs[order[k]];
        std::optional<AttentionOverride> ov;
        if (attention) ov = attention(doc);
        Tape tape;
        ForwardGraph g = model.build(tape, doc.tokens, ov ? &*ov : nullptr);
        const Tensor& yhat = g.prediction.value();
        epoch_loss += bce_loss(yhat.values(), doc.labels);
        // d(mean BCE)/d(logit) = (yhat - y) / L
        Tensor seed(yhat.shape());
        for (std::size_t l = 0; l < yhat.size(); ++l) seed[l] = (yhat[l] - doc.labels[l]) / L;
        tape.backward(g.logits, seed);
        for (const auto& [name, gr] : tape.parameter_gradients()) {
          auto it = batch.find(name);
          if (it == batch.end()) continue;
          for (std::size_t i = 0; i < gr.size(); ++i) it->second[i] += gr[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [_, gr] : batch)
        for (auto& v : gr.values()) v *= inv;
      if (auto it = batch.find("embedding"); it != batch.end()) {
        // padding row stays at zero
        const std::size_t E = it->second.cols();
        std::fill_n(&it->second[Vocabulary::kPad * E], E, 0.0);
      }
      if (config.clip_norm > 0.0) {
        const double norm = global_norm(batch);
        if (norm > config.clip_norm)
          for (auto& [_, gr] : batch)
            for (auto& v : gr.values()) v *= config.clip_norm / norm;
      }
      adam_step(model.params(), batch, adam, config);
    }
    const double dev_auc = evaluate(model, dataset, Split::dev, attention).macro_auc;
    if (dev_auc > best) {
      best = dev_auc;
      since_best = 0;
      result.model = model;
    } else {
      ++since_best;
    }
    result.log.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(train_docs.size()), dev_auc, best});
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  return result;
}

}  // namespace attnaudit
