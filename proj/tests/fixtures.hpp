#pragma once

// Small models and corpora shared by the unit and acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "attnaudit/corpus.hpp"
#include "attnaudit/models.hpp"
#include "grad_check.hpp"

namespace attnaudit::testing {

inline Vocabulary toy_vocabulary(std::size_t words) {
  std::vector<std::string> w{"<pad>", "<unk>", "qqq"};
  for (std::size_t i = 0; i < words; ++i) w.push_back("w" + std::string(1, char('a' + i % 26)) +
                                                       std::string(i / 26, 'x'));
  return Vocabulary::from_words(w);
}

inline EncoderConfig tiny_config(EncoderKind kind, std::size_t E = 8, std::size_t hidden = 8,
                                 std::size_t labels = 1) {
  EncoderConfig c;
  c.kind = kind;
  c.embedding_dim = E;
  c.lstm_hidden = hidden / 2 > 0 ? hidden / 2 : 1;
  c.cnn_kernels = {1, 3};
  c.cnn_filters = hidden / 2 > 0 ? hidden / 2 : 1;
  c.projection_dim = hidden;
  c.attention_dim = hidden;
  c.label_count = labels;
  return c;
}

inline Model tiny_model(const EncoderConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  return Model::initialize(config, load_embeddings("none", vocab, config.embedding_dim, seed + 1),
                           seed, vocab.hash());
}

inline std::vector<TokenIndex> random_tokens(std::size_t T, const Vocabulary& vocab,
                                             std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenIndex> d(3, static_cast<TokenIndex>(vocab.size()) - 1);
  std::vector<TokenIndex> t(T);
  for (auto& x : t) x = d(rng);
  return t;
}

struct ModelGradCheck {
  std::string worst_parameter;
  GradComparison worst;
  bool ok = true;
};

/// Compares d(mean prediction)/d(parameter) from the tape with central
/// differences for every parameter of `model` (embeddings included).
inline ModelGradCheck check_model_gradients(const Model& model,
                                            const std::vector<TokenIndex>& tokens,
                                            double rel = 1e-4, double abs = 1e-6) {
  const double L = static_cast<double>(model.config().label_count);
  Tape tape;
  ForwardGraph g = model.build(tape, tokens);
  Tensor seed(g.prediction.value().shape(), 1.0 / L);
  tape.backward(g.prediction, seed);
  const GradientTable analytic = tape.parameter_gradients();
  ModelGradCheck result;
  for (const auto& name : model.params().names()) {
    auto f = [&](const Tensor& x) {
      Model m = model;
      m.params().get_mutable(name) = x;
      double s = 0.0;
      for (double p : m.forward(tokens).prediction) s += p;
      return s / L;
    };
    const Tensor numeric = finite_difference_gradient(f, model.params().get(name));
    const Tensor a = analytic.count(name) ? analytic.at(name) : Tensor(numeric.shape());
    const auto cmp = compare_gradients(a, numeric);
    if (!within(cmp, rel, abs)) result.ok = false;
    if (cmp.worst_relative > result.worst.worst_relative ||
        cmp.worst_absolute > result.worst.worst_absolute) {
      result.worst.worst_relative = std::max(result.worst.worst_relative, cmp.worst_relative);
      result.worst.worst_absolute = std::max(result.worst.worst_absolute, cmp.worst_absolute);
      result.worst_parameter = name;
    }
    result.worst.checked += cmp.checked;
  }
  return result;
}

}  // namespace attnaudit::testing
