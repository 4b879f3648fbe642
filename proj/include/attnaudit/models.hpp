#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnaudit/autodiff.hpp"
#include "attnaudit/corpus.hpp"

namespace attnaudit {

enum class EncoderKind { bilstm, cnn, projection };
enum class AttentionKind { additive, none, frozen_external };
/// Aggregation used when attention is `none`.
enum class Pooling { mean, final_state };

std::string_view encoder_name(EncoderKind k);
EncoderKind parse_encoder(std::string_view name);
std::string_view attention_name(AttentionKind k);
AttentionKind parse_attention(std::string_view name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::bilstm;
  std::size_t embedding_dim = 300;
  std::size_t lstm_hidden = 128;  // per direction
  std::vector<std::size_t> cnn_kernels{1, 3, 5, 7};
  std::size_t cnn_filters = 64;  // per kernel width
  std::size_t projection_dim = 256;
  std::size_t attention_dim = 128;
  AttentionKind attention = AttentionKind::additive;
  Pooling pooling = Pooling::mean;
  std::size_t label_count = 1;
  bool train_embeddings = true;

  /// Width of each per-position hidden state.
  std::size_t hidden_dim() const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Externally supplied attention. Either one distribution shared by all
/// labels, or one per label (label l is decoded from its own context).
struct AttentionOverride {
  std::vector<std::vector<double>> distributions;
};

struct ModelOutput {
  Tensor hidden;                               // [T, D]
  std::vector<std::vector<double>> attention;  // 1 shared or L per-label rows
  Tensor context;                              // [1, D] or [L, D]
  std::vector<double> logits;
  std::vector<double> prediction;  // sigmoid(logits), one per label
};

struct ForwardGraph {
  Var embedded;   // [T, E]
  Var hidden;     // [T, D]
  Var attention;  // [1, T] or [L, T]
  Var context;
  Var logits;      // [1, L]
  Var prediction;  // [1, L]
};

/// 1 for real tokens, 0 for padding.
std::vector<std::uint8_t> padding_mask(std::span<const TokenIndex> tokens);

/// Zeroes masked entries and rescales the rest to sum to one. A vector that
/// already sums to one (within 1e-10) is returned unscaled.
std::vector<double> renormalize(std::span<const double> weights,
                                std::span<const std::uint8_t> mask);

// Building blocks. Each records onto the tape that owns its inputs.

/// Per-position hidden states [T, D] from embedded tokens [T, E].
Var encode(const EncoderConfig& config, const ParameterStore& params, Var embedded);
/// softmax over positions of v^T tanh(W1 h_t + b); returns [1, T].
Var attend_additive(const ParameterStore& params, Var hidden,
                    std::span<const std::uint8_t> mask);
/// alpha[R, T] x hidden[T, D]; each row of alpha must sum to 1 within 1e-6.
Var aggregate_context(Var hidden, Var alpha);
/// Per-label logits from a shared [1, D] or per-label [L, D] context.
Var decode_logits(const ParameterStore& params, Var context);

class Model {
 public:
  Model(EncoderConfig config, ParameterStore params, std::string vocab_hash);

  /// Embedding table from `embeddings`; other weights uniform in
  /// +-sqrt(6 / (fan_in + fan_out)); biases zero except LSTM forget gates (1).
  static Model initialize(const EncoderConfig& config,
                          const EmbeddingMatrix& embeddings, std::uint64_t seed,
                          std::string vocab_hash);

  const EncoderConfig& config() const { return config_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }
  const std::string& vocab_hash() const { return vocab_hash_; }

  ForwardGraph build(Tape& tape, std::span<const TokenIndex> tokens,
                     const AttentionOverride* override = nullptr) const;
  /// Attention, aggregation and decoding on top of an existing hidden node.
  ForwardGraph build_head(Tape& tape, Var hidden, std::span<const std::uint8_t> mask,
                          const AttentionOverride* override) const;

  ModelOutput forward(std::span<const TokenIndex> tokens,
                      const AttentionOverride* override = nullptr) const;
  /// Same result as forward() for the hidden states it would compute.
  ModelOutput forward_from_hidden(const Tensor& hidden,
                                  std::span<const std::uint8_t> mask,
                                  const AttentionOverride* override = nullptr) const;

  std::string to_checkpoint() const;
  static Model from_checkpoint(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  EncoderConfig config_;
  ParameterStore params_;
  std::string vocab_hash_;
};

ModelOutput collect_output(const ForwardGraph& graph);

}  // namespace attnaudit
