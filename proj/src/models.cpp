#include "attnaudit/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "attnaudit/checkpoint.hpp"
#include "attnaudit/util.hpp"

namespace attnaudit {

using json = nlohmann::json;

std::string_view encoder_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::bilstm: return "bilstm";
    case EncoderKind::cnn: return "cnn";
    case EncoderKind::projection: return "proj";
  }
  return "bilstm";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "bilstm") return EncoderKind::bilstm;
  if (name == "cnn") return EncoderKind::cnn;
  if (name == "proj" || name == "projection") return EncoderKind::projection;
  throw ValidationError("unknown encoder '" + std::string(name) + "'");
}

std::string_view attention_name(AttentionKind k) {
  switch (k) {
    case AttentionKind::additive: return "additive";
    case AttentionKind::none: return "none";
    case AttentionKind::frozen_external: return "frozen-external";
  }
  return "additive";
}

AttentionKind parse_attention(std::string_view name) {
  if (name == "additive") return AttentionKind::additive;
  if (name == "none") return AttentionKind::none;
  if (name == "frozen-external") return AttentionKind::frozen_external;
  throw ValidationError("unknown attention kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// EncoderConfig

std::size_t EncoderConfig::hidden_dim() const {
  switch (kind) {
    case EncoderKind::bilstm: return 2 * lstm_hidden;
    case EncoderKind::cnn: return cnn_kernels.size() * cnn_filters;
    case EncoderKind::projection: return projection_dim;
  }
  return 0;
}

void EncoderConfig::validate() const {
  if (embedding_dim == 0) throw ValidationError("embedding_dim must be positive");
  if (label_count == 0) throw ValidationError("label_count must be positive");
  if (attention_dim == 0) throw ValidationError("attention_dim must be positive");
  switch (kind) {
    case EncoderKind::bilstm:
      if (lstm_hidden == 0) throw ValidationError("lstm_hidden must be positive");
      break;
    case EncoderKind::cnn:
      if (cnn_kernels.empty() || cnn_filters == 0)
        throw ValidationError("cnn needs at least one kernel and one filter");
      for (auto k : cnn_kernels)
        if (k % 2 == 0) throw ValidationError("cnn kernel sizes must be odd");
      break;
    case EncoderKind::projection:
      if (projection_dim == 0) throw ValidationError("projection_dim must be positive");
      break;
  }
}

json EncoderConfig::to_json() const {
  return {{"kind", encoder_name(kind)},
          {"embedding_dim", embedding_dim},
          {"lstm_hidden", lstm_hidden},
          {"cnn_kernels", cnn_kernels},
          {"cnn_filters", cnn_filters},
          {"projection_dim", projection_dim},
          {"attention_dim", attention_dim},
          {"attention", attention_name(attention)},
          {"pooling", pooling == Pooling::mean ? "mean" : "final"},
          {"label_count", label_count},
          {"train_embeddings", train_embeddings}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("encoder config must be an object");
  EncoderConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "kind") c.kind = parse_encoder(v.get<std::string>());
      else if (k == "embedding_dim") c.embedding_dim = v.get<std::size_t>();
      else if (k == "lstm_hidden") c.lstm_hidden = v.get<std::size_t>();
      else if (k == "cnn_kernels") c.cnn_kernels = v.get<std::vector<std::size_t>>();
      else if (k == "cnn_filters") c.cnn_filters = v.get<std::size_t>();
      else if (k == "projection_dim") c.projection_dim = v.get<std::size_t>();
      else if (k == "attention_dim") c.attention_dim = v.get<std::size_t>();
      else if (k == "attention") c.attention = parse_attention(v.get<std::string>());
      else if (k == "pooling") {
        const auto p = v.get<std::string>();
        if (p == "mean") c.pooling = Pooling::mean;
        else if (p == "final") c.pooling = Pooling::final_state;
        else throw ValidationError("unknown pooling '" + p + "'");
      } else if (k == "label_count") c.label_count = v.get<std::size_t>();
      else if (k == "train_embeddings") c.train_embeddings = v.get<bool>();
      else throw ValidationError("unknown encoder config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Building blocks

std::vector<std::uint8_t> padding_mask(std::span<const TokenIndex> tokens) {
  std::vector<std::uint8_t> mask(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t)
    mask[t] = tokens[t] != Vocabulary::kPad ? 1 : 0;
  return mask;
}

std::vector<double> renormalize(std::span<const double> weights,
                                std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != weights.size())
    throw std::invalid_argument("renormalize: mask length differs");
  std::vector<double> out(weights.begin(), weights.end());
  double total = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!mask.empty() && !mask[t]) out[t] = 0.0;
    if (out[t] < 0.0 || !std::isfinite(out[t]))
      throw std::invalid_argument("attention weights must be finite and nonnegative");
    total += out[t];
  }
  if (!(total > 0.0))
    throw std::invalid_argument("attention weights have no mass on unmasked positions");
  if (std::abs(total - 1.0) > 1e-10)
    for (auto& w : out) w /= total;
  return out;
}

namespace {

Var lstm_direction(const ParameterStore& params, const std::string& prefix,
                   Var embedded, std::size_t E, std::size_t H, bool reverse) {
  Tape& tape = *embedded.tape;
  const std::size_t T = embedded.value().rows();
  Var W = tape.parameter(params, prefix + ".weight");
  Var b = tape.parameter(params, prefix + ".bias");
  Var W_x = ops::slice(W, ops::Axis::rows, 0, E);
  Var W_h = ops::slice(W, ops::Axis::rows, E, E + H);
  Var xw = ops::add(ops::matmul(embedded, W_x), b);  // [T, 4H]

  std::vector<Var> states(T);
  Var h{}, c{};
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    Var z = ops::slice(xw, ops::Axis::rows, t, t + 1);
    if (step > 0) z = ops::add(z, ops::matmul(h, W_h));
    Var i = ops::sigmoid(ops::slice(z, ops::Axis::cols, 0, H));
    Var f = ops::sigmoid(ops::slice(z, ops::Axis::cols, H, 2 * H));
    Var g = ops::tanh(ops::slice(z, ops::Axis::cols, 2 * H, 3 * H));
    Var o = ops::sigmoid(ops::slice(z, ops::Axis::cols, 3 * H, 4 * H));
    Var ig = ops::hadamard(i, g);
    c = step > 0 ? ops::add(ops::hadamard(f, c), ig) : ig;
    h = ops::hadamard(o, ops::tanh(c));
    states[t] = h;
  }
  return ops::concat(states, ops::Axis::rows);
}

void check_distribution_rows(const Tensor& alpha) {
  const std::size_t rows = alpha.rows(), cols = alpha.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double a = alpha[r * cols + c];
      if (a < 0.0) throw std::invalid_argument("attention weights must be nonnegative");
      s += a;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("attention row sums to " + format_double(s) +
                                  ", not 1");
  }
}

}  // namespace

Var encode(const EncoderConfig& config, const ParameterStore& params, Var embedded) {
  Tape& tape = *embedded.tape;
  const Tensor& X = embedded.value();
  if (X.rank() != 2 || X.rows() == 0)
    throw std::invalid_argument("encode: expects a non-empty [T, E] input");
  if (X.cols() != config.embedding_dim)
    throw std::invalid_argument("encode: embedding width does not match config");
  const std::size_t E = config.embedding_dim;
  switch (config.kind) {
    case EncoderKind::bilstm: {
      const std::size_t H = config.lstm_hidden;
      Var fwd = lstm_direction(params, "encoder.lstm.fwd", embedded, E, H, false);
      Var bwd = lstm_direction(params, "encoder.lstm.bwd", embedded, E, H, true);
      const Var parts[] = {fwd, bwd};
      return ops::concat(parts, ops::Axis::cols);
    }
    case EncoderKind::cnn: {
      std::vector<Var> maps;
      for (auto k : config.cnn_kernels) {
        const std::string prefix = "encoder.conv.k" + std::to_string(k);
        Var W = tape.parameter(params, prefix + ".weight");
        Var b = tape.parameter(params, prefix + ".bias");
        maps.push_back(ops::relu(ops::add(ops::conv1d_same(embedded, W), b)));
      }
      return ops::concat(maps, ops::Axis::cols);
    }
    case EncoderKind::projection: {
      Var W = tape.parameter(params, "encoder.proj.weight");
      Var b = tape.parameter(params, "encoder.proj.bias");
      return ops::relu(ops::add(ops::matmul(embedded, W), b));
    }
  }
  throw std::logic_error("unreachable encoder kind");
}

Var attend_additive(const ParameterStore& params, Var hidden,
                    std::span<const std::uint8_t> mask) {
  Tape& tape = *hidden.tape;
  Var W1 = tape.parameter(params, "attention.W1");
  Var b = tape.parameter(params, "attention.b");
  Var v = tape.parameter(params, "attention.v");
  Var proj = ops::tanh(ops::add(ops::matmul(hidden, W1), b));  // [T, da]
  Var scores = ops::matmul(v, proj, /*transpose_right=*/true);  // [1, T]
  return ops::masked_softmax(scores, mask);
}

Var aggregate_context(Var hidden, Var alpha) {
  const Tensor& A = alpha.value();
  if (A.cols() != hidden.value().rows())
    throw std::invalid_argument("aggregate_context: attention length " +
                                std::to_string(A.cols()) + " != T " +
                                std::to_string(hidden.value().rows()));
  check_distribution_rows(A);
  return ops::matmul(alpha, hidden);
}

Var decode_logits(const ParameterStore& params, Var context) {
  Tape& tape = *context.tape;
  Var theta = tape.parameter(params, "decoder.theta");  // [L, D]
  Var bias = tape.parameter(params, "decoder.bias");    // [L]
  const std::size_t L = theta.value().rows();
  const std::size_t rows = context.value().rows();
  if (rows == 1) return ops::add(ops::matmul(context, theta, true), bias);
  if (rows != L)
    throw std::invalid_argument("decode: per-label context needs one row per label");
  // Row l of context is paired with row l of theta.
  Var ones = tape.constant(Tensor({1, theta.value().cols()}, 1.0));
  return ops::add(ops::matmul(ones, ops::hadamard(context, theta), true), bias);
}

// ---------------------------------------------------------------------------
// Model

Model::Model(EncoderConfig config, ParameterStore params, std::string vocab_hash)
    : config_(std::move(config)), params_(std::move(params)), vocab_hash_(std::move(vocab_hash)) {
  config_.validate();
  if (!params_.contains("embedding") || !params_.contains("decoder.theta"))
    throw ValidationError("model parameters are incomplete");
  if (params_.get("embedding").cols() != config_.embedding_dim)
    throw ValidationError("embedding width does not match config");
}

Model Model::initialize(const EncoderConfig& config, const EmbeddingMatrix& embeddings,
                        std::uint64_t seed, std::string vocab_hash) {
  config.validate();
  if (embeddings.values.rank() != 2 || embeddings.values.cols() != config.embedding_dim)
    throw ValidationError("embedding matrix width does not match embedding_dim");
  std::mt19937_64 rng(seed);
  ParameterStore ps;
  auto uniform = [&](Tensor::Shape shape, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = dist(rng);
    return t;
  };
  const std::size_t E = config.embedding_dim, D = config.hidden_dim();
  ps.add("embedding", embeddings.values);
  switch (config.kind) {
    case EncoderKind::bilstm: {
      const std::size_t H = config.lstm_hidden;
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string prefix = std::string("encoder.lstm.") + dir;
        ps.add(prefix + ".weight", uniform({E + H, 4 * H}, double(E + H), double(4 * H)));
        Tensor bias({4 * H});
        for (std::size_t j = H; j < 2 * H; ++j) bias[j] = 1.0;  // forget gate
        ps.add(prefix + ".bias", std::move(bias));
      }
      break;
    }
    case EncoderKind::cnn:
      for (auto k : config.cnn_kernels) {
        const std::string prefix = "encoder.conv.k" + std::to_string(k);
        ps.add(prefix + ".weight", uniform({k, E, config.cnn_filters}, double(k * E),
                                           double(k * config.cnn_filters)));
        ps.add(prefix + ".bias", Tensor({config.cnn_filters}));
      }
      break;
    case EncoderKind::projection:
      ps.add("encoder.proj.weight", uniform({E, config.projection_dim}, double(E),
                                            double(config.projection_dim)));
      ps.add("encoder.proj.bias", Tensor({config.projection_dim}));
      break;
  }
  if (config.attention == AttentionKind::additive) {
    const std::size_t da = config.attention_dim;
    ps.add("attention.W1", uniform({D, da}, double(D), double(da)));
    ps.add("attention.b", Tensor({da}));
    ps.add("attention.v", uniform({da}, double(da), 1.0));
  }
  ps.add("decoder.theta", uniform({config.label_count, D}, double(D), double(config.label_count)));
  ps.add("decoder.bias", Tensor({config.label_count}));
  return Model(config, std::move(ps), std::move(vocab_hash));
}

ForwardGraph Model::build_head(Tape& tape, Var hidden, std::span<const std::uint8_t> mask,
                               const AttentionOverride* override) const {
  ForwardGraph g;
  g.hidden = hidden;
  const std::size_t T = hidden.value().rows();
  if (!mask.empty() && mask.size() != T)
    throw std::invalid_argument("mask length differs from sequence length");
  if (override) {
    const auto& dists = override->distributions;
    if (dists.empty() || (dists.size() != 1 && dists.size() != config_.label_count))
      throw std::invalid_argument("attention override needs 1 or L distributions");
    Tensor alpha({dists.size(), T});
    for (std::size_t r = 0; r < dists.size(); ++r) {
      if (dists[r].size() != T)
        throw std::invalid_argument("attention override length " +
                                    std::to_string(dists[r].size()) + " != T " +
                                    std::to_string(T));
      const auto w = renormalize(dists[r], mask);
      std::copy(w.begin(), w.end(), &alpha[r * T]);
    }
    g.attention = tape.constant(std::move(alpha));
    g.context = aggregate_context(hidden, g.attention);
  } else if (config_.attention == AttentionKind::additive) {
    g.attention = attend_additive(params_, hidden, mask);
    g.context = aggregate_context(hidden, g.attention);
  } else if (config_.attention == AttentionKind::frozen_external) {
    throw std::invalid_argument("model with frozen external attention needs an override");
  } else if (config_.pooling == Pooling::mean) {
    const std::vector<double> ones(T, 1.0);
    const auto w = renormalize(ones, mask);
    g.attention = tape.constant(Tensor({1, T}, w));
    g.context = aggregate_context(hidden, g.attention);
  } else {
    std::size_t first = 0, last = T - 1;
    if (!mask.empty()) {
      while (first < T && !mask[first]) ++first;
      while (last > first && !mask[last]) --last;
      if (first == T) throw std::invalid_argument("every position is masked");
    }
    if (config_.kind == EncoderKind::bilstm) {
      const std::size_t H = config_.lstm_hidden;
      const Var parts[] = {
          ops::slice(ops::slice(hidden, ops::Axis::rows, last, last + 1), ops::Axis::cols, 0, H),
          ops::slice(ops::slice(hidden, ops::Axis::rows, first, first + 1), ops::Axis::cols, H,
                     2 * H)};
      g.context = ops::concat(parts, ops::Axis::cols);
    } else {
      g.context = ops::slice(hidden, ops::Axis::rows, last, last + 1);
    }
  }
  g.logits = decode_logits(params_, g.context);
  g.prediction = ops::sigmoid(g.logits);
  return g;
}

ForwardGraph Model::build(Tape& tape, std::span<const TokenIndex> tokens,
                          const AttentionOverride* override) const {
  if (tokens.empty()) throw std::invalid_argument("cannot encode an empty document");
  Var table = tape.parameter(params_, "embedding");
  Var embedded = ops::embedding_lookup(table, tokens);
  Var hidden = encode(config_, params_, embedded);
  const auto mask = padding_mask(tokens);
  ForwardGraph g = build_head(tape, hidden, mask, override);
  g.embedded = embedded;
  return g;
}

ModelOutput collect_output(const ForwardGraph& g) {
  ModelOutput out;
  out.hidden = g.hidden.value();
  if (g.attention.tape) {
    const Tensor& A = g.attention.value();
    for (std::size_t r = 0; r < A.rows(); ++r)
      out.attention.emplace_back(&A[r * A.cols()], &A[r * A.cols()] + A.cols());
  }
  out.context = g.context.value();
  out.logits = g.logits.value().storage();
  out.prediction = g.prediction.value().storage();
  for (auto& p : out.prediction) p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  return out;
}

ModelOutput Model::forward(std::span<const TokenIndex> tokens,
                           const AttentionOverride* override) const {
  Tape tape(/*recording=*/false);
  return collect_output(build(tape, tokens, override));
}

ModelOutput Model::forward_from_hidden(const Tensor& hidden, std::span<const std::uint8_t> mask,
                                       const AttentionOverride* override) const {
  Tape tape(/*recording=*/false);
  Var h = tape.constant(hidden);
  return collect_output(build_head(tape, h, mask, override));
}

std::string Model::to_checkpoint() const {
  json j = parameters_to_json(params_);
  j["config"] = config_.to_json();
  j["vocab_hash"] = vocab_hash_;
  return j.dump();
}

Model Model::from_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model checkpoint: ") + e.what());
  }
  if (!j.contains("config") || !j.contains("vocab_hash"))
    throw ValidationError("model checkpoint lacks config or vocab_hash");
  return Model(EncoderConfig::from_json(j["config"]), parameters_from_json(j),
               j["vocab_hash"].get<std::string>());
}

void Model::save(const std::filesystem::path& path) const { write_file(path, to_checkpoint()); }

Model Model::load(const std::filesystem::path& path) { return from_checkpoint(read_file(path)); }

}  // namespace attnaudit
