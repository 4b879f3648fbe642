#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "attnaudit/tensor.hpp"

namespace attnaudit {

using GradientTable = std::map<std::string, Tensor>;

/// Named trainable tensors plus gradient accumulators of identical shape.
class ParameterStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get_mutable(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad_mutable(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// Adds `scale * g` for every entry of `grads` into the accumulators.
  void accumulate(const GradientTable& grads, double scale = 1.0);

  const std::map<std::string, Tensor>& values() const { return values_; }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    return a.values_ == b.values_;
  }

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Linear record of forward computations for reverse-mode differentiation.
/// Node ids grow in creation order, which is also a valid topological order.
/// A tape is not thread-safe; use one per thread.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (an input to differentiate against).
  Var input(Tensor value);
  /// Leaf bound to a named parameter. The store must outlive the tape.
  Var parameter(const ParameterStore& store, const std::string& name);

  const Tensor& value(Var v) const;
  /// Gradient accumulated at `v` after backward(); zeros if none reached it.
  Tensor grad(Var v) const;

  /// Reverse pass from a scalar output (seed 1).
  void backward(Var output);
  /// Reverse pass from an arbitrary-shaped output with an explicit seed.
  void backward(Var output, const Tensor& seed);

  /// Gradients of every parameter leaf that was reached, keyed by name.
  /// Repeated bindings of one parameter are summed.
  GradientTable parameter_gradients() const;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by primitive implementations.
  /// Receives the node's forward value and its accumulated gradient and
  /// adds contributions into the inputs' grad_buffer()s.
  using BackwardFn =
      std::function<void(Tape&, const Tensor& value, const Tensor& grad)>;
  Var push(Tensor value, std::span<const Var> inputs, const char* op,
           BackwardFn backward);
  Var push(Tensor value, std::initializer_list<Var> inputs, const char* op,
           BackwardFn backward) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), op,
                std::move(backward));
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  /// Gradient buffer of `v`, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::string parameter;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Node& node(Var v);

  bool recording_;
  std::deque<Node> nodes_;
};

namespace ops {

enum class Axis { rows, cols };

/// `a[m,k] x b[k,n]`, or `a[m,k] x b[n,k]^T` when `transpose_right`.
/// Rank-1 operands are treated as a single row.
Var matmul(Var a, Var b, bool transpose_right = false);
/// Elementwise sum; `b` may also be a row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// Softmax over the last dimension. `mask[t] == 0` marks excluded
/// positions: they receive exactly 0 probability and no gradient. An empty
/// mask keeps everything. Max-subtracted for stability.
Var masked_softmax(Var a, std::span<const std::uint8_t> mask = {});
/// Concatenate along rows (axis 0) or along the last dimension.
Var concat(std::span<const Var> parts, Axis axis);
/// Same-length 1-D convolution of `x[T,Cin]` with `w[k,Cin,Cout]`, zero
/// padded by (k-1)/2 on each side. k must be odd.
Var conv1d_same(Var x, Var w);
Var sum(Var a);
Var mean(Var a);
/// Half-open range [begin, end) along rows or along the last dimension.
Var slice(Var a, Axis axis, std::size_t begin, std::size_t end);
/// Rows of `table[V,E]` at `indices`, producing [T,E].
Var embedding_lookup(Var table, std::span<const std::int32_t> indices);

}  // namespace ops

/// Central-difference gradient of a scalar function: each coordinate is
/// (f(x + h e_i) - f(x - h e_i)) / 2h.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h = 1e-4);

}  // namespace attnaudit
