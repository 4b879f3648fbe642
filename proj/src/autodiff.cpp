#include "attnaudit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace attnaudit {

// ---------------------------------------------------------------------------
// ParameterStore

void ParameterStore::add(const std::string& name, Tensor value) {
  if (values_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor zeros(value.shape());
  values_.emplace(name, std::move(value));
  grads_.emplace(name, std::move(zeros));
}

bool ParameterStore::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::get_mutable(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::grad_mutable(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : values_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, g] : grads_) g.fill(0.0);
}

void ParameterStore::accumulate(const GradientTable& grads, double scale) {
  for (const auto& [name, g] : grads) {
    Tensor& acc = grad_mutable(name);
    if (acc.shape() != g.shape())
      throw std::invalid_argument("gradient shape mismatch for " + name);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += scale * g[i];
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(*this); }

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size())
    throw std::invalid_argument("variable does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size())
    throw std::invalid_argument("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const ParameterStore& store, const std::string& name) {
  Node n;
  n.borrowed = &store.get(name);
  n.requires_grad = recording_;
  n.parameter = name;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.borrowed ? *n.borrowed : n.value;
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad.empty()) return n.grad;
  return Tensor(value(v).shape());
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(value(v).shape());
  return n.grad;
}

Var Tape::push(Tensor value, std::span<const Var> inputs, const char* op,
               BackwardFn backward) {
  if (!value.all_finite())
    throw std::domain_error(std::string("non-finite output from ") + op);
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (Var in : inputs) {
      if (node(in).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var output) {
  if (value(output).size() != 1)
    throw std::invalid_argument("backward() needs a scalar output, got shape " +
                                shape_string(value(output).shape()));
  Tensor seed(value(output).shape());
  seed[0] = 1.0;
  backward(output, seed);
}

void Tape::backward(Var output, const Tensor& seed) {
  if (!recording_)
    throw std::logic_error("backward() on a tape that was not recording");
  if (seed.shape() != value(output).shape())
    throw std::invalid_argument("seed shape does not match output shape");
  Tensor& g = grad_buffer(output);
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.borrowed ? *n.borrowed : n.value, n.grad);
  }
}

GradientTable Tape::parameter_gradients() const {
  GradientTable out;
  for (const Node& n : nodes_) {
    if (n.parameter.empty() || n.grad.empty()) continue;
    auto [it, inserted] = out.emplace(n.parameter, n.grad);
    if (!inserted)
      for (std::size_t i = 0; i < n.grad.size(); ++i) it->second[i] += n.grad[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

namespace ops {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument("operands recorded on different tapes");
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
}

template <class Forward, class Derivative>
Var unary(Var a, const char* op, Forward f, Derivative df) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape.push(std::move(y), {a}, op,
                   [a, df](Tape& t, const Tensor& value, const Tensor& grad) {
                     if (!t.requires_grad(a)) return;
                     Tensor& ga = t.grad_buffer(a);
                     const Tensor& x = t.value(a);
                     for (std::size_t i = 0; i < grad.size(); ++i)
                       ga[i] += grad[i] * df(x[i], value[i]);
                   });
}

}  // namespace

Var matmul(Var a, Var b, bool transpose_right) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() > 2 || B.rank() > 2)
    throw std::invalid_argument("matmul: operands must have rank <= 2");
  const std::size_t m = A.rows(), k = A.cols();
  const std::size_t bk = transpose_right ? B.cols() : B.rows();
  const std::size_t n = transpose_right ? B.rows() : B.cols();
  if (k != bk)
    throw std::invalid_argument("matmul: inner dimensions differ " +
                                shape_string(A.shape()) + " x " +
                                shape_string(B.shape()) +
                                (transpose_right ? "^T" : ""));
  Tensor C({m, n});
  if (transpose_right) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
        C[i * n + j] = s;
      }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        if (av == 0.0) continue;
        const double* brow = &B[p * n];
        double* crow = &C[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  }
  return tape.push(
      std::move(C), {a, b}, "matmul",
      [a, b, m, k, n, transpose_right](Tape& t, const Tensor&,
                                       const Tensor& G) {
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        if (t.requires_grad(a)) {
          // dA = G B^T   (or G B when B was transposed)
          Tensor& gA = t.grad_buffer(a);
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = &G[i * n];
            double* arow = &gA[i * k];
            if (transpose_right) {
              for (std::size_t j = 0; j < n; ++j) {
                const double g = grow[j];
                if (g == 0.0) continue;
                const double* brow = &B[j * k];
                for (std::size_t p = 0; p < k; ++p) arow[p] += g * brow[p];
              }
            } else {
              for (std::size_t p = 0; p < k; ++p) {
                const double* brow = &B[p * n];
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                arow[p] += s;
              }
            }
          }
        }
        if (t.requires_grad(b)) {
          // dB = A^T G   (or G^T A when B was transposed)
          Tensor& gB = t.grad_buffer(b);
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = &A[i * k];
            const double* grow = &G[i * n];
            if (transpose_right) {
              for (std::size_t j = 0; j < n; ++j) {
                const double g = grow[j];
                if (g == 0.0) continue;
                double* brow = &gB[j * k];
                for (std::size_t p = 0; p < k; ++p) brow[p] += g * arow[p];
              }
            } else {
              for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av == 0.0) continue;
                double* brow = &gB[p * n];
                for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
              }
            }
          }
        }
      });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool broadcast = A.shape() != B.shape();
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols() && A.rank() >= 2))
    throw std::invalid_argument("add: cannot broadcast " +
                                shape_string(B.shape()) + " onto " +
                                shape_string(A.shape()));
  Tensor C = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i)
    C[i] += broadcast ? B[i % cols] : B[i];
  return tape.push(std::move(C), {a, b}, "add",
                   [a, b, broadcast, cols](Tape& t, const Tensor&,
                                           const Tensor& G) {
                     if (t.requires_grad(a)) {
                       Tensor& ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
                     }
                     if (t.requires_grad(b)) {
                       Tensor& gb = t.grad_buffer(b);
                       for (std::size_t i = 0; i < G.size(); ++i)
                         gb[broadcast ? i % cols : i] += G[i];
                     }
                   });
}

Var hadamard(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "hadamard");
  Tensor C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
  return tape.push(std::move(C), {a, b}, "hadamard",
                   [a, b](Tape& t, const Tensor&, const Tensor& G) {
                     const Tensor& A = t.value(a);
                     const Tensor& B = t.value(b);
                     if (t.requires_grad(a)) {
                       Tensor& ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < G.size(); ++i)
                         ga[i] += G[i] * B[i];
                     }
                     if (t.requires_grad(b)) {
                       Tensor& gb = t.grad_buffer(b);
                       for (std::size_t i = 0; i < G.size(); ++i)
                         gb[i] += G[i] * A[i];
                     }
                   });
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var masked_softmax(Var a, std::span<const std::uint8_t> mask) {
  Tape& tape = *a.tape;
  const Tensor& X = a.value();
  const std::size_t cols = X.cols();
  const std::size_t rows = X.rows();
  if (!mask.empty() && mask.size() != cols)
    throw std::invalid_argument("masked_softmax: mask length " +
                                std::to_string(mask.size()) + " != " +
                                std::to_string(cols));
  auto keep = [&](std::size_t j) { return mask.empty() || mask[j] != 0; };
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &X[r * cols];
    double* y = &Y[r * cols];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (keep(j)) mx = std::max(mx, x[j]);
    if (!std::isfinite(mx))
      throw std::invalid_argument("masked_softmax: every position is masked");
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = keep(j) ? std::exp(x[j] - mx) : 0.0;
      z += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= z;
  }
  // Masked entries have y == 0, so the backward rule below sends them no
  // gradient without consulting the mask again.
  return tape.push(std::move(Y), {a}, "masked_softmax",
                   [a, rows, cols](Tape& t, const Tensor& Y, const Tensor& G) {
                     if (!t.requires_grad(a)) return;
                     Tensor& ga = t.grad_buffer(a);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* y = &Y[r * cols];
                       const double* g = &G[r * cols];
                       double dot = 0.0;
                       for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
                       for (std::size_t j = 0; j < cols; ++j)
                         ga[r * cols + j] += y[j] * (g[j] - dot);
                     }
                   });
}

Var concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  Tape& tape = *parts[0].tape;
  std::vector<Var> inputs(parts.begin(), parts.end());
  const Tensor& first = parts[0].value();
  if (axis == Axis::rows) {
    const std::size_t cols = first.cols();
    std::size_t rows = 0;
    for (Var p : parts) {
      if (p.tape != &tape) throw std::invalid_argument("concat: mixed tapes");
      const Tensor& v = p.value();
      if (v.rank() > 2 || v.cols() != cols)
        throw std::invalid_argument("concat(rows): column counts differ");
      rows += v.rows();
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& v = p.value();
      std::copy(v.storage().begin(), v.storage().end(), out.storage().begin() + off);
      off += v.size();
    }
    return tape.push(std::move(out), inputs, "concat",
                     [inputs](Tape& t, const Tensor&, const Tensor& G) {
                       std::size_t off = 0;
                       for (Var p : inputs) {
                         const std::size_t n = t.value(p).size();
                         if (t.requires_grad(p)) {
                           Tensor& gp = t.grad_buffer(p);
                           for (std::size_t i = 0; i < n; ++i) gp[i] += G[off + i];
                         }
                         off += n;
                       }
                     });
  }
  const std::size_t rows = first.rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    if (p.tape != &tape) throw std::invalid_argument("concat: mixed tapes");
    const Tensor& v = p.value();
    if (v.rank() > 2 || v.rows() != rows)
      throw std::invalid_argument("concat(cols): row counts differ");
    widths.push_back(v.cols());
    cols += v.cols();
  }
  Tensor::Shape shape = first.rank() == 1 ? Tensor::Shape{cols}
                                          : Tensor::Shape{rows, cols};
  Tensor out(shape);
  std::size_t col_off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c)
        out[r * cols + col_off + c] = v[r * widths[k] + c];
    col_off += widths[k];
  }
  return tape.push(std::move(out), inputs, "concat",
                   [inputs, widths, rows, cols](Tape& t, const Tensor&,
                                                const Tensor& G) {
                     std::size_t col_off = 0;
                     for (std::size_t k = 0; k < inputs.size(); ++k) {
                       if (t.requires_grad(inputs[k])) {
                         Tensor& gp = t.grad_buffer(inputs[k]);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < widths[k]; ++c)
                             gp[r * widths[k] + c] += G[r * cols + col_off + c];
                       }
                       col_off += widths[k];
                     }
                   });
}

Var conv1d_same(Var x, Var w) {
  Tape& tape = same_tape(x, w);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (X.rank() > 2 || W.rank() != 3)
    throw std::invalid_argument("conv1d_same: expects x[T,Cin] and w[k,Cin,Cout]");
  const std::size_t T = X.rows(), cin = X.cols();
  const std::size_t k = W.dim(0), cout = W.dim(2);
  if (W.dim(1) != cin)
    throw std::invalid_argument("conv1d_same: input channels differ");
  if (k % 2 == 0)
    throw std::invalid_argument("conv1d_same: kernel width must be odd");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
  Tensor Y({T, cout});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xv = X[src * cin + c];
        if (xv == 0.0) continue;
        const double* wrow = &W[(j * cin + c) * cout];
        double* yrow = &Y[t * cout];
        for (std::size_t o = 0; o < cout; ++o) yrow[o] += xv * wrow[o];
      }
    }
  return tape.push(
      std::move(Y), {x, w}, "conv1d_same",
      [x, w, T, cin, k, cout, pad](Tape& tp, const Tensor&, const Tensor& G) {
        const Tensor& X = tp.value(x);
        const Tensor& W = tp.value(w);
        const bool gx = tp.requires_grad(x), gw = tp.requires_grad(w);
        Tensor* GX = gx ? &tp.grad_buffer(x) : nullptr;
        Tensor* GW = gw ? &tp.grad_buffer(w) : nullptr;
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            const double* grow = &G[t * cout];
            for (std::size_t c = 0; c < cin; ++c) {
              const double* wrow = &W[(j * cin + c) * cout];
              if (gx) {
                double s = 0.0;
                for (std::size_t o = 0; o < cout; ++o) s += grow[o] * wrow[o];
                (*GX)[src * cin + c] += s;
              }
              if (gw) {
                const double xv = X[src * cin + c];
                double* gwrow = &(*GW)[(j * cin + c) * cout];
                for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xv * grow[o];
              }
            }
          }
      });
}

Var sum(Var a) {
  Tape& tape = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape.push(Tensor::scalar(s), {a}, "sum",
                   [a](Tape& t, const Tensor&, const Tensor& G) {
                     if (!t.requires_grad(a)) return;
                     Tensor& ga = t.grad_buffer(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[0];
                   });
}

Var mean(Var a) {
  Tape& tape = *a.tape;
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape.push(Tensor::scalar(s / n), {a}, "mean",
                   [a, n](Tape& t, const Tensor&, const Tensor& G) {
                     if (!t.requires_grad(a)) return;
                     Tensor& ga = t.grad_buffer(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[0] / n;
                   });
}

Var slice(Var a, Axis axis, std::size_t begin, std::size_t end) {
  Tape& tape = *a.tape;
  const Tensor& X = a.value();
  if (X.rank() > 2) throw std::invalid_argument("slice: rank must be <= 2");
  const std::size_t rows = X.rows(), cols = X.cols();
  const std::size_t extent = axis == Axis::rows ? rows : cols;
  if (begin >= end || end > extent)
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") outside extent " +
                                std::to_string(extent));
  if (axis == Axis::rows) {
    Tensor out({end - begin, cols});
    std::copy(X.storage().begin() + begin * cols, X.storage().begin() + end * cols,
              out.storage().begin());
    return tape.push(std::move(out), {a}, "slice",
                     [a, begin, cols](Tape& t, const Tensor&, const Tensor& G) {
                       if (!t.requires_grad(a)) return;
                       Tensor& ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < G.size(); ++i)
                         ga[begin * cols + i] += G[i];
                     });
  }
  const std::size_t width = end - begin;
  Tensor out(X.rank() == 1 ? Tensor::Shape{width} : Tensor::Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = X[r * cols + begin + c];
  return tape.push(std::move(out), {a}, "slice",
                   [a, begin, rows, cols, width](Tape& t, const Tensor&,
                                                 const Tensor& G) {
                     if (!t.requires_grad(a)) return;
                     Tensor& ga = t.grad_buffer(a);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < width; ++c)
                         ga[r * cols + begin + c] += G[r * width + c];
                   });
}

Var embedding_lookup(Var table, std::span<const std::int32_t> indices) {
  Tape& tape = *table.tape;
  const Tensor& E = table.value();
  if (E.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be [V,E]");
  if (indices.empty()) throw std::invalid_argument("embedding_lookup: no indices");
  const std::size_t V = E.rows(), dim = E.cols();
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), dim});
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= V)
      throw std::out_of_range("embedding_lookup: index " + std::to_string(idx[t]) +
                              " outside vocabulary of size " + std::to_string(V));
    std::copy_n(&E[idx[t] * dim], dim, &out[t * dim]);
  }
  return tape.push(std::move(out), {table}, "embedding_lookup",
                   [table, idx = std::move(idx), dim](Tape& t, const Tensor&,
                                                      const Tensor& G) {
                     if (!t.requires_grad(table)) return;
                     Tensor& g = t.grad_buffer(table);
                     for (std::size_t r = 0; r < idx.size(); ++r)
                       for (std::size_t c = 0; c < dim; ++c)
                         g[idx[r] * dim + c] += G[r * dim + c];
                   });
}

}  // namespace ops

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace attnaudit
