#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsd/autograd.hpp"
#include "hsd/random.hpp"
#include "hsd/tensor.hpp"

// Differentiable primitives. Each op computes its forward value eagerly and
// records a closure that maps the output gradient onto its operands.

namespace hsd {

using Mask = std::vector<bool>;

enum class Activation { relu, tanh, sigmoid };
enum class PoolKind { max, avg, var };

/// Raised by cross_entropy for a label outside [0, classes).
class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_str(s));
}

template <std::floating_point T>
T sigmoid(T x) {
  // Split on sign so exp() never overflows.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

inline std::size_t count_unmasked(const Mask& mask, std::size_t len, const char* op) {
  require(mask.size() == len, std::string(op) + ": mask length " + std::to_string(mask.size()) +
                                  " does not match sequence length " + std::to_string(len));
  std::size_t n = 0;
  for (bool m : mask) n += m ? 1 : 0;
  if (n == 0) throw EmptySequenceError(std::string(op) + ": every sequence position is masked");
  return n;
}

}  // namespace detail

template <std::floating_point T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                                     shape_str(b.shape()));
  Tensor<T> out(Shape{m, n});
  const auto& A = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A.at(i, p);
      if (av == T{0}) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
    }
  }
  auto na = a.node();
  auto nb = b.node();
  return make_op<T>(std::move(out), {a, b}, [na, nb, m, k, n](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    const auto& A = na->value;
    const auto& B = nb->value;
    if (!gp[0].empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s{0};
          for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * B.at(p, j);
          gp[0].at(i, p) += s;
        }
    }
    if (!gp[1].empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A.at(i, p);
          for (std::size_t j = 0; j < n; ++j) gp[1].at(p, j) += av * g.at(i, j);
        }
    }
  });
}

/// y = W x for W[m×n], x[n].
template <std::floating_point T>
Var<T> matvec(const Var<T>& w, const Var<T>& x) {
  detail::require_rank(w.shape(), 2, "matvec");
  detail::require_rank(x.shape(), 1, "matvec");
  const std::size_t m = w.dim(0), n = w.dim(1);
  detail::require(x.dim(0) == n, "matvec: " + shape_str(w.shape()) + " x " + shape_str(x.shape()));
  Tensor<T> out(Shape{m});
  const auto& W = w.value();
  const auto& X = x.value();
  for (std::size_t i = 0; i < m; ++i) {
    T s{0};
    for (std::size_t j = 0; j < n; ++j) s += W.at(i, j) * X[j];
    out[i] = s;
  }
  auto nw = w.node();
  auto nx = x.node();
  return make_op<T>(std::move(out), {w, x}, [nw, nx, m, n](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    const auto& W = nw->value;
    const auto& X = nx->value;
    if (!gp[0].empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gp[0].at(i, j) += g[i] * X[j];
    if (!gp[1].empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gp[1][j] += W.at(i, j) * g[i];
  });
}

template <std::floating_point T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (auto& slot : gp)
      if (!slot.empty())
        for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
  });
}

template <std::floating_point T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto na = a.node();
  auto nb = b.node();
  return make_op<T>(std::move(out), {a, b}, [na, nb](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    if (!gp[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gp[0][i] += g[i] * nb->value[i];
    if (!gp[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gp[1][i] += g[i] * na->value[i];
  });
}

template <std::floating_point T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_op<T>(std::move(out), {x}, [factor](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < g.size(); ++i) gp[0][i] += g[i] * factor;
  });
}

/// Scales every row of x[T×d] elementwise by g[d] (channel gating).
template <std::floating_point T>
Var<T> gate_features(const Var<T>& x, const Var<T>& gate) {
  detail::require_rank(x.shape(), 2, "gate_features");
  detail::require(gate.rank() == 1 && gate.dim(0) == x.dim(1),
                  "gate_features: gate " + shape_str(gate.shape()) + " for input " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out = x.value();
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t j = 0; j < cols; ++j) out.at(t, j) *= gate.value()[j];
  auto nx = x.node();
  auto ng = gate.node();
  return make_op<T>(std::move(out), {x, gate}, [nx, ng, rows, cols](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t j = 0; j < cols; ++j) {
        if (!gp[0].empty()) gp[0].at(t, j) += g.at(t, j) * ng->value[j];
        if (!gp[1].empty()) gp[1][j] += g.at(t, j) * nx->value.at(t, j);
      }
  });
}

/// Scales every row t of x[T×d] by g[t] (positional gating).
template <std::floating_point T>
Var<T> gate_positions(const Var<T>& x, const Var<T>& gate) {
  detail::require_rank(x.shape(), 2, "gate_positions");
  detail::require(gate.rank() == 1 && gate.dim(0) == x.dim(0),
                  "gate_positions: gate " + shape_str(gate.shape()) + " for input " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out = x.value();
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t j = 0; j < cols; ++j) out.at(t, j) *= gate.value()[t];
  auto nx = x.node();
  auto ng = gate.node();
  return make_op<T>(std::move(out), {x, gate}, [nx, ng, rows, cols](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t j = 0; j < cols; ++j) {
        if (!gp[0].empty()) gp[0].at(t, j) += g.at(t, j) * ng->value[t];
        if (!gp[1].empty()) gp[1][t] += g.at(t, j) * nx->value.at(t, j);
      }
  });
}

/// out[t][j] = rows[t] + cols[j].
template <std::floating_point T>
Var<T> outer_sum(const Var<T>& rows, const Var<T>& cols) {
  detail::require(rows.rank() == 1 && cols.rank() == 1, "outer_sum: expects two vectors");
  const std::size_t r = rows.dim(0), c = cols.dim(0);
  Tensor<T> out(Shape{r, c});
  for (std::size_t t = 0; t < r; ++t)
    for (std::size_t j = 0; j < c; ++j) out.at(t, j) = rows.value()[t] + cols.value()[j];
  return make_op<T>(std::move(out), {rows, cols}, [r, c](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t t = 0; t < r; ++t)
      for (std::size_t j = 0; j < c; ++j) {
        if (!gp[0].empty()) gp[0][t] += g.at(t, j);
        if (!gp[1].empty()) gp[1][j] += g.at(t, j);
      }
  });
}

template <std::floating_point T>
Var<T> activation(const Var<T>& x, Activation kind) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    switch (kind) {
      case Activation::relu: v = v > T{0} ? v : T{0}; break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = detail::sigmoid(v); break;
    }
  }
  Tensor<T> saved = out;
  return make_op<T>(std::move(out), {x}, [kind, saved = std::move(saved)](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = saved[i];
      T d{0};
      switch (kind) {
        case Activation::relu: d = y > T{0} ? T{1} : T{0}; break;
        case Activation::tanh: d = T{1} - y * y; break;
        case Activation::sigmoid: d = y * (T{1} - y); break;
      }
      gp[0][i] += g[i] * d;
    }
  });
}

template <std::floating_point T>
Var<T> relu(const Var<T>& x) {
  return activation(x, Activation::relu);
}
template <std::floating_point T>
Var<T> tanh(const Var<T>& x) {
  return activation(x, Activation::tanh);
}
template <std::floating_point T>
Var<T> sigmoid(const Var<T>& x) {
  return activation(x, Activation::sigmoid);
}

namespace detail {

// Softmax over `n` contiguous entries; masked entries get probability 0.
template <std::floating_point T>
void softmax_span(std::span<const T> in, std::span<T> out, const Mask* mask) {
  T peak = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!mask || (*mask)[i]) peak = std::max(peak, in[i]);
  T total{0};
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = (!mask || (*mask)[i]) ? std::exp(in[i] - peak) : T{0};
    total += out[i];
  }
  for (auto& v : out) v /= total;
}

template <std::floating_point T>
void softmax_backward_span(std::span<const T> y, std::span<const T> g, std::span<T> gin) {
  T dot{0};
  for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
  for (std::size_t i = 0; i < y.size(); ++i) gin[i] += y[i] * (g[i] - dot);
}

}  // namespace detail

/// Softmax along the last axis of a vector or matrix.
template <std::floating_point T>
Var<T> softmax(const Var<T>& x) {
  detail::require(x.rank() == 1 || x.rank() == 2, "softmax: expects rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.value().size() / width;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    detail::softmax_span<T>(x.value().data().subspan(r * width, width), out.data().subspan(r * width, width), nullptr);
  }
  Tensor<T> saved = out;
  return make_op<T>(std::move(out), {x}, [saved = std::move(saved), rows, width](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t r = 0; r < rows; ++r)
      detail::softmax_backward_span<T>(saved.data().subspan(r * width, width), g.data().subspan(r * width, width),
                                       gp[0].data().subspan(r * width, width));
  });
}

/// Softmax over a score vector where masked positions receive zero weight.
template <std::floating_point T>
Var<T> masked_softmax(const Var<T>& x, const Mask& mask) {
  detail::require_rank(x.shape(), 1, "masked_softmax");
  detail::count_unmasked(mask, x.dim(0), "masked_softmax");
  Tensor<T> out(x.shape());
  detail::softmax_span<T>(x.value().data(), out.data(), &mask);
  Tensor<T> saved = out;
  return make_op<T>(std::move(out), {x}, [saved = std::move(saved)](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    // Masked entries have y = 0 and therefore receive no gradient.
    detail::softmax_backward_span<T>(saved.data(), g.data(), gp[0].data());
  });
}

/// Reduces x[T×d] over the sequence axis, ignoring masked positions.
template <std::floating_point T>
Var<T> pool_axis(const Var<T>& x, const Mask& mask, PoolKind kind) {
  detail::require_rank(x.shape(), 2, "pool_axis");
  const std::size_t len = x.dim(0), d = x.dim(1);
  const std::size_t n = detail::count_unmasked(mask, len, "pool_axis");
  const auto& X = x.value();
  Tensor<T> out(Shape{d});
  std::vector<std::size_t> argmax;
  Tensor<T> means;

  switch (kind) {
    case PoolKind::max: {
      argmax.assign(d, len);
      for (std::size_t j = 0; j < d; ++j) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t t = 0; t < len; ++t) {
          if (mask[t] && (argmax[j] == len || X.at(t, j) > best)) {
            best = X.at(t, j);
            argmax[j] = t;
          }
        }
        out[j] = best;
      }
      break;
    }
    case PoolKind::avg:
    case PoolKind::var: {
      means = Tensor<T>(Shape{d});
      for (std::size_t t = 0; t < len; ++t)
        if (mask[t])
          for (std::size_t j = 0; j < d; ++j) means[j] += X.at(t, j);
      for (auto& v : means.data()) v /= static_cast<T>(n);
      if (kind == PoolKind::avg) {
        out = means;
        break;
      }
      for (std::size_t t = 0; t < len; ++t)
        if (mask[t])
          for (std::size_t j = 0; j < d; ++j) {
            const T c = X.at(t, j) - means[j];
            out[j] += c * c;
          }
      for (auto& v : out.data()) v /= static_cast<T>(n);
      break;
    }
  }

  auto nx = x.node();
  return make_op<T>(std::move(out), {x},
                    [nx, mask, kind, n, len, d, argmax = std::move(argmax), means = std::move(means)](
                        const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
                      auto& gx = gp[0];
                      const T inv = T{1} / static_cast<T>(n);
                      switch (kind) {
                        case PoolKind::max:
                          for (std::size_t j = 0; j < d; ++j) gx.at(argmax[j], j) += g[j];
                          break;
                        case PoolKind::avg:
                          for (std::size_t t = 0; t < len; ++t)
                            if (mask[t])
                              for (std::size_t j = 0; j < d; ++j) gx.at(t, j) += g[j] * inv;
                          break;
                        case PoolKind::var:
                          // d var / d x_t = 2 (x_t - mean) / n; the mean's own
                          // dependence cancels because deviations sum to zero.
                          for (std::size_t t = 0; t < len; ++t)
                            if (mask[t])
                              for (std::size_t j = 0; j < d; ++j)
                                gx.at(t, j) += g[j] * T{2} * (nx->value.at(t, j) - means[j]) * inv;
                          break;
                      }
                    });
}

template <std::floating_point T>
Var<T> transpose(const Var<T>& x) {
  detail::require_rank(x.shape(), 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.value().at(i, j);
  return make_op<T>(std::move(out), {x}, [r, c](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gp[0].at(i, j) += g.at(j, i);
  });
}

template <std::floating_point T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  detail::require(shape_numel(shape) == x.value().size(),
                  "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), x.value().values());
  return make_op<T>(std::move(out), {x}, [](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < g.size(); ++i) gp[0][i] += g[i];
  });
}

/// Cross-correlation of x[C_in×L] with w[C_out×C_in×k]; stride 1, no padding.
template <std::floating_point T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  detail::require_rank(x.shape(), 2, "conv1d");
  detail::require_rank(w.shape(), 3, "conv1d");
  detail::require_rank(bias.shape(), 1, "conv1d");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  detail::require(w.dim(1) == cin, "conv1d: weights " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  detail::require(bias.dim(0) == cout, "conv1d: bias " + shape_str(bias.shape()) + " for weights " +
                                           shape_str(w.shape()));
  if (k > len) {
    throw DimensionError("conv1d: kernel width " + std::to_string(k) + " exceeds input length " + std::to_string(len));
  }
  const std::size_t out_len = len - k + 1;
  const auto& X = x.value();
  const auto& W = w.value();
  auto widx = [cin, k](std::size_t o, std::size_t c, std::size_t j) { return (o * cin + c) * k + j; };

  Tensor<T> out(Shape{cout, out_len});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t l = 0; l < out_len; ++l) {
      T s = bias.value()[o];
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) s += W[widx(o, c, j)] * X.at(c, l + j);
      out.at(o, l) = s;
    }

  auto nx = x.node();
  auto nw = w.node();
  return make_op<T>(std::move(out), {x, w, bias},
                    [nx, nw, cin, cout, k, out_len, widx](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
                      const auto& X = nx->value;
                      const auto& W = nw->value;
                      for (std::size_t o = 0; o < cout; ++o)
                        for (std::size_t l = 0; l < out_len; ++l) {
                          const T go = g.at(o, l);
                          if (!gp[2].empty()) gp[2][o] += go;
                          for (std::size_t c = 0; c < cin; ++c)
                            for (std::size_t j = 0; j < k; ++j) {
                              if (!gp[0].empty()) gp[0].at(c, l + j) += go * W[widx(o, c, j)];
                              if (!gp[1].empty()) gp[1][widx(o, c, j)] += go * X.at(c, l + j);
                            }
                        }
                    });
}

/// Zero-pads x[C×L] along its length axis.
template <std::floating_point T>
Var<T> pad_length(const Var<T>& x, std::size_t left, std::size_t right) {
  detail::require_rank(x.shape(), 2, "pad_length");
  const std::size_t c = x.dim(0), len = x.dim(1);
  const std::size_t padded = len + left + right;
  Tensor<T> out(Shape{c, padded});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t l = 0; l < len; ++l) out.at(i, l + left) = x.value().at(i, l);
  return make_op<T>(std::move(out), {x}, [c, len, left](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t l = 0; l < len; ++l) gp[0].at(i, l) += g.at(i, l + left);
  });
}

/// Contiguous range of a vector.
template <std::floating_point T>
Var<T> slice(const Var<T>& x, std::size_t begin, std::size_t count) {
  detail::require_rank(x.shape(), 1, "slice");
  detail::require(begin + count <= x.dim(0) && count > 0,
                  "slice: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + shape_str(x.shape()));
  std::vector<T> vals(x.value().values().begin() + static_cast<std::ptrdiff_t>(begin),
                      x.value().values().begin() + static_cast<std::ptrdiff_t>(begin + count));
  return make_op<T>(Tensor<T>::vector(std::move(vals)), {x}, [begin](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < g.size(); ++i) gp[0][begin + i] += g[i];
  });
}

/// Row t of a matrix as a vector.
template <std::floating_point T>
Var<T> row(const Var<T>& x, std::size_t t) {
  detail::require_rank(x.shape(), 2, "row");
  detail::require(t < x.dim(0), "row: index " + std::to_string(t) + " out of " + shape_str(x.shape()));
  const std::size_t d = x.dim(1);
  std::vector<T> vals(d);
  for (std::size_t j = 0; j < d; ++j) vals[j] = x.value().at(t, j);
  return make_op<T>(Tensor<T>::vector(std::move(vals)), {x}, [t, d](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t j = 0; j < d; ++j) gp[0].at(t, j) += g[j];
  });
}

/// Stacks equally sized vectors as the rows of a matrix.
template <std::floating_point T>
Var<T> stack(const std::vector<Var<T>>& rows) {
  detail::require(!rows.empty(), "stack: no inputs");
  const std::size_t d = rows.front().value().size();
  for (const auto& r : rows)
    detail::require(r.rank() == 1 && r.dim(0) == d, "stack: row of shape " + shape_str(r.shape()) +
                                                        " among rows of length " + std::to_string(d));
  const std::size_t n = rows.size();
  Tensor<T> out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rows[i].value()[j];
  return make_op<T>(std::move(out), rows, [n, d](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < n; ++i)
      if (!gp[i].empty())
        for (std::size_t j = 0; j < d; ++j) gp[i][j] += g.at(i, j);
  });
}

/// Concatenates vectors end to end.
template <std::floating_point T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat: no inputs");
  std::vector<T> vals;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 1, "concat");
    offsets.push_back(vals.size());
    vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
  }
  return make_op<T>(Tensor<T>::vector(std::move(vals)), parts,
                    [offsets = std::move(offsets)](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
                      for (std::size_t i = 0; i < gp.size(); ++i)
                        if (!gp[i].empty())
                          for (std::size_t j = 0; j < gp[i].size(); ++j) gp[i][j] += g[offsets[i] + j];
                    });
}

/// Concatenates matrices with equal row counts along the feature axis.
template <std::floating_point T>
Var<T> concat_features(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_features: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> offsets, widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.rank() == 2 && p.dim(0) == rows, "concat_features: part " + shape_str(p.shape()));
    offsets.push_back(total);
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Tensor<T> out(Shape{rows, total});
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t j = 0; j < widths[i]; ++j) out.at(t, offsets[i] + j) = parts[i].value().at(t, j);
  return make_op<T>(std::move(out), parts,
                    [rows, offsets = std::move(offsets), widths = std::move(widths)](const Tensor<T>& g,
                                                                                     std::vector<Tensor<T>>& gp) {
                      for (std::size_t i = 0; i < gp.size(); ++i)
                        if (!gp[i].empty())
                          for (std::size_t t = 0; t < rows; ++t)
                            for (std::size_t j = 0; j < widths[i]; ++j) gp[i].at(t, j) += g.at(t, offsets[i] + j);
                    });
}

template <std::floating_point T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (T v : x.value().data()) s += v;
  return make_op<T>(Tensor<T>::scalar(s), {x}, [](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    const T go = g[0];
    for (auto& v : gp[0].data()) v += go;
  });
}

/// Mean over the batch of -log softmax(logits)[label] for logits[B×C].
template <std::floating_point T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  detail::require_rank(logits.shape(), 2, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  detail::require(labels.size() == batch, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                              std::to_string(batch) + " rows");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw LabelError("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  Tensor<T> probs(logits.shape());
  T loss{0};
  for (std::size_t b = 0; b < batch; ++b) {
    auto in = logits.value().data().subspan(b * classes, classes);
    auto out = probs.data().subspan(b * classes, classes);
    detail::softmax_span<T>(in, out, nullptr);
    // log-sum-exp form keeps tiny losses exact instead of log(1 - eps).
    T peak = in[0];
    for (T v : in) peak = std::max(peak, v);
    T z{0};
    for (T v : in) z += std::exp(v - peak);
    loss += peak + std::log(z) - in[static_cast<std::size_t>(labels[b])];
  }
  loss /= static_cast<T>(batch);
  std::vector<int> saved_labels(labels.begin(), labels.end());
  return make_op<T>(Tensor<T>::scalar(loss), {logits},
                    [probs = std::move(probs), saved_labels = std::move(saved_labels), batch, classes](
                        const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
                      const T s = g[0] / static_cast<T>(batch);
                      for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t c = 0; c < classes; ++c) {
                          const T onehot = static_cast<int>(c) == saved_labels[b] ? T{1} : T{0};
                          gp[0].at(b, c) += s * (probs.at(b, c) - onehot);
                        }
                    });
}

/// Inverted dropout: survivors are scaled by 1/(1-p). Identity when not training.
template <std::floating_point T>
Var<T> dropout(const Var<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T scale_by = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> factors(x.shape());
  for (auto& f : factors.data()) f = uniform_unit(rng) >= p ? scale_by : T{0};
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors[i];
  return make_op<T>(std::move(out), {x}, [factors = std::move(factors)](const Tensor<T>& g, std::vector<Tensor<T>>& gp) {
    for (std::size_t i = 0; i < g.size(); ++i) gp[0][i] += g[i] * factors[i];
  });
}

/// W x + b.
template <std::floating_point T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add(matvec(w, x), b);
}

/// Zeroes masked rows of x[T×d].
template <std::floating_point T>
Var<T> mask_rows(const Var<T>& x, const Mask& mask) {
  detail::require(mask.size() == x.dim(0), "mask_rows: mask length " + std::to_string(mask.size()) + " for " +
                                               shape_str(x.shape()));
  std::vector<T> keep(mask.size());
  for (std::size_t t = 0; t < mask.size(); ++t) keep[t] = mask[t] ? T{1} : T{0};
  return gate_positions(x, Var<T>::constant(Tensor<T>::vector(std::move(keep))));
}

}  // namespace hsd
