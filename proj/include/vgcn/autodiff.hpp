#pragma once

// Reverse-mode differentiation over a closed set of dense-tensor operations.
//
// A Tape records every operation in execution order. Each recorded node owns
// its forward value and, once backward() reaches it, an accumulated gradient of
// identical shape. Backward walks nodes in exact reverse order, so replaying
// the same tape yields bit-identical gradients.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vgcn/errors.hpp"
#include "vgcn/tensor.hpp"

namespace vgcn::ad {

template <class T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape<T>& tape() const { return *tape_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }
  Var<T> parameter(Tensor<T> value) { return push(std::move(value), true, nullptr); }

  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer for node `id`, allocated on first use; nullptr when the
  /// node does not require a gradient.
  Tensor<T>* grad_target(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.grad) n.grad.emplace(n.value.shape(), T(0));
    return &*n.grad;
  }

  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw ContractViolation("backward: loss belongs to another tape");
    const Tensor<T>& lv = value(loss.id());
    if (lv.size() != 1) {
      throw ContractViolation("backward: loss must be scalar, got " + shape_string(lv.shape()));
    }
    Tensor<T>* seed = grad_target(loss.id());
    if (!seed) return;
    (*seed)[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad) n.backward(*this, *n.grad);
    }
  }

  /// Gradient of the last backward() w.r.t. `v`; zeros when unreachable.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad) return *n.grad;
    return Tensor<T>(n.value.shape(), T(0));
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.reset();
  }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor<T>> grad;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(fn), std::nullopt});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMatrix<T>>;
template <class T>
using MapConstMat = Eigen::Map<const RowMatrix<T>>;

template <class T>
MapConstMat<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapConstMat<T>(t.data().data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

template <class T>
MapMat<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapMat<T>(t.data().data(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

template <class T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("operands live on different tapes");
  return a.tape();
}

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  if (m && n) {
    detail::as_matrix(out, m, n).noalias() =
        detail::as_matrix(av, m, k) * detail::as_matrix(bv, k, n);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
                       if (Tensor<T>* ga = t.grad_target(ia)) {
                         detail::as_matrix(*ga, m, k).noalias() +=
                             detail::as_matrix(g, m, n) *
                             detail::as_matrix(t.value(ib), k, n).transpose();
                       }
                       if (Tensor<T>* gb = t.grad_target(ib)) {
                         detail::as_matrix(*gb, k, n).noalias() +=
                             detail::as_matrix(t.value(ia), m, k).transpose() *
                             detail::as_matrix(g, m, n);
                       }
                     });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<T>& t, const Tensor<T>& g) {
                       if (Tensor<T>* ga = t.grad_target(ia)) *ga += g;
                       if (Tensor<T>* gb = t.grad_target(ib)) *gb += g;
                     });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "sub");
  Tensor<T> out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<T>& t, const Tensor<T>& g) {
                       if (Tensor<T>* ga = t.grad_target(ia)) *ga += g;
                       if (Tensor<T>* gb = t.grad_target(ib)) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                       }
                     });
}

/// Sum of any number of same-shape operands.
template <class T>
Var<T> add_n(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ContractViolation("add_n: no operands");
  Var<T> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, s](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* ga = t.grad_target(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
    }
  });
}

/// out[r, c] = a[r, c] + bias[c] for a[n×m], bias[m].
template <class T>
Var<T> add_bias(const Var<T>& a, const Var<T>& bias) {
  Tape<T>& tape = detail::same_tape(a, bias);
  const Tensor<T>& av = a.value();
  detail::require_rank(av, 2, "add_bias");
  const std::size_t n = av.dim(0), m = av.dim(1);
  if (bias.value().size() != m) {
    throw DimensionError("add_bias: " + shape_string(av.shape()) + " + " +
                         shape_string(bias.value().shape()));
  }
  Tensor<T> out = av;
  const auto bd = bias.value().data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bd[c];
  const std::size_t ia = a.id(), ib = bias.id();
  return tape.record(std::move(out), a.requires_grad() || bias.requires_grad(),
                     [ia, ib, n, m](Tape<T>& t, const Tensor<T>& g) {
                       if (Tensor<T>* ga = t.grad_target(ia)) *ga += g;
                       if (Tensor<T>* gb = t.grad_target(ib)) {
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t c = 0; c < m; ++c) (*gb)[c] += g[r * m + c];
                       }
                     });
}

/// Elementwise max(0, x); the subgradient at exactly 0 is 0.
template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(), [ix](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_target(ix)) {
      const Tensor<T>& xv = t.value(ix);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > T(0)) (*gx)[i] += g[i];
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
  const std::size_t ix = x.id();
  auto y = std::make_shared<Tensor<T>>(out);
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, y](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* gx = t.grad_target(ix)) {
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*gx)[i] += g[i] * (*y)[i] * (T(1) - (*y)[i]);
                           }
                         });
}

/// Elementwise clamp into [lo, hi]; zero gradient where the clamp is active.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::clamp(v, lo, hi);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, lo, hi](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* gx = t.grad_target(ix)) {
                             const Tensor<T>& xv = t.value(ix);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (xv[i] > lo && xv[i] < hi) (*gx)[i] += g[i];
                           }
                         });
}

/// Horizontal concatenation of matrices sharing a row count.
template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no operands");
  Tape<T>& tape = parts[0].tape();
  const std::size_t rows = parts[0].value().dim(0);
  std::vector<std::size_t> widths, ids;
  bool needs_grad = false;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    detail::require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != rows) {
      throw DimensionError("concat_cols: " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.value().dim(1));
    ids.push_back(p.id());
    total += p.value().dim(1);
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor<T> out({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data().begin() + r * widths[k], widths[k],
                  out.data().begin() + r * total + off);
    off += widths[k];
  }
  return tape.record(std::move(out), needs_grad,
                     [ids, widths, rows, total](Tape<T>& t, const Tensor<T>& g) {
                       std::size_t o = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (Tensor<T>* gp = t.grad_target(ids[k])) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[k]; ++c)
                               (*gp)[r * widths[k] + c] += g[r * total + o + c];
                         }
                         o += widths[k];
                       }
                     });
}

/// out[r] = a[index[r]] for a[n×m].
template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> index) {
  const Tensor<T>& av = a.value();
  detail::require_rank(av, 2, "gather_rows");
  const std::size_t n = av.dim(0), m = av.dim(1);
  Tensor<T> out({index.size(), m});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n) throw ContractViolation("gather_rows: index out of range");
    std::copy_n(av.data().begin() + index[r] * m, m, out.data().begin() + r * m);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, m, index = std::move(index)](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* ga = t.grad_target(ia)) {
                             for (std::size_t r = 0; r < index.size(); ++r)
                               for (std::size_t c = 0; c < m; ++c)
                                 (*ga)[index[r] * m + c] += g[r * m + c];
                           }
                         });
}

/// out[index[r]] += a[r]; out has `rows` rows.
template <class T>
Var<T> scatter_add_rows(const Var<T>& a, std::vector<std::size_t> index, std::size_t rows) {
  const Tensor<T>& av = a.value();
  detail::require_rank(av, 2, "scatter_add_rows");
  const std::size_t m = av.dim(1);
  if (index.size() != av.dim(0)) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_string(av.shape()));
  }
  Tensor<T> out({rows, m});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ContractViolation("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out[index[r] * m + c] += av[r * m + c];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, m, index = std::move(index)](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* ga = t.grad_target(ia)) {
                             for (std::size_t r = 0; r < index.size(); ++r)
                               for (std::size_t c = 0; c < m; ++c)
                                 (*ga)[r * m + c] += g[index[r] * m + c];
                           }
                         });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor<T>::scalar(s), a.requires_grad(),
                         [ia](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* ga = t.grad_target(ia))
                             for (T& v : ga->data()) v += g[0];
                         });
}

/// Σ a[i]·w[i] for a constant weight tensor of the same shape.
template <class T>
Var<T> dot(const Var<T>& a, const Tensor<T>& w) {
  a.value().require_same_shape(w, "dot");
  T s = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) s += a.value()[i] * w[i];
  const std::size_t ia = a.id();
  return a.tape().record(Tensor<T>::scalar(s), a.requires_grad(),
                         [ia, w](Tape<T>& t, const Tensor<T>& g) {
                           if (Tensor<T>* ga = t.grad_target(ia))
                             for (std::size_t i = 0; i < w.size(); ++i) (*ga)[i] += g[0] * w[i];
                         });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractViolation("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

/// Bilinear sampling of feature maps at normalized coordinates.
///
/// `maps` is [B×C×H×W] (or [C×H×W], treated as B = 1), `coords` is [n×2]
/// holding (x, y) per row and `batch` selects the map for each row (empty:
/// all rows sample map 0). (0, 0) is the centre of cell (0, 0) and (1, 1)
/// the centre of cell (H−1, W−1). Coordinates are clamped to [0, 1] first;
/// the coordinate gradient is zero along clamped axes. Output is [n×C].
template <class T>
Var<T> bilinear_sample(const Var<T>& maps, const Var<T>& coords,
                       std::vector<std::size_t> batch = {}) {
  Tape<T>& tape = detail::same_tape(maps, coords);
  const Tensor<T>& mv = maps.value();
  const Tensor<T>& cv = coords.value();
  std::size_t B, C, H, W;
  if (mv.rank() == 3) {
    B = 1, C = mv.dim(0), H = mv.dim(1), W = mv.dim(2);
  } else if (mv.rank() == 4) {
    B = mv.dim(0), C = mv.dim(1), H = mv.dim(2), W = mv.dim(3);
  } else {
    throw DimensionError("bilinear_sample: maps must be rank 3 or 4, got " +
                         shape_string(mv.shape()));
  }
  if (H < 2 || W < 2) throw ContractViolation("bilinear_sample: maps must be at least 2x2");
  if (cv.rank() != 2 || cv.dim(1) != 2) {
    throw DimensionError("bilinear_sample: coords must be [n x 2], got " +
                         shape_string(cv.shape()));
  }
  const std::size_t n = cv.dim(0);
  if (!batch.empty() && batch.size() != n) {
    throw DimensionError("bilinear_sample: batch index length mismatch");
  }

  struct Cell {
    std::size_t b, x0, y0;
    T fx, fy;
    bool free_x, free_y;
  };
  auto cells = std::make_shared<std::vector<Cell>>(n);
  Tensor<T> out({n, C});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t b = batch.empty() ? 0 : batch[r];
    if (b >= B) throw ContractViolation("bilinear_sample: batch index out of range");
    const T x = cv[2 * r], y = cv[2 * r + 1];
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw InvalidInput("bilinear_sample: non-finite coordinate");
    }
    const T xc = std::clamp(x, T(0), T(1)), yc = std::clamp(y, T(0), T(1));
    const T px = xc * T(W - 1), py = yc * T(H - 1);
    std::size_t x0 = std::min(static_cast<std::size_t>(px), W - 2);
    std::size_t y0 = std::min(static_cast<std::size_t>(py), H - 2);
    const T fx = px - T(x0), fy = py - T(y0);
    (*cells)[r] = Cell{b, x0, y0, fx, fy, x > T(0) && x < T(1), y > T(0) && y < T(1)};
    const T* base = mv.data().data() + b * C * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = base + c * H * W + y0 * W + x0;
      out[r * C + c] = (T(1) - fy) * ((T(1) - fx) * p[0] + fx * p[1]) +
                       fy * ((T(1) - fx) * p[W] + fx * p[W + 1]);
    }
  }
  const std::size_t im = maps.id(), ic = coords.id();
  return tape.record(
      std::move(out), maps.requires_grad() || coords.requires_grad(),
      [im, ic, cells, C, H, W](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* gm = t.grad_target(im);
        Tensor<T>* gc = t.grad_target(ic);
        const Tensor<T>& mv = t.value(im);
        for (std::size_t r = 0; r < cells->size(); ++r) {
          const Cell& cell = (*cells)[r];
          const std::size_t off = cell.b * C * H * W + cell.y0 * W + cell.x0;
          T dx = T(0), dy = T(0);
          for (std::size_t c = 0; c < C; ++c) {
            const T gr = g[r * C + c];
            const std::size_t o = off + c * H * W;
            if (gm) {
              (*gm)[o] += gr * (T(1) - cell.fy) * (T(1) - cell.fx);
              (*gm)[o + 1] += gr * (T(1) - cell.fy) * cell.fx;
              (*gm)[o + W] += gr * cell.fy * (T(1) - cell.fx);
              (*gm)[o + W + 1] += gr * cell.fy * cell.fx;
            }
            if (gc) {
              const T v00 = mv[o], v01 = mv[o + 1], v10 = mv[o + W], v11 = mv[o + W + 1];
              dx += gr * ((T(1) - cell.fy) * (v01 - v00) + cell.fy * (v11 - v10));
              dy += gr * ((T(1) - cell.fx) * (v10 - v00) + cell.fx * (v11 - v01));
            }
          }
          if (gc) {
            if (cell.free_x) (*gc)[2 * r] += dx * T(W - 1);
            if (cell.free_y) (*gc)[2 * r + 1] += dy * T(H - 1);
          }
        }
      });
}

/// 2-D convolution, x[B×C×H×W] * w[O×C×k×k] + b[O], square kernel, zero padding.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride,
              std::size_t pad) {
  Tape<T>& tape = detail::same_tape(x, w);
  detail::same_tape(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  detail::require_rank(xv, 4, "conv2d input");
  detail::require_rank(wv, 4, "conv2d weight");
  const std::size_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::size_t O = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != C || wv.dim(3) != k || b.value().size() != O) {
    throw DimensionError("conv2d: input " + shape_string(xv.shape()) + " weight " +
                         shape_string(wv.shape()) + " bias " + shape_string(b.value().shape()));
  }
  if (stride == 0 || H + 2 * pad < k || W + 2 * pad < k) {
    throw ContractViolation("conv2d: invalid stride/padding for input " + shape_string(xv.shape()));
  }
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;
  const std::size_t P = Ho * Wo, Kdim = C * k * k, cols = B * P;

  auto col = std::make_shared<Tensor<T>>(Shape{Kdim, cols});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          T* row = col->data().data() + ((c * k + ky) * k + kx) * cols + bi * P;
          const T* src = xv.data().data() + (bi * C + c) * H * W;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              row[oy * Wo + ox] = (iy >= 0 && iy < static_cast<long>(H) && ix >= 0 &&
                                   ix < static_cast<long>(W))
                                      ? src[iy * static_cast<long>(W) + ix]
                                      : T(0);
            }
          }
        }

  detail::RowMatrix<T> prod = detail::as_matrix(wv, O, Kdim) * detail::as_matrix(*col, Kdim, cols);
  Tensor<T> out({B, O, Ho, Wo});
  const auto bd = b.value().data();
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t o = 0; o < O; ++o) {
      T* dst = out.data().data() + (bi * O + o) * P;
      const T* src = prod.data() + o * cols + bi * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bd[o];
    }

  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  const bool needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return tape.record(
      std::move(out), needs,
      [=](Tape<T>& t, const Tensor<T>& g) {
        detail::RowMatrix<T> gm(O, cols);
        for (std::size_t bi = 0; bi < B; ++bi)
          for (std::size_t o = 0; o < O; ++o)
            std::copy_n(g.data().data() + (bi * O + o) * P, P, gm.data() + o * cols + bi * P);
        if (Tensor<T>* gw = t.grad_target(iw)) {
          detail::as_matrix(*gw, O, Kdim).noalias() +=
              gm * detail::as_matrix(*col, Kdim, cols).transpose();
        }
        if (Tensor<T>* gb = t.grad_target(ib)) {
          for (std::size_t o = 0; o < O; ++o) (*gb)[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (Tensor<T>* gx = t.grad_target(ix)) {
          detail::RowMatrix<T> dcol =
              detail::as_matrix(t.value(iw), O, Kdim).transpose() * gm;
          for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const T* row = dcol.data() + ((c * k + ky) * k + kx) * cols + bi * P;
                  T* dst = gx->data().data() + (bi * C + c) * H * W;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const long ixx = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                      if (ixx < 0 || ixx >= static_cast<long>(W)) continue;
                      dst[iy * static_cast<long>(W) + ixx] += row[oy * Wo + ox];
                    }
                  }
                }
        }
      });
}

/// Mean binary cross-entropy between sigmoid(logits) and `target`, restricted
/// to elements whose `weight` is non-zero (weights multiply each term; the
/// mean divides by the weight sum). Empty weight means all ones.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target,
                       const Tensor<T>& weight = Tensor<T>()) {
  const Tensor<T>& z = logits.value();
  z.require_same_shape(target, "bce_with_logits");
  const bool weighted = !weight.empty();
  if (weighted) z.require_same_shape(weight, "bce_with_logits weight");
  T total = T(0), wsum = T(0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T wi = weighted ? weight[i] : T(1);
    if (wi == T(0)) continue;
    const T zi = z[i];
    total += wi * (std::max(zi, T(0)) - zi * target[i] + std::log1p(std::exp(-std::abs(zi))));
    wsum += wi;
  }
  const T denom = wsum > T(0) ? wsum : T(1);
  const std::size_t il = logits.id();
  return logits.tape().record(
      Tensor<T>::scalar(total / denom), logits.requires_grad(),
      [il, target, weight, weighted, denom](Tape<T>& t, const Tensor<T>& g) {
        if (Tensor<T>* gl = t.grad_target(il)) {
          const Tensor<T>& z = t.value(il);
          for (std::size_t i = 0; i < z.size(); ++i) {
            const T wi = weighted ? weight[i] : T(1);
            if (wi == T(0)) continue;
            const T s = T(1) / (T(1) + std::exp(-z[i]));
            (*gl)[i] += g[0] * wi * (s - target[i]) / denom;
          }
        }
      });
}

}  // namespace vgcn::ad
