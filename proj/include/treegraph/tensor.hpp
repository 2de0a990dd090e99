#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "treegraph/error.hpp"
#include "treegraph/kernels.hpp"

namespace tg {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

// Integer index arrays (k-NN neighbor tables etc.). Not differentiable.
struct IndexArray {
  std::vector<int> shape;
  std::vector<std::int32_t> data;

  IndexArray() = default;
  IndexArray(std::vector<int> s, std::vector<std::int32_t> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("IndexArray: shape " + shape_str(shape) +
                       " does not match element count");
  }
};

template <typename Real>
struct TensorNode {
  std::vector<int> shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return value.size(); }
  Real* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    return grad.data();
  }
};

template <typename Real>
using NodePtr = std::shared_ptr<TensorNode<Real>>;

// Graph recording is thread-local so independent model instances can run on
// separate threads.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

// Dense n-d array of Real with optional gradient; value-semantic handle onto
// a shared node in the reverse-mode tape.
template <typename Real>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(NodePtr<Real> n) : node_(std::move(n)) {}

  static BasicTensor zeros(std::vector<int> shape) {
    return full(std::move(shape), Real(0));
  }
  static BasicTensor full(std::vector<int> shape, Real v) {
    check_shape(shape);
    auto n = std::make_shared<TensorNode<Real>>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    return BasicTensor(std::move(n));
  }
  static BasicTensor from_data(std::vector<int> shape, std::vector<Real> data) {
    check_shape(shape);
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor shape " + shape_str(shape) + " expects " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    auto n = std::make_shared<TensorNode<Real>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return BasicTensor(std::move(n));
  }
  static BasicTensor scalar(Real v) { return full({1}, v); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return node_->value.size(); }

  Real* data() { return node_->value.data(); }
  const Real* data() const { return node_->value.data(); }
  std::span<const Real> values() const { return node_->value; }
  std::vector<Real>& vec() { return node_->value; }

  Real item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  // Gradient buffer, allocated zero-filled on first access.
  std::span<Real> grad() { return {node_->grad_data(), size()}; }
  bool has_grad() const { return node_->grad.size() == size(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  NodePtr<Real>& node() { return node_; }
  const NodePtr<Real>& node() const { return node_; }

  // Reverse-mode sweep from a scalar output. The recorded tape is released
  // afterwards; leaf gradients accumulate until zero_grad().
  void backward() {
    if (size() != 1) throw ContractError("backward() requires a scalar output, got " + shape_str(shape()));
    std::vector<NodePtr<Real>> order;
    topo_order(node_, order);
    node_->grad_data()[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<Real>& n = **it;
      if (n.backprop) {
        if (n.grad.size() == n.value.size()) n.backprop(n);
        // intermediates release grad + tape edges as soon as they are consumed
        n.grad = {};
        n.backprop = nullptr;
        n.parents.clear();
      }
    }
  }

 private:
  static void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
    for (int d : shape)
      if (d < 1) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }

  static void topo_order(const NodePtr<Real>& root, std::vector<NodePtr<Real>>& order) {
    std::unordered_set<TensorNode<Real>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<NodePtr<Real>, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        NodePtr<Real> p = node->parents[next++];
        if (seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  NodePtr<Real> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Builds an op result node. When grad recording is off or no parent needs a
// gradient, the tape edge is dropped and the result is a plain value.
template <typename Real>
BasicTensor<Real> make_op(std::vector<int> shape, std::vector<Real> value,
                          std::vector<NodePtr<Real>> parents,
                          std::function<void(TensorNode<Real>&)> backprop) {
  auto out = BasicTensor<Real>::from_data(std::move(shape), std::move(value));
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents)
      if (p->requires_grad) needs = true;
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

namespace detail {

template <typename Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": operand shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Splits a shape into (outer, extent-of-axis, inner) for axis reductions.
inline void axis_split(const std::vector<int>& shape, int axis,
                       std::size_t& outer, std::size_t& red, std::size_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[i]);
  red = static_cast<std::size_t>(shape[axis]);
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= static_cast<std::size_t>(shape[i]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> v(a.size());
  const Real* pa = a.data();
  const Real* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + pb[i];
  auto na = a.node();
  auto nb = b.node();
  return make_op<Real>(a.shape(), std::move(v), {na, nb}, [na, nb](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    if (na->requires_grad) {
      Real* ga = na->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) ga[i] += g[i];
    }
    if (nb->requires_grad) {
      Real* gb = nb->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> v(a.size());
  const Real* pa = a.data();
  const Real* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] - pb[i];
  auto na = a.node();
  auto nb = b.node();
  return make_op<Real>(a.shape(), std::move(v), {na, nb}, [na, nb](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    if (na->requires_grad) {
      Real* ga = na->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) ga[i] += g[i];
    }
    if (nb->requires_grad) {
      Real* gb = nb->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<Real> v(a.size());
  const Real* pa = a.data();
  const Real* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * pb[i];
  auto na = a.node();
  auto nb = b.node();
  return make_op<Real>(a.shape(), std::move(v), {na, nb}, [na, nb](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    if (na->requires_grad) {
      Real* ga = na->grad_data();
      const Real* pb2 = nb->value.data();
      for (std::size_t i = 0; i < n.size(); ++i) ga[i] += g[i] * pb2[i];
    }
    if (nb->requires_grad) {
      Real* gb = nb->grad_data();
      const Real* pa2 = na->value.data();
      for (std::size_t i = 0; i < n.size(); ++i) gb[i] += g[i] * pa2[i];
    }
  });
}

template <typename Real>
BasicTensor<Real> mul_scalar(const BasicTensor<Real>& a, Real s) {
  std::vector<Real> v(a.size());
  const Real* pa = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * s;
  auto na = a.node();
  return make_op<Real>(a.shape(), std::move(v), {na}, [na, s](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    Real* ga = na->grad_data();
    for (std::size_t i = 0; i < n.size(); ++i) ga[i] += g[i] * s;
  });
}

template <typename Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& a, Real slope) {
  if (!(slope > Real(0)) || slope >= Real(1))
    throw ConfigError("leaky_relu slope must be in (0,1)");
  std::vector<Real> v(a.size());
  const Real* pa = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] > Real(0) ? pa[i] : slope * pa[i];
  auto na = a.node();
  // slope > 0 keeps sign(out) == sign(in); backward reads the output only
  return make_op<Real>(a.shape(), std::move(v), {na}, [na, slope](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    const Real* y = n.value.data();
    Real* ga = na->grad_data();
    for (std::size_t i = 0; i < n.size(); ++i) ga[i] += g[i] * (y[i] > Real(0) ? Real(1) : slope);
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename Real>
BasicTensor<Real> sum_all(const BasicTensor<Real>& a) {
  double acc = 0.0;
  const Real* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(pa[i]);
  auto na = a.node();
  return make_op<Real>({1}, {static_cast<Real>(acc)}, {na}, [na](TensorNode<Real>& n) {
    const Real g = n.grad[0];
    Real* ga = na->grad_data();
    for (std::size_t i = 0; i < na->size(); ++i) ga[i] += g;
  });
}

// Max over one axis (axis removed). Ties route the gradient to the lowest
// index along the axis.
template <typename Real>
BasicTensor<Real> max_over_axis(const BasicTensor<Real>& a, int axis) {
  std::size_t outer, red, inner;
  detail::axis_split(a.shape(), axis, outer, red, inner);
  std::vector<int> oshape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) oshape.push_back(a.dim(i));
  if (oshape.empty()) oshape.push_back(1);

  std::vector<Real> v(outer * inner);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(outer * inner);
  const Real* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* base = pa + o * red * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      Real best = base[i];
      std::int32_t bi = 0;
      for (std::size_t r = 1; r < red; ++r) {
        const Real x = base[r * inner + i];
        if (x > best) {
          best = x;
          bi = static_cast<std::int32_t>(r);
        }
      }
      v[o * inner + i] = best;
      (*argmax)[o * inner + i] = bi;
    }
  }
  auto na = a.node();
  return make_op<Real>(std::move(oshape), std::move(v), {na},
                       [na, argmax, red, inner](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         Real* ga = na->grad_data();
                         const std::size_t m = n.size();
                         for (std::size_t oi = 0; oi < m; ++oi) {
                           const std::size_t o = oi / inner;
                           const std::size_t i = oi % inner;
                           ga[(o * red + (*argmax)[oi]) * inner + i] += g[oi];
                         }
                       });
}

template <typename Real>
BasicTensor<Real> mean_over_axis(const BasicTensor<Real>& a, int axis) {
  std::size_t outer, red, inner;
  detail::axis_split(a.shape(), axis, outer, red, inner);
  std::vector<int> oshape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) oshape.push_back(a.dim(i));
  if (oshape.empty()) oshape.push_back(1);

  std::vector<Real> v(outer * inner);
  const Real* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* base = pa + o * red * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < red; ++r) acc += static_cast<double>(base[r * inner + i]);
      v[o * inner + i] = static_cast<Real>(acc / static_cast<double>(red));
    }
  }
  auto na = a.node();
  return make_op<Real>(std::move(oshape), std::move(v), {na},
                       [na, red, inner](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         Real* ga = na->grad_data();
                         const Real inv = Real(1) / static_cast<Real>(red);
                         const std::size_t m = n.size();
                         for (std::size_t oi = 0; oi < m; ++oi) {
                           const std::size_t o = oi / inner;
                           const std::size_t i = oi % inner;
                           const Real gr = g[oi] * inv;
                           Real* dst = ga + o * red * inner + i;
                           for (std::size_t r = 0; r < red; ++r) dst[r * inner] += gr;
                         }
                       });
}

// Euclidean norm along one axis; the axis is kept with extent 1.
// At a zero group the (sub)gradient is taken as 0.
template <typename Real>
BasicTensor<Real> l2_norm_axis(const BasicTensor<Real>& a, int axis) {
  std::size_t outer, red, inner;
  detail::axis_split(a.shape(), axis, outer, red, inner);
  std::vector<int> oshape = a.shape();
  oshape[static_cast<std::size_t>(axis)] = 1;

  std::vector<Real> v(outer * inner);
  const Real* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* base = pa + o * red * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < red; ++r) {
        const double x = static_cast<double>(base[r * inner + i]);
        acc += x * x;
      }
      v[o * inner + i] = static_cast<Real>(std::sqrt(acc));
    }
  }
  auto na = a.node();
  return make_op<Real>(std::move(oshape), std::move(v), {na},
                       [na, red, inner](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         const Real* r_ = n.value.data();
                         const Real* x = na->value.data();
                         Real* ga = na->grad_data();
                         const std::size_t m = n.size();
                         for (std::size_t oi = 0; oi < m; ++oi) {
                           const Real r = r_[oi];
                           if (!(r > Real(1e-12))) continue;
                           const std::size_t o = oi / inner;
                           const std::size_t i = oi % inner;
                           const Real s = g[oi] / r;
                           const Real* xs = x + o * red * inner + i;
                           Real* gs = ga + o * red * inner + i;
                           for (std::size_t rr = 0; rr < red; ++rr)
                             gs[rr * inner] += s * xs[rr * inner];
                         }
                       });
}

// x / (||x||_axis + eps). Zero groups map to zero with zero (sub)gradient.
template <typename Real>
BasicTensor<Real> l2_normalize_axis(const BasicTensor<Real>& a, int axis, Real eps) {
  if (!(eps > Real(0))) throw ConfigError("l2_normalize_axis: eps must be positive");
  std::size_t outer, red, inner;
  detail::axis_split(a.shape(), axis, outer, red, inner);

  std::vector<Real> v(a.size());
  auto norms = std::make_shared<std::vector<Real>>(outer * inner);
  const Real* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* base = pa + o * red * inner;
    Real* vbase = v.data() + o * red * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < red; ++r) {
        const double x = static_cast<double>(base[r * inner + i]);
        acc += x * x;
      }
      const Real nr = static_cast<Real>(std::sqrt(acc));
      (*norms)[o * inner + i] = nr;
      const Real s = Real(1) / (nr + eps);
      for (std::size_t r = 0; r < red; ++r) vbase[r * inner + i] = base[r * inner + i] * s;
    }
  }
  auto na = a.node();
  return make_op<Real>(a.shape(), std::move(v), {na},
                       [na, norms, eps, red, inner](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         const Real* x = na->value.data();
                         Real* ga = na->grad_data();
                         const std::size_t groups = norms->size();
                         for (std::size_t oi = 0; oi < groups; ++oi) {
                           const Real r = (*norms)[oi];
                           if (!(r > Real(1e-12))) continue;
                           const std::size_t o = oi / inner;
                           const std::size_t i = oi % inner;
                           const Real s = Real(1) / (r + eps);
                           const Real* xs = x + o * red * inner + i;
                           const Real* gs = g + o * red * inner + i;
                           Real* dst = ga + o * red * inner + i;
                           double dot = 0.0;
                           for (std::size_t rr = 0; rr < red; ++rr)
                             dot += static_cast<double>(gs[rr * inner]) * xs[rr * inner];
                           const Real c = static_cast<Real>(dot) * s * s / r;
                           for (std::size_t rr = 0; rr < red; ++rr)
                             dst[rr * inner] += s * gs[rr * inner] - c * xs[rr * inner];
                         }
                       });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename Real>
BasicTensor<Real> concat_axis(const std::vector<BasicTensor<Real>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat_axis: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat_axis: axis " + std::to_string(axis) + " out of range");
  std::vector<int> oshape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw ShapeError("concat_axis: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != oshape[static_cast<std::size_t>(i)])
        throw ShapeError("concat_axis: shapes " + shape_str(oshape) + " vs " +
                         shape_str(p.shape()) + " differ off-axis");
    total += p.dim(axis);
  }
  oshape[static_cast<std::size_t>(axis)] = total;

  std::size_t outer, red, inner;
  detail::axis_split(oshape, axis, outer, red, inner);
  std::vector<Real> v(shape_numel(oshape));
  std::vector<NodePtr<Real>> nodes;
  std::vector<std::size_t> extents;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pr = static_cast<std::size_t>(p.dim(axis));
    const Real* src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(src + o * pr * inner, src + (o + 1) * pr * inner,
                v.data() + (o * red + off) * inner);
    nodes.push_back(p.node());
    extents.push_back(pr);
    off += pr;
  }
  auto parents = nodes;
  return make_op<Real>(std::move(oshape), std::move(v), std::move(parents),
                       [nodes, extents, outer, red, inner](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         std::size_t off2 = 0;
                         for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                           const std::size_t pr = extents[pi];
                           if (nodes[pi]->requires_grad) {
                             Real* gp = nodes[pi]->grad_data();
                             for (std::size_t o = 0; o < outer; ++o) {
                               const Real* src = g + (o * red + off2) * inner;
                               Real* dst = gp + o * pr * inner;
                               for (std::size_t t = 0; t < pr * inner; ++t) dst[t] += src[t];
                             }
                           }
                           off2 += pr;
                         }
                       });
}

// out[b,c,n,j] = x[b,c,idx[b,n,j]] for x (B,C,N), idx (B,N,K).
template <typename Real>
BasicTensor<Real> gather_last_axis(const BasicTensor<Real>& x, const IndexArray& idx) {
  if (x.rank() != 3) throw ShapeError("gather_last_axis: x must be (B,C,N), got " + shape_str(x.shape()));
  if (idx.shape.size() != 3 || idx.shape[0] != x.dim(0) || idx.shape[1] != x.dim(2))
    throw ShapeError("gather_last_axis: index shape " + shape_str(idx.shape) +
                     " does not match x " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), N = x.dim(2), K = idx.shape[2];
  for (std::int32_t v : idx.data)
    if (v < 0 || v >= N) throw ContractError("gather_last_axis: index out of range");

  std::vector<Real> v(static_cast<std::size_t>(B) * C * N * K);
  const Real* px = x.data();
  auto ix = std::make_shared<std::vector<std::int32_t>>(idx.data);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const Real* src = px + (static_cast<std::size_t>(b) * C + c) * N;
      Real* dst = v.data() + ((static_cast<std::size_t>(b) * C + c) * N) * K;
      const std::int32_t* id = ix->data() + static_cast<std::size_t>(b) * N * K;
      for (std::size_t t = 0; t < static_cast<std::size_t>(N) * K; ++t) dst[t] = src[id[t]];
    }
  auto nx = x.node();
  return make_op<Real>({B, C, N, K}, std::move(v), {nx},
                       [nx, ix, B, C, N, K](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         Real* gx = nx->grad_data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count()) collapse(2)
#endif
                         for (int b = 0; b < B; ++b)
                           for (int c = 0; c < C; ++c) {
                             Real* dst = gx + (static_cast<std::size_t>(b) * C + c) * N;
                             const Real* src = g + ((static_cast<std::size_t>(b) * C + c) * N) * K;
                             const std::int32_t* id = ix->data() + static_cast<std::size_t>(b) * N * K;
                             for (std::size_t t = 0; t < static_cast<std::size_t>(N) * K; ++t)
                               dst[id[t]] += src[t];
                           }
                       });
}

// Fused edge-feature assembly for graph convolutions:
// out[b, 0:C, n, j]  = x[b, :, n]                (center)
// out[b, C:2C, n, j] = x[b, :, idx[b,n,j]] - x[b, :, n]  (displacement)
template <typename Real>
BasicTensor<Real> edge_features(const BasicTensor<Real>& x, const IndexArray& idx) {
  if (x.rank() != 3) throw ShapeError("edge_features: x must be (B,C,N), got " + shape_str(x.shape()));
  if (idx.shape.size() != 3 || idx.shape[0] != x.dim(0) || idx.shape[1] != x.dim(2))
    throw ShapeError("edge_features: index shape " + shape_str(idx.shape) +
                     " does not match x " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), N = x.dim(2), K = idx.shape[2];
  for (std::int32_t v : idx.data)
    if (v < 0 || v >= N) throw ContractError("edge_features: index out of range");

  std::vector<Real> v(static_cast<std::size_t>(B) * 2 * C * N * K);
  const Real* px = x.data();
  auto ix = std::make_shared<std::vector<std::int32_t>>(idx.data);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count()) collapse(2)
#endif
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const Real* src = px + (static_cast<std::size_t>(b) * C + c) * N;
      Real* ctr = v.data() + ((static_cast<std::size_t>(b) * 2 * C + c) * N) * K;
      Real* dif = v.data() + ((static_cast<std::size_t>(b) * 2 * C + C + c) * N) * K;
      const std::int32_t* id = ix->data() + static_cast<std::size_t>(b) * N * K;
      for (int n = 0; n < N; ++n) {
        const Real xc = src[n];
        for (int j = 0; j < K; ++j) {
          const std::size_t t = static_cast<std::size_t>(n) * K + j;
          ctr[t] = xc;
          dif[t] = src[id[t]] - xc;
        }
      }
    }
  auto nx = x.node();
  return make_op<Real>({B, 2 * C, N, K}, std::move(v), {nx},
                       [nx, ix, B, C, N, K](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         Real* gx = nx->grad_data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count()) collapse(2)
#endif
                         for (int b = 0; b < B; ++b)
                           for (int c = 0; c < C; ++c) {
                             Real* dst = gx + (static_cast<std::size_t>(b) * C + c) * N;
                             const Real* gctr = g + ((static_cast<std::size_t>(b) * 2 * C + c) * N) * K;
                             const Real* gdif = g + ((static_cast<std::size_t>(b) * 2 * C + C + c) * N) * K;
                             const std::int32_t* id = ix->data() + static_cast<std::size_t>(b) * N * K;
                             for (int nn = 0; nn < N; ++nn) {
                               Real acc = Real(0);
                               for (int j = 0; j < K; ++j) {
                                 const std::size_t t = static_cast<std::size_t>(nn) * K + j;
                                 acc += gctr[t] - gdif[t];
                                 dst[id[t]] += gdif[t];
                               }
                               dst[nn] += acc;
                             }
                           }
                       });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename Real>
BasicTensor<Real> matmul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<Real> v(static_cast<std::size_t>(M) * N, Real(0));
  gemm_nn(M, N, K, a.data(), b.data(), v.data());
  auto na = a.node();
  auto nb = b.node();
  return make_op<Real>({M, N}, std::move(v), {na, nb}, [na, nb, M, K, N](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    if (na->requires_grad) {
      // dA += dY * B^T
      auto bt = transposed(K, N, nb->value.data());
      gemm_nn(M, K, N, g, bt.data(), na->grad_data());
    }
    if (nb->requires_grad) {
      // dB += A^T * dY
      auto at = transposed(M, K, na->value.data());
      gemm_nn(K, N, M, at.data(), g, nb->grad_data());
    }
  });
}

// Fully connected layer: y = x * W^T (+ bias), x (B,Fin), W (Fout,Fin).
template <typename Real>
BasicTensor<Real> linear(const BasicTensor<Real>& x, const BasicTensor<Real>& w,
                         const BasicTensor<Real>* bias = nullptr) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear: x " + shape_str(x.shape()) + " incompatible with W " +
                     shape_str(w.shape()));
  const int B = x.dim(0), Fi = x.dim(1), Fo = w.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != Fo))
    throw ShapeError("linear: bias shape mismatch");
  std::vector<Real> v(static_cast<std::size_t>(B) * Fo, Real(0));
  {
    auto wt = transposed(Fo, Fi, w.data());
    gemm_nn(B, Fo, Fi, x.data(), wt.data(), v.data());
  }
  if (bias) {
    const Real* pb = bias->data();
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < Fo; ++o) v[static_cast<std::size_t>(b) * Fo + o] += pb[o];
  }
  auto nx = x.node();
  auto nw = w.node();
  std::vector<NodePtr<Real>> parents{nx, nw};
  NodePtr<Real> nb = bias ? bias->node() : nullptr;
  if (nb) parents.push_back(nb);
  return make_op<Real>({B, Fo}, std::move(v), std::move(parents),
                       [nx, nw, nb, B, Fi, Fo](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         if (nx->requires_grad) gemm_nn(B, Fi, Fo, g, nw->value.data(), nx->grad_data());
                         if (nw->requires_grad) {
                           auto gt = transposed(B, Fo, g);
                           gemm_nn(Fo, Fi, B, gt.data(), nx->value.data(), nw->grad_data());
                         }
                         if (nb && nb->requires_grad) {
                           Real* gb = nb->grad_data();
                           for (int b = 0; b < B; ++b)
                             for (int o = 0; o < Fo; ++o) gb[o] += g[static_cast<std::size_t>(b) * Fo + o];
                         }
                       });
}

// 1x1 convolution over any trailing spatial extent: x (B, Cin, S...),
// W (Cout, Cin); bias-free, batch norm follows in every use here.
template <typename Real>
BasicTensor<Real> pointwise_conv(const BasicTensor<Real>& x, const BasicTensor<Real>& w) {
  if (x.rank() < 3) throw ShapeError("pointwise_conv: x must be (B,C,spatial...), got " + shape_str(x.shape()));
  if (w.rank() != 2 || w.dim(1) != x.dim(1))
    throw ShapeError("pointwise_conv: W " + shape_str(w.shape()) + " incompatible with x " +
                     shape_str(x.shape()));
  const int B = x.dim(0), Ci = x.dim(1), Co = w.dim(0);
  std::size_t S = 1;
  for (int i = 2; i < x.rank(); ++i) S *= static_cast<std::size_t>(x.dim(i));
  std::vector<int> oshape = x.shape();
  oshape[1] = Co;

  std::vector<Real> v(static_cast<std::size_t>(B) * Co * S, Real(0));
  for (int b = 0; b < B; ++b)
    gemm_nn(Co, static_cast<int>(S), Ci, w.data(),
            x.data() + static_cast<std::size_t>(b) * Ci * S,
            v.data() + static_cast<std::size_t>(b) * Co * S);
  auto nx = x.node();
  auto nw = w.node();
  return make_op<Real>(std::move(oshape), std::move(v), {nx, nw},
                       [nx, nw, B, Ci, Co, S](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         if (nx->requires_grad) {
                           auto wt = transposed(Co, Ci, nw->value.data());
                           Real* gx = nx->grad_data();
                           for (int b = 0; b < B; ++b)
                             gemm_nn(Ci, static_cast<int>(S), Co, wt.data(),
                                     g + static_cast<std::size_t>(b) * Co * S,
                                     gx + static_cast<std::size_t>(b) * Ci * S);
                         }
                         if (nw->requires_grad) {
                           Real* gw = nw->grad_data();
                           std::vector<Real> xt(static_cast<std::size_t>(S) * Ci);
                           for (int b = 0; b < B; ++b) {
                             transpose(Ci, static_cast<int>(S),
                                       nx->value.data() + static_cast<std::size_t>(b) * Ci * S, xt.data());
                             gemm_nn(Co, Ci, static_cast<int>(S),
                                     g + static_cast<std::size_t>(b) * Co * S, xt.data(), gw);
                           }
                         }
                       });
}

// ---------------------------------------------------------------------------
// batch norm / dropout

template <typename Real>
struct BatchNormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(static_cast<std::size_t>(channels), Real(0)),
        running_var(static_cast<std::size_t>(channels), Real(1)) {}
};

// Per-channel batch normalization over axis 1; statistics span batch and all
// spatial axes. Training mode normalizes with batch statistics and updates
// the running estimates (unbiased variance, momentum-weighted); eval mode is
// a pure affine map using the frozen running statistics.
template <typename Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BatchNormState<Real>& state,
                             bool training, Real momentum = Real(0.1),
                             Real eps = Real(1e-5)) {
  if (x.rank() < 2) throw ShapeError("batch_norm: x must be (B,C,...), got " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
    throw ShapeError("batch_norm: gamma/beta must be length-" + std::to_string(C) + " vectors");
  if (static_cast<int>(state.running_mean.size()) != C)
    throw ShapeError("batch_norm: state channel count mismatch");
  std::size_t S = 1;
  for (int i = 2; i < x.rank(); ++i) S *= static_cast<std::size_t>(x.dim(i));
  const std::size_t M = static_cast<std::size_t>(B) * S;

  const Real* px = x.data();
  const Real* pg = gamma.data();
  const Real* pb = beta.data();
  std::vector<Real> v(x.size());
  auto nx = x.node();
  auto ng = gamma.node();
  auto nb = beta.node();

  if (!training) {
    auto rm = std::make_shared<std::vector<Real>>(state.running_mean);
    auto rv = std::make_shared<std::vector<Real>>(state.running_var);
    for (int c = 0; c < C; ++c) {
      const Real istd = Real(1) / std::sqrt((*rv)[c] + eps);
      const Real scale = pg[c] * istd;
      const Real shift = pb[c] - (*rm)[c] * scale;
      for (int b = 0; b < B; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) v[base + s] = px[base + s] * scale + shift;
      }
    }
    return make_op<Real>(x.shape(), std::move(v), {nx, ng, nb},
                         [nx, ng, nb, rm, rv, B, C, S, eps](TensorNode<Real>& n) {
                           const Real* g = n.grad.data();
                           const Real* x_ = nx->value.data();
                           const Real* gm = ng->value.data();
                           for (int c = 0; c < C; ++c) {
                             const Real istd = Real(1) / std::sqrt((*rv)[c] + eps);
                             const Real mean = (*rm)[c];
                             double sg = 0.0, sgx = 0.0;
                             for (int b = 0; b < B; ++b) {
                               const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
                               for (std::size_t s = 0; s < S; ++s) {
                                 sg += static_cast<double>(g[base + s]);
                                 sgx += static_cast<double>(g[base + s]) *
                                        ((x_[base + s] - mean) * istd);
                               }
                             }
                             if (ng->requires_grad) ng->grad_data()[c] += static_cast<Real>(sgx);
                             if (nb->requires_grad) nb->grad_data()[c] += static_cast<Real>(sg);
                             if (nx->requires_grad) {
                               Real* gx = nx->grad_data();
                               const Real scale = gm[c] * istd;
                               for (int b = 0; b < B; ++b) {
                                 const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
                                 for (std::size_t s = 0; s < S; ++s) gx[base + s] += g[base + s] * scale;
                               }
                             }
                           }
                         });
  }

  auto xhat = std::make_shared<std::vector<Real>>(x.size());
  auto istd_c = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(C));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count())
#endif
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < B; ++b) {
      const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        const double val = static_cast<double>(px[base + s]);
        sum += val;
        sq += val * val;
      }
    }
    const double mean = sum / static_cast<double>(M);
    double var = sq / static_cast<double>(M) - mean * mean;
    if (var < 0.0) var = 0.0;
    const Real istd = static_cast<Real>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*istd_c)[c] = istd;
    const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
    state.running_mean[c] = (Real(1) - momentum) * state.running_mean[c] +
                            momentum * static_cast<Real>(mean);
    state.running_var[c] = (Real(1) - momentum) * state.running_var[c] +
                           momentum * static_cast<Real>(unbiased);
    const Real scale = pg[c];
    const Real shift = pb[c];
    for (int b = 0; b < B; ++b) {
      const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        const Real xh = (px[base + s] - static_cast<Real>(mean)) * istd;
        (*xhat)[base + s] = xh;
        v[base + s] = xh * scale + shift;
      }
    }
  }
  return make_op<Real>(x.shape(), std::move(v), {nx, ng, nb},
                       [nx, ng, nb, xhat, istd_c, B, C, S, M](TensorNode<Real>& n) {
                         const Real* g = n.grad.data();
                         const Real* gm = ng->value.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count())
#endif
                         for (int c = 0; c < C; ++c) {
                           double sg = 0.0, sgx = 0.0;
                           for (int b = 0; b < B; ++b) {
                             const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
                             for (std::size_t s = 0; s < S; ++s) {
                               sg += static_cast<double>(g[base + s]);
                               sgx += static_cast<double>(g[base + s]) * (*xhat)[base + s];
                             }
                           }
                           if (ng->requires_grad) ng->grad_data()[c] += static_cast<Real>(sgx);
                           if (nb->requires_grad) nb->grad_data()[c] += static_cast<Real>(sg);
                           if (nx->requires_grad) {
                             Real* gx = nx->grad_data();
                             const Real scale = gm[c] * (*istd_c)[c];
                             const Real mg = static_cast<Real>(sg / static_cast<double>(M));
                             const Real mgx = static_cast<Real>(sgx / static_cast<double>(M));
                             for (int b = 0; b < B; ++b) {
                               const std::size_t base = (static_cast<std::size_t>(b) * C + c) * S;
                               for (std::size_t s = 0; s < S; ++s)
                                 gx[base + s] += scale * (g[base + s] - mg - (*xhat)[base + s] * mgx);
                             }
                           }
                         }
                       });
}

// Inverted dropout; identity in eval mode. Mask drawn from rng so a fixed
// seed reproduces the forward pass exactly.
template <typename Real>
BasicTensor<Real> dropout(const BasicTensor<Real>& x, Real p, bool training,
                          std::mt19937& rng) {
  if (!(p >= Real(0)) || p >= Real(1))
    throw ConfigError("dropout probability must lie in [0,1)");
  if (!training || p == Real(0)) return x;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  const Real scale = Real(1) / (Real(1) - p);
  auto factors = std::make_shared<std::vector<Real>>(x.size());
  std::vector<Real> v(x.size());
  const Real* px = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Real f = keep(rng) ? scale : Real(0);
    (*factors)[i] = f;
    v[i] = px[i] * f;
  }
  auto nx = x.node();
  return make_op<Real>(x.shape(), std::move(v), {nx}, [nx, factors](TensorNode<Real>& n) {
    const Real* g = n.grad.data();
    Real* gx = nx->grad_data();
    for (std::size_t i = 0; i < n.size(); ++i) gx[i] += g[i] * (*factors)[i];
  });
}

}  // namespace tg
