#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <chrono>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "motif/common.hpp"

namespace motif {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

/// Thread-local switch for tape construction; off inside NoGradGuard.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  bool prev_;
};

template <typename S>
class Tensor;

namespace detail {

template <typename S>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<S>> data;
  std::shared_ptr<std::vector<S>> grad;
  bool requires_grad = false;
  const char* op = "";
  std::vector<Tensor<S>> parents;
  std::function<void(const TensorNode&)> backward;

  std::size_t numel() const { return data ? data->size() : 0; }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<S>>(numel(), S(0));
  }
};

}  // namespace detail

/// Dense tensor with reverse-mode autodiff. Copies share storage; data is
/// immutable once an op has consumed the tensor, gradients accumulate.
template <typename S>
class Tensor {
 public:
  using Node = detail::TensorNode<S>;

  Tensor() = default;

  explicit Tensor(Shape shape) : n_(std::make_shared<Node>()) {
    tune_allocator();
    n_->shape = std::move(shape);
    n_->data = std::make_shared<std::vector<S>>(shape_numel(n_->shape), S(0));
  }

  Tensor(Shape shape, std::vector<S> values) : n_(std::make_shared<Node>()) {
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    }
    n_->shape = std::move(shape);
    n_->data = std::make_shared<std::vector<S>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor scalar(S v) { return Tensor({}, {v}); }

  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data()) v = static_cast<S>(dist(rng));
    return t;
  }

  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data()) v = static_cast<S>(dist(rng));
    return t;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t numel() const { return n_->numel(); }
  std::size_t extent(std::size_t d) const { return n_->shape.at(d); }

  std::vector<S>& data() { return *n_->data; }
  const std::vector<S>& data() const { return *n_->data; }

  S item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
    }
    return (*n_->data)[0];
  }

  S& at(std::initializer_list<std::size_t> idx) {
    if (idx.size() != rank()) throw std::invalid_argument("at: rank mismatch");
    std::size_t off = 0, d = 0;
    for (auto i : idx) {
      off = off * n_->shape[d] + i;
      ++d;
    }
    return (*n_->data)[off];
  }
  S at(std::initializer_list<std::size_t> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
  }

  Tensor& set_requires_grad(bool v = true) {
    n_->requires_grad = v;
    return *this;
  }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  bool has_grad() const { return n_ && n_->grad != nullptr; }
  std::vector<S>& grad() {
    n_->ensure_grad();
    return *n_->grad;
  }
  const std::vector<S>& grad() const {
    n_->ensure_grad();
    return *n_->grad;
  }
  void zero_grad() {
    if (n_ && n_->grad) std::fill(n_->grad->begin(), n_->grad->end(), S(0));
  }

  /// New leaf sharing this tensor's storage, cut off from the tape.
  Tensor detach() const {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

  /// Deep copy of the data; fresh leaf.
  Tensor clone() const {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = n_->shape;
    t.n_->data = std::make_shared<std::vector<S>>(*n_->data);
    return t;
  }

  /// Reverse pass from a scalar. Leaf gradients accumulate across calls;
  /// interior gradients are reset each time.
  void backward() const {
    if (numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(shape()));
    }
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next].n_.get();
        ++next;
        if (p && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* node : topo) {
      if (!node->is_leaf()) {
        if (node->grad) {
          std::fill(node->grad->begin(), node->grad->end(), S(0));
        } else {
          node->ensure_grad();  // fresh vectors are already zeroed once
        }
      }
    }
    n_->ensure_grad();
    (*n_->grad)[0] += S(1);
    static const bool profile = std::getenv("MOTIF_PROFILE") != nullptr;
    if (!profile) {
      for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad) node->backward(*node);
      }
    } else {
      static std::unordered_map<std::string, double>* op_ms =
          new std::unordered_map<std::string, double>();
      for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad) {
          auto t0 = std::chrono::steady_clock::now();
          node->backward(*node);
          (*op_ms)[node->op] +=
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
        }
      }
      if (std::getenv("MOTIF_PROFILE_DUMP")) {
        for (const auto& [op, t] : *op_ms) std::fprintf(stderr, "bw %-18s %8.1f ms\n", op.c_str(), t);
        op_ms->clear();
      }
    }
  }

  Node* node() const { return n_.get(); }

  // Op construction -----------------------------------------------------

  static Tensor make(Shape shape, const char* op) {
    Tensor t(std::move(shape));
    t.n_->op = op;
    return t;
  }

  /// Attaches tape metadata when grad mode is on and a parent is tracked.
  template <typename BackFn>
  void attach(std::vector<Tensor> parents, BackFn&& fn) {
    if (!grad_mode()) return;
    bool tracked = false;
    for (const auto& p : parents) tracked = tracked || p.requires_grad();
    if (!tracked) return;
    n_->requires_grad = true;
    n_->parents = std::move(parents);
    n_->backward = std::forward<BackFn>(fn);
  }

  /// Reshape sharing storage.
  Tensor view(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) {
      throw std::invalid_argument("reshape: cannot view " + shape_str(shape()) +
                                  " as " + shape_str(new_shape));
    }
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = std::move(new_shape);
    t.n_->data = n_->data;
    t.n_->op = "reshape";
    t.attach({*this}, [](const Node& self) {
      const Tensor& p = self.parents[0];
      if (!p.requires_grad()) return;
      p.n_->ensure_grad();
      auto& pg = *p.n_->grad;
      const auto& g = *self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
    return t;
  }

 private:
  std::shared_ptr<Node> n_;
};

// ---------------------------------------------------------------------------
// Raw kernels
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using EMap = Eigen::Map<EMat<S>>;
template <typename S>
using ECMap = Eigen::Map<const EMat<S>>;

// c[m,n] = (or +=) alpha * opA(a) * opB(b); a is [k,m] when ta else [m,k],
// b is [n,k] when tb else [k,n]. Row chunks parallelized; each output
// element is produced by exactly one thread, so threading never changes
// results.
template <typename S>
void gemm2d(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
            bool ta, bool tb, bool accumulate, S alpha = S(1)) {
  ECMap<S> A(a, ta ? k : m, ta ? m : k);
  ECMap<S> B(b, tb ? n : k, tb ? k : n);
  EMap<S> C(c, m, n);
  const bool parallel = m >= 32 && m * k * n >= (1u << 20);
  auto chunk = [&](std::size_t r0, std::size_t r1) {
    const auto rows = static_cast<Eigen::Index>(r1 - r0);
    const auto at = static_cast<Eigen::Index>(r0);
    auto dst = C.middleRows(at, rows);
    if (!ta && !tb) {
      if (accumulate) dst.noalias() += alpha * (A.middleRows(at, rows) * B);
      else dst.noalias() = alpha * (A.middleRows(at, rows) * B);
    } else if (!ta && tb) {
      if (accumulate) dst.noalias() += alpha * (A.middleRows(at, rows) * B.transpose());
      else dst.noalias() = alpha * (A.middleRows(at, rows) * B.transpose());
    } else if (ta && !tb) {
      if (accumulate) dst.noalias() += alpha * (A.middleCols(at, rows).transpose() * B);
      else dst.noalias() = alpha * (A.middleCols(at, rows).transpose() * B);
    } else {
      if (accumulate) dst.noalias() += alpha * (A.middleCols(at, rows).transpose() * B.transpose());
      else dst.noalias() = alpha * (A.middleCols(at, rows).transpose() * B.transpose());
    }
  };
  if (parallel) {
    parallel_for(m, chunk);
  } else {
    chunk(0, m);
  }
}

inline void check_inner(std::size_t ka, std::size_t kb, const Shape& sa, const Shape& sb) {
  if (ka != kb) {
    throw std::invalid_argument("matmul: inner extents mismatch between " + shape_str(sa) +
                                " and " + shape_str(sb));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::size_t kParallelCutoff = 1u << 15;

template <typename S, typename F>
void elementwise(std::size_t n, F&& f) {
  if (n >= kParallelCutoff) {
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) f(i);
    });
  } else {
    for (std::size_t i = 0; i < n; ++i) f(i);
  }
}

// y_i = fval(x_i); dx_i += dy_i * fder(x_i, y_i)
template <typename S, typename FV, typename FD>
Tensor<S> unary_op(const Tensor<S>& x, const char* name, FV fval, FD fder) {
  Tensor<S> out = Tensor<S>::make(x.shape(), name);
  const auto& xd = x.data();
  auto& yd = out.data();
  elementwise<S>(xd.size(), [&](std::size_t i) { yd[i] = fval(xd[i]); });
  out.attach({x}, [fder](const TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& pd = *p.node()->data;
    const auto& yd2 = *self.data;
    const auto& g = *self.grad;
    elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i] * fder(pd[i], yd2[i]); });
  });
  return out;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<S> out = Tensor<S>::make(a.shape(), "add");
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = out.data();
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = ad[i] + bd[i]; });
  out.attach({a, b}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    for (int which = 0; which < 2; ++which) {
      const Tensor<S>& p = self.parents[which];
      if (!p.requires_grad()) continue;
      p.node()->ensure_grad();
      auto& pg = *p.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i]; });
    }
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<S> out = Tensor<S>::make(a.shape(), "sub");
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = out.data();
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = ad[i] - bd[i]; });
  out.attach({a, b}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    const Tensor<S>& pa = self.parents[0];
    const Tensor<S>& pb = self.parents[1];
    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      auto& pg = *pa.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i]; });
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      auto& pg = *pb.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] -= g[i]; });
    }
  });
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<S> out = Tensor<S>::make(a.shape(), "mul");
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = out.data();
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = ad[i] * bd[i]; });
  out.attach({a, b}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    const Tensor<S>& pa = self.parents[0];
    const Tensor<S>& pb = self.parents[1];
    const auto& ad2 = pa.data();
    const auto& bd2 = pb.data();
    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      auto& pg = *pa.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i] * bd2[i]; });
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      auto& pg = *pb.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i] * ad2[i]; });
    }
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  return detail::unary_op(
      x, "scale", [c](S v) { return v * c; }, [c](S, S) { return c; });
}

template <typename S>
Tensor<S> add_const(const Tensor<S>& x, S c) {
  return detail::unary_op(
      x, "add_const", [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> exp_t(const Tensor<S>& x) {
  return detail::unary_op(
      x, "exp", [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log_t(const Tensor<S>& x) {
  return detail::unary_op(
      x, "log", [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> sin_t(const Tensor<S>& x) {
  return detail::unary_op(
      x, "sin", [](S v) { return std::sin(v); }, [](S v, S) { return std::cos(v); });
}

/// Elementwise integer power, exponent 1..8.
template <typename S>
Tensor<S> pow_int(const Tensor<S>& x, int p) {
  if (p < 1 || p > 8) throw std::invalid_argument("pow_int: exponent out of range");
  return detail::unary_op(
      x, "pow_int",
      [p](S v) {
        S r = v;
        for (int i = 1; i < p; ++i) r *= v;
        return r;
      },
      [p](S v, S) {
        S r = S(p);
        for (int i = 1; i < p; ++i) r *= v;
        return r;
      });
}

/// -log(sigmoid(z)), numerically stable; equals softplus(-z).
template <typename S>
Tensor<S> neg_log_sigmoid(const Tensor<S>& z) {
  return detail::unary_op(
      z, "neg_log_sigmoid",
      [](S v) {
        return v >= S(0) ? std::log1p(std::exp(-v)) : -v + std::log1p(std::exp(v));
      },
      [](S v, S) {
        // d/dz -log sigma(z) = sigma(z) - 1
        const S s = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
        return s - S(1);
      });
}

/// Broadcast-multiply by a one-element tensor (tracked scalar parameter).
template <typename S>
Tensor<S> mul_scalar_t(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw std::invalid_argument("mul_scalar_t: scalar operand must have one element");
  Tensor<S> out = Tensor<S>::make(x.shape(), "mul_scalar_t");
  const S sv = s.data()[0];
  const auto& xd = x.data();
  auto& yd = out.data();
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = xd[i] * sv; });
  out.attach({x, s}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    const Tensor<S>& px = self.parents[0];
    const Tensor<S>& ps = self.parents[1];
    if (px.requires_grad()) {
      px.node()->ensure_grad();
      auto& pg = *px.node()->grad;
      const S sv2 = ps.data()[0];
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i] * sv2; });
    }
    if (ps.requires_grad()) {
      ps.node()->ensure_grad();
      const auto& xd2 = px.data();
      double acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += double(g[i]) * double(xd2[i]);
      (*ps.node()->grad)[0] += static_cast<S>(acc);
    }
  });
  return out;
}

/// Broadcast-add a one-element tensor.
template <typename S>
Tensor<S> add_scalar_t(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw std::invalid_argument("add_scalar_t: scalar operand must have one element");
  Tensor<S> out = Tensor<S>::make(x.shape(), "add_scalar_t");
  const S sv = s.data()[0];
  const auto& xd = x.data();
  auto& yd = out.data();
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = xd[i] + sv; });
  out.attach({x, s}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    const Tensor<S>& px = self.parents[0];
    const Tensor<S>& ps = self.parents[1];
    if (px.requires_grad()) {
      px.node()->ensure_grad();
      auto& pg = *px.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i]; });
    }
    if (ps.requires_grad()) {
      ps.node()->ensure_grad();
      double acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += double(g[i]);
      (*ps.node()->grad)[0] += static_cast<S>(acc);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and indexing
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::make({}, "sum_all");
  double acc = 0;
  for (S v : x.data()) acc += double(v);
  out.data()[0] = static_cast<S>(acc);
  out.attach({x}, [](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const S g = (*self.grad)[0];
    detail::elementwise<S>(pg.size(), [&](std::size_t i) { pg[i] += g; });
  });
  return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  const S inv = S(1) / static_cast<S>(x.numel());
  return scale(sum_all(x), inv);
}

/// Dot product of two rank-1 tensors -> rank-0.
template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "dot");
  if (a.rank() != 1) throw std::invalid_argument("dot: expects rank-1, got " + shape_str(a.shape()));
  Tensor<S> out = Tensor<S>::make({}, "dot");
  const auto& ad = a.data();
  const auto& bd = b.data();
  double acc = 0;
  for (std::size_t i = 0; i < ad.size(); ++i) acc += double(ad[i]) * double(bd[i]);
  out.data()[0] = static_cast<S>(acc);
  out.attach({a, b}, [](const detail::TensorNode<S>& self) {
    const S g = (*self.grad)[0];
    const Tensor<S>& pa = self.parents[0];
    const Tensor<S>& pb = self.parents[1];
    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      auto& pg = *pa.node()->grad;
      const auto& bd2 = pb.data();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g * bd2[i];
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      auto& pg = *pb.node()->grad;
      const auto& ad2 = pa.data();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g * ad2[i];
    }
  });
  return out;
}

/// Select element i of a rank-1 tensor -> rank-0.
template <typename S>
Tensor<S> element(const Tensor<S>& v, std::size_t i) {
  if (v.rank() != 1 || i >= v.numel()) {
    throw std::invalid_argument("element: index " + std::to_string(i) + " in " + shape_str(v.shape()));
  }
  Tensor<S> out = Tensor<S>::make({}, "element");
  out.data()[0] = v.data()[i];
  out.attach({v}, [i](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    (*p.node()->grad)[i] += (*self.grad)[0];
  });
  return out;
}

/// Contiguous slice x[i] along the first dimension.
template <typename S>
Tensor<S> take_dim0(const Tensor<S>& x, std::size_t i) {
  if (x.rank() < 1 || i >= x.extent(0)) {
    throw std::invalid_argument("take_dim0: index " + std::to_string(i) + " in " + shape_str(x.shape()));
  }
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t block = shape_numel(out_shape);
  Tensor<S> out = Tensor<S>::make(out_shape, "take_dim0");
  const auto& xd = x.data();
  auto& yd = out.data();
  std::copy(xd.begin() + i * block, xd.begin() + (i + 1) * block, yd.begin());
  out.attach({x}, [i, block](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& g = *self.grad;
    const std::size_t base = i * block;
    detail::elementwise<S>(block, [&](std::size_t j) { pg[base + j] += g[j]; });
  });
  return out;
}

/// Contiguous slice x[begin:end] along the first dimension.
template <typename S>
Tensor<S> slice_dim0(const Tensor<S>& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.extent(0)) {
    throw std::invalid_argument("slice_dim0: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") in " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  const std::size_t block = shape_numel(out_shape) / (end - begin);
  Tensor<S> out = Tensor<S>::make(out_shape, "slice_dim0");
  const auto& xd = x.data();
  std::copy(xd.begin() + begin * block, xd.begin() + end * block, out.data().begin());
  out.attach({x}, [begin, block](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& g = *self.grad;
    const std::size_t base = begin * block;
    detail::elementwise<S>(g.size(), [&](std::size_t j) { pg[base + j] += g[j]; });
  });
  return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
  return x.view(std::move(new_shape));
}

namespace detail {

// out[perm-major order] = in; add==true accumulates. Walks the output in
// order with an odometer over the input strides (no per-element division).
template <typename S>
void permute_copy(const S* in, const Shape& in_shape, const std::vector<std::size_t>& perm,
                  S* out, bool add) {
  const std::size_t r = in_shape.size();
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = in_shape[perm[d]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t d = r; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  // stride in the input for each output dimension
  std::vector<std::size_t> strides(r);
  for (std::size_t d = 0; d < r; ++d) strides[d] = in_strides[perm[d]];
  const std::size_t n = shape_numel(in_shape);
  auto body = [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    {
      std::size_t rem = b;
      for (std::size_t d = r; d-- > 0;) {
        idx[d] = rem % out_shape[d];
        rem /= out_shape[d];
        src += idx[d] * strides[d];
      }
    }
    for (std::size_t o = b; o < e; ++o) {
      if (add) out[o] += in[src];
      else out[o] = in[src];
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        src += strides[d];
        if (idx[d] < out_shape[d]) break;
        src -= out_shape[d] * strides[d];
        idx[d] = 0;
      }
    }
  };
  if (n >= kParallelCutoff) parallel_for(n, body);
  else body(0, n);
}

}  // namespace detail

/// Generic dimension permutation (copying).
template <typename S>
Tensor<S> permute(const Tensor<S>& x, std::vector<std::size_t> perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw std::invalid_argument("permute: perm rank mismatch");
  std::vector<bool> used(r, false);
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) {
    if (perm[d] >= r || used[perm[d]]) throw std::invalid_argument("permute: invalid permutation");
    used[perm[d]] = true;
    out_shape[d] = x.extent(perm[d]);
  }
  Tensor<S> out = Tensor<S>::make(out_shape, "permute");
  detail::permute_copy(x.data().data(), x.shape(), perm, out.data().data(), false);
  out.attach({x}, [perm](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    // inverse permutation maps output grads back onto the input layout
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) inv[perm[d]] = d;
    detail::permute_copy(self.grad->data(), self.shape, inv, p.node()->grad->data(), true);
  });
  return out;
}

namespace detail {

// [B, S, groups*parts*width] -> [B, groups, S, width] for one part index.
template <typename S>
void heads_gather(const S* flat, S* split, std::size_t batch, std::size_t seq, std::size_t groups,
                  std::size_t parts, std::size_t part, std::size_t width) {
  const std::size_t row_width = groups * parts * width;
  parallel_for(batch * groups, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t bg = lo; bg < hi; ++bg) {
      const std::size_t b = bg / groups, g = bg % groups;
      for (std::size_t s = 0; s < seq; ++s) {
        const S* src = flat + (b * seq + s) * row_width + (g * parts + part) * width;
        S* dst = split + (bg * seq + s) * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] = src[c];
      }
    }
  });
}

// scatter-add inverse of heads_gather; distinct (b,g) touch disjoint regions
template <typename S>
void heads_scatter_add(const S* split, S* flat, std::size_t batch, std::size_t seq,
                       std::size_t groups, std::size_t parts, std::size_t part,
                       std::size_t width) {
  const std::size_t row_width = groups * parts * width;
  parallel_for(batch * groups, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t bg = lo; bg < hi; ++bg) {
      const std::size_t b = bg / groups, g = bg % groups;
      for (std::size_t s = 0; s < seq; ++s) {
        const S* src = split + (bg * seq + s) * width;
        S* dst = flat + (b * seq + s) * row_width + (g * parts + part) * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
      }
    }
  });
}

}  // namespace detail

/// Extracts one Q/K/V sub-head component: x is [batch, seq, groups*parts*width]
/// laid out group-major; the result is [batch, groups, seq, width].
template <typename S>
Tensor<S> gather_heads(const Tensor<S>& x, std::size_t groups, std::size_t parts,
                       std::size_t part, std::size_t width) {
  if (x.rank() != 3 || x.extent(2) != groups * parts * width || part >= parts) {
    throw std::invalid_argument("gather_heads: " + shape_str(x.shape()) + " with groups " +
                                std::to_string(groups) + ", parts " + std::to_string(parts) +
                                ", width " + std::to_string(width));
  }
  const std::size_t batch = x.extent(0), seq = x.extent(1);
  Tensor<S> out = Tensor<S>::make({batch, groups, seq, width}, "gather_heads");
  detail::heads_gather(x.data().data(), out.data().data(), batch, seq, groups, parts, part, width);
  out.attach({x}, [batch, seq, groups, parts, part, width](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    detail::heads_scatter_add(self.grad->data(), p.node()->grad->data(), batch, seq, groups,
                              parts, part, width);
  });
  return out;
}

/// Concatenates heads back: [batch, heads, seq, width] -> [batch, seq, heads*width].
template <typename S>
Tensor<S> merge_heads(const Tensor<S>& x) {
  if (x.rank() != 4) {
    throw std::invalid_argument("merge_heads: expected [batch, heads, seq, width], got " +
                                shape_str(x.shape()));
  }
  const std::size_t batch = x.extent(0), heads = x.extent(1), seq = x.extent(2),
                    width = x.extent(3);
  Tensor<S> out = Tensor<S>::make({batch, seq, heads * width}, "merge_heads");
  {
    const S* in = x.data().data();
    S* dst = out.data().data();
    parallel_for(batch * heads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t bh = lo; bh < hi; ++bh) {
        const std::size_t b = bh / heads, h = bh % heads;
        for (std::size_t s = 0; s < seq; ++s) {
          const S* src = in + (bh * seq + s) * width;
          S* row = dst + (b * seq + s) * heads * width + h * width;
          for (std::size_t c = 0; c < width; ++c) row[c] = src[c];
        }
      }
    });
  }
  out.attach({x}, [batch, heads, seq, width](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    const S* g = self.grad->data();
    S* pg = p.node()->grad->data();
    parallel_for(batch * heads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t bh = lo; bh < hi; ++bh) {
        const std::size_t b = bh / heads, h = bh % heads;
        for (std::size_t s = 0; s < seq; ++s) {
          const S* row = g + (b * seq + s) * heads * width + h * width;
          S* dst = pg + (bh * seq + s) * width;
          for (std::size_t c = 0; c < width; ++c) dst[c] += row[c];
        }
      }
    });
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

namespace detail {

// Raw batched product: out = opA(a) * opB(b) with optional leading batch
// dims on either side (rank-2 operands broadcast across the other side's
// batch). sum_batch contracts the batch dimension into a rank-2 output.
template <typename S>
void matmul_raw(const S* a, const Shape& sa, bool ta, const S* b, const Shape& sb, bool tb,
                S* out, std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                bool a_batched, bool b_batched, bool accumulate, bool sum_batch, S alpha) {
  const std::size_t a_block = (ta ? k * m : m * k);
  const std::size_t b_block = (tb ? n * k : k * n);
  if (sum_batch) {
    if (ta && !tb && a_batched && b_batched) {
      // sum_l A_l^T * B_l == flat(A)^T * flat(B): one large product
      gemm2d(a, b, out, m, batch * k, n, true, false, accumulate, alpha);
      return;
    }
    // serial over batch keeps the accumulation order fixed
    for (std::size_t l = 0; l < batch; ++l) {
      gemm2d(a + (a_batched ? l * a_block : 0), b + (b_batched ? l * b_block : 0), out, m, k, n,
             ta, tb, accumulate || l > 0, alpha);
    }
    return;
  }
  if (a_batched && !b_batched && !ta) {
    // flatten batch into rows: one large product
    gemm2d(a, b, out, batch * m, k, n, false, tb, accumulate, alpha);
    return;
  }
  if (batch == 1) {
    gemm2d(a, b, out, m, k, n, ta, tb, accumulate, alpha);
    return;
  }
  auto body = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t l = lo; l < hi; ++l) {
      gemm2d(a + (a_batched ? l * a_block : 0), b + (b_batched ? l * b_block : 0),
             out + l * m * n, m, k, n, ta, tb, accumulate, alpha);
    }
  };
  if (batch * m * k * n >= (1u << 20)) parallel_for(batch, body);
  else body(0, batch);
}

}  // namespace detail

/// Batched matrix product with optional transposes on the trailing two dims
/// and a fused output scale alpha. Ranks 2..4; leading (batch) dims must
/// match exactly or be absent on one side, which broadcasts that operand.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false, bool tb = false,
                 S alpha = S(1)) {
  const std::size_t ra = a.rank(), rb = b.rank();
  if (ra < 2 || ra > 4 || rb < 2 || rb > 4) {
    throw std::invalid_argument("matmul: ranks must be 2..4, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t m = ta ? sa[ra - 1] : sa[ra - 2];
  const std::size_t ka = ta ? sa[ra - 2] : sa[ra - 1];
  const std::size_t kb = tb ? sb[rb - 1] : sb[rb - 2];
  const std::size_t n = tb ? sb[rb - 2] : sb[rb - 1];
  detail::check_inner(ka, kb, sa, sb);
  const bool a_batched = ra > 2, b_batched = rb > 2;
  Shape lead;
  if (a_batched && b_batched) {
    Shape la(sa.begin(), sa.end() - 2), lb(sb.begin(), sb.end() - 2);
    if (la != lb) {
      throw std::invalid_argument("matmul: batch extents mismatch between " + shape_str(sa) +
                                  " and " + shape_str(sb));
    }
    lead = la;
  } else if (a_batched) {
    lead.assign(sa.begin(), sa.end() - 2);
  } else if (b_batched) {
    lead.assign(sb.begin(), sb.end() - 2);
  }
  const std::size_t batch = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);

  Tensor<S> out = Tensor<S>::make(out_shape, "matmul");
  detail::matmul_raw(a.data().data(), sa, ta, b.data().data(), sb, tb, out.data().data(),
                     batch, m, ka, n, a_batched, b_batched, false, false, alpha);

  out.attach({a, b}, [ta, tb, m, k = ka, n, batch, a_batched, b_batched, alpha](
                         const detail::TensorNode<S>& self) {
    const Tensor<S>& pa = self.parents[0];
    const Tensor<S>& pb = self.parents[1];
    const S* g = self.grad->data();
    const Shape gshape = self.shape;
    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      S* da = pa.node()->grad->data();
      if (!ta) {
        // dA = alpha * dC * opB(B)^T
        detail::matmul_raw(g, gshape, false, pb.data().data(), pb.shape(), !tb, da, batch, m, n, k,
                           a_batched || b_batched, b_batched, true,
                           /*sum_batch=*/!a_batched && b_batched, alpha);
      } else {
        // A appears transposed: dA = alpha * opB(B) * dC^T, laid out [k, m]
        detail::matmul_raw(pb.data().data(), pb.shape(), tb, g, gshape, true, da, batch, k, n, m,
                           b_batched, a_batched || b_batched, true,
                           /*sum_batch=*/!a_batched && b_batched, alpha);
      }
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      S* db = pb.node()->grad->data();
      if (!tb) {
        // dB = alpha * opA(A)^T * dC
        detail::matmul_raw(pa.data().data(), pa.shape(), !ta, g, gshape, false, db, batch, k, m, n,
                           a_batched, a_batched || b_batched, true,
                           /*sum_batch=*/a_batched && !b_batched, alpha);
      } else {
        // dB = alpha * dC^T * opA(A), laid out [n, k] per slice
        detail::matmul_raw(g, gshape, true, pa.data().data(), pa.shape(), ta, db, batch, n, m, k,
                           a_batched || b_batched, a_batched, true,
                           /*sum_batch=*/a_batched && !b_batched, alpha);
      }
    }
  });
  return out;
}

/// Fused y = a - s*b with a one-element scale tensor s.
template <typename S>
Tensor<S> sub_scaled(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& s) {
  detail::check_same_shape(a, b, "sub_scaled");
  if (s.numel() != 1) throw std::invalid_argument("sub_scaled: scale must have one element");
  Tensor<S> out = Tensor<S>::make(a.shape(), "sub_scaled");
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = out.data();
  const S sv = s.data()[0];
  detail::elementwise<S>(yd.size(), [&](std::size_t i) { yd[i] = ad[i] - sv * bd[i]; });
  out.attach({a, b, s}, [](const detail::TensorNode<S>& self) {
    const auto& g = *self.grad;
    const Tensor<S>& pa = self.parents[0];
    const Tensor<S>& pb = self.parents[1];
    const Tensor<S>& ps = self.parents[2];
    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      auto& pg = *pa.node()->grad;
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] += g[i]; });
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      auto& pg = *pb.node()->grad;
      const S sv2 = ps.data()[0];
      detail::elementwise<S>(g.size(), [&](std::size_t i) { pg[i] -= sv2 * g[i]; });
    }
    if (ps.requires_grad()) {
      ps.node()->ensure_grad();
      const auto& bd2 = pb.data();
      double acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += double(g[i]) * double(bd2[i]);
      (*ps.node()->grad)[0] -= static_cast<S>(acc);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / RMS norm
// ---------------------------------------------------------------------------

/// Softmax over the last dimension. An optional 0/1 mask (shape equal to a
/// trailing suffix of x's shape) zeroes masked entries exactly; masking is
/// additive -infinity before exponentiation, stabilized by max-subtraction.
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x, const Tensor<S>* mask = nullptr) {
  if (x.rank() < 1) throw std::invalid_argument("softmax: rank-0 input");
  const std::size_t width = x.extent(x.rank() - 1);
  const std::size_t rows = x.numel() / width;
  const S* mk = nullptr;
  std::size_t mask_rows = 0;
  if (mask) {
    const auto& ms = mask->shape();
    const auto& xs = x.shape();
    if (ms.size() > xs.size() ||
        !std::equal(ms.rbegin(), ms.rend(), xs.rbegin())) {
      throw std::invalid_argument("softmax: mask shape " + shape_str(ms) +
                                  " is not a trailing suffix of " + shape_str(xs));
    }
    mk = mask->data().data();
    mask_rows = mask->numel() / width;
  }
  Tensor<S> out = Tensor<S>::make(x.shape(), "softmax");
  const auto& xd = x.data();
  auto& yd = out.data();
  std::atomic<long long> degenerate_row{-1};
  auto rows_body = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const S* xr = xd.data() + r * width;
      S* yr = yd.data() + r * width;
      const S* mr = mk ? mk + (r % mask_rows) * width : nullptr;
      S mx = -std::numeric_limits<S>::infinity();
      for (std::size_t j = 0; j < width; ++j) {
        if (!mr || mr[j] != S(0)) mx = std::max(mx, xr[j]);
      }
      if (mx == -std::numeric_limits<S>::infinity()) {
        degenerate_row.store(static_cast<long long>(r));
        std::fill(yr, yr + width, S(0));
        continue;
      }
      double sum = 0;
      for (std::size_t j = 0; j < width; ++j) {
        if (!mr || mr[j] != S(0)) {
          yr[j] = std::exp(xr[j] - mx);
          sum += double(yr[j]);
        } else {
          yr[j] = S(0);
        }
      }
      const S inv = static_cast<S>(1.0 / sum);
      for (std::size_t j = 0; j < width; ++j) yr[j] *= inv;
    }
  };
  if (rows >= 64 && x.numel() >= detail::kParallelCutoff) parallel_for(rows, rows_body);
  else rows_body(0, rows);
  if (degenerate_row.load() >= 0) {
    throw std::domain_error("softmax: fully masked row " + std::to_string(degenerate_row.load()));
  }

  out.attach({x}, [width, rows](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& y = *self.data;
    const auto& g = *self.grad;
    auto body = [&](std::size_t r0, std::size_t r1) {
      for (std::size_t r = r0; r < r1; ++r) {
        const S* yr = y.data() + r * width;
        const S* gr = g.data() + r * width;
        S* pr = pg.data() + r * width;
        double acc = 0;
        for (std::size_t j = 0; j < width; ++j) acc += double(yr[j]) * double(gr[j]);
        const S d = static_cast<S>(acc);
        for (std::size_t j = 0; j < width; ++j) pr[j] += yr[j] * (gr[j] - d);
      }
    };
    if (rows >= 64 && y.size() >= detail::kParallelCutoff) parallel_for(rows, body);
    else body(0, rows);
  });
  return out;
}

/// Softmax over [..., seq, seq] score blocks under a lower-triangular mask;
/// equivalent to softmax_lastdim with a causal mask but only touches the
/// unmasked triangle.
template <typename S>
Tensor<S> softmax_causal(const Tensor<S>& x) {
  if (x.rank() < 2 || x.extent(x.rank() - 1) != x.extent(x.rank() - 2)) {
    throw std::invalid_argument("softmax_causal: expected [..., seq, seq], got " +
                                shape_str(x.shape()));
  }
  const std::size_t seq = x.extent(x.rank() - 1);
  const std::size_t rows = x.numel() / seq;
  Tensor<S> out = Tensor<S>::make(x.shape(), "softmax_causal");
  const auto& xd = x.data();
  auto& yd = out.data();
  auto fwd = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const std::size_t limit = (r % seq) + 1;
      const S* xr = xd.data() + r * seq;
      S* yr = yd.data() + r * seq;
      S mx = xr[0];
      for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, xr[j]);
      double sum = 0;
      for (std::size_t j = 0; j < limit; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        sum += double(yr[j]);
      }
      const S inv = static_cast<S>(1.0 / sum);
      for (std::size_t j = 0; j < limit; ++j) yr[j] *= inv;
      for (std::size_t j = limit; j < seq; ++j) yr[j] = S(0);
    }
  };
  if (rows >= 64 && x.numel() >= detail::kParallelCutoff) parallel_for(rows, fwd);
  else fwd(0, rows);

  out.attach({x}, [seq, rows](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& y = *self.data;
    const auto& g = *self.grad;
    auto body = [&](std::size_t r0, std::size_t r1) {
      for (std::size_t r = r0; r < r1; ++r) {
        const std::size_t limit = (r % seq) + 1;
        const S* yr = y.data() + r * seq;
        const S* gr = g.data() + r * seq;
        S* pr = pg.data() + r * seq;
        double acc = 0;
        for (std::size_t j = 0; j < limit; ++j) acc += double(yr[j]) * double(gr[j]);
        const S d = static_cast<S>(acc);
        for (std::size_t j = 0; j < limit; ++j) pr[j] += yr[j] * (gr[j] - d);
      }
    };
    if (rows >= 64 && y.size() >= detail::kParallelCutoff) parallel_for(rows, body);
    else body(0, rows);
  });
  return out;
}

namespace detail {

// Shared RMS-norm kernel. gain may be null (plain normalizer); gain_rows
// selects a gain row per data row with the given period (headwise norm).
template <typename S>
Tensor<S> rms_norm_impl(const Tensor<S>& x, const Tensor<S>* gain, std::size_t gain_rows,
                        std::size_t gain_period, double eps, const char* name) {
  const std::size_t width = x.extent(x.rank() - 1);
  const std::size_t rows = x.numel() / width;
  Tensor<S> out = Tensor<S>::make(x.shape(), name);
  auto rinv = std::make_shared<std::vector<S>>(rows);
  const auto& xd = x.data();
  auto& yd = out.data();
  const S* gd = gain ? gain->data().data() : nullptr;
  auto fwd = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const S* xr = xd.data() + r * width;
      S* yr = yd.data() + r * width;
      const S* gr = gd ? gd + ((r / gain_period) % gain_rows) * width : nullptr;
      double ms = 0;
      for (std::size_t j = 0; j < width; ++j) ms += double(xr[j]) * double(xr[j]);
      ms = ms / double(width) + eps;
      const S inv = static_cast<S>(1.0 / std::sqrt(ms));
      (*rinv)[r] = inv;
      for (std::size_t j = 0; j < width; ++j) yr[j] = (gr ? gr[j] : S(1)) * xr[j] * inv;
    }
  };
  if (rows >= 64 && x.numel() >= kParallelCutoff) parallel_for(rows, fwd);
  else fwd(0, rows);

  std::vector<Tensor<S>> parents = {x};
  if (gain) parents.push_back(*gain);
  out.attach(std::move(parents), [rinv, width, rows, gain_rows, gain_period,
                                  has_gain = gain != nullptr](const TensorNode<S>& self) {
    const Tensor<S>& px = self.parents[0];
    const Tensor<S>* pgain = has_gain ? &self.parents[1] : nullptr;
    const auto& xd2 = px.data();
    const auto& g = *self.grad;
    const S* gd2 = pgain ? pgain->data().data() : nullptr;
    if (px.requires_grad()) {
      px.node()->ensure_grad();
      auto& pg = *px.node()->grad;
      auto body = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          const S* xr = xd2.data() + r * width;
          const S* gr = g.data() + r * width;
          const S* wr = gd2 ? gd2 + ((r / gain_period) % gain_rows) * width : nullptr;
          S* pr = pg.data() + r * width;
          const S inv = (*rinv)[r];
          double acc = 0;  // sum_k dy_k * w_k * x_k
          for (std::size_t j = 0; j < width; ++j) {
            acc += double(gr[j]) * double(wr ? wr[j] : S(1)) * double(xr[j]);
          }
          const S c = static_cast<S>(acc * double(inv) * double(inv) * double(inv) / double(width));
          for (std::size_t j = 0; j < width; ++j) {
            pr[j] += (wr ? wr[j] : S(1)) * gr[j] * inv - c * xr[j];
          }
        }
      };
      if (rows >= 64 && g.size() >= kParallelCutoff) parallel_for(rows, body);
      else body(0, rows);
    }
    if (pgain && pgain->requires_grad()) {
      pgain->node()->ensure_grad();
      auto& wg = *pgain->node()->grad;
      // serial sweep; gain rows are shared across data rows
      for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = xd2.data() + r * width;
        const S* gr = g.data() + r * width;
        S* wr = wg.data() + ((r / gain_period) % gain_rows) * width;
        const S inv = (*rinv)[r];
        for (std::size_t j = 0; j < width; ++j) wr[j] += gr[j] * xr[j] * inv;
      }
    }
  });
  return out;
}

}  // namespace detail

/// y = gain ⊙ x / sqrt(mean(x^2) + eps) over the last dimension.
template <typename S>
Tensor<S> rms_norm(const Tensor<S>& x, const Tensor<S>& gain, double eps) {
  if (eps <= 0) throw std::invalid_argument("rms_norm: epsilon must be positive");
  if (gain.rank() != 1 || gain.numel() != x.extent(x.rank() - 1)) {
    throw std::invalid_argument("rms_norm: gain " + shape_str(gain.shape()) +
                                " does not match last extent of " + shape_str(x.shape()));
  }
  return detail::rms_norm_impl(x, &gain, 1, 1, eps, "rms_norm");
}

/// Plain RMS normalizer rho(u) = u / sqrt(mean(u^2) + eps), no gain.
template <typename S>
Tensor<S> rms_normalize(const Tensor<S>& x, double eps) {
  if (eps <= 0) throw std::invalid_argument("rms_normalize: epsilon must be positive");
  return detail::rms_norm_impl<S>(x, nullptr, 1, 1, eps, "rms_normalize");
}

/// Per-head RMS norm: x is [..., heads, seq, width], gains is [heads, width].
template <typename S>
Tensor<S> headwise_rms_norm(const Tensor<S>& x, const Tensor<S>& gains, double eps) {
  if (x.rank() < 3) throw std::invalid_argument("headwise_rms_norm: input rank must be >= 3");
  const std::size_t width = x.extent(x.rank() - 1);
  const std::size_t seq = x.extent(x.rank() - 2);
  const std::size_t heads = x.extent(x.rank() - 3);
  if (gains.rank() != 2 || gains.extent(0) != heads || gains.extent(1) != width) {
    throw std::invalid_argument("headwise_rms_norm: gains " + shape_str(gains.shape()) +
                                " does not match " + shape_str(x.shape()));
  }
  return detail::rms_norm_impl(x, &gains, heads, seq, eps, "headwise_rms_norm");
}

// ---------------------------------------------------------------------------
// Embedding and losses
// ---------------------------------------------------------------------------

/// Row gather: tokens index into table [vocab, dim]; out is tokens-shape + [dim].
template <typename S>
Tensor<S> embedding(const std::vector<std::int32_t>& tokens, Shape tokens_shape,
                    const Tensor<S>& table) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank-2");
  if (shape_numel(tokens_shape) != tokens.size()) {
    throw std::invalid_argument("embedding: token count does not match shape");
  }
  const std::size_t vocab = table.extent(0), dim = table.extent(1);
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("embedding: token id " + std::to_string(t) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
  }
  Shape out_shape = tokens_shape;
  out_shape.push_back(dim);
  Tensor<S> out = Tensor<S>::make(out_shape, "embedding");
  const auto& td = table.data();
  auto& yd = out.data();
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      std::copy(td.begin() + tokens[i] * dim, td.begin() + (tokens[i] + 1) * dim,
                yd.begin() + i * dim);
    }
  };
  if (tokens.size() * dim >= detail::kParallelCutoff) parallel_for(tokens.size(), body);
  else body(0, tokens.size());
  auto toks = std::make_shared<std::vector<std::int32_t>>(tokens);
  out.attach({table}, [toks, dim](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& g = *self.grad;
    // scatter-add; serial keeps accumulation order fixed
    for (std::size_t i = 0; i < toks->size(); ++i) {
      S* dst = pg.data() + (*toks)[i] * dim;
      const S* src = g.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
    }
  });
  return out;
}

/// Mean cross-entropy of logits rows against integer targets.
template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits, const std::vector<std::int32_t>& targets) {
  if (logits.rank() < 2) throw std::invalid_argument("cross_entropy: logits rank must be >= 2");
  const std::size_t vocab = logits.extent(logits.rank() - 1);
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  }
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
  }
  Tensor<S> out = Tensor<S>::make({}, "cross_entropy");
  const auto& xd = logits.data();
  std::vector<double> row_loss(rows);
  auto fwd = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const S* xr = xd.data() + r * vocab;
      S mx = xr[0];
      for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, xr[j]);
      double sum = 0;
      for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(double(xr[j]) - double(mx));
      row_loss[r] = double(mx) + std::log(sum) - double(xr[targets[r]]);
    }
  };
  if (rows >= 64 && logits.numel() >= detail::kParallelCutoff) parallel_for(rows, fwd);
  else fwd(0, rows);
  double acc = 0;
  for (double v : row_loss) acc += v;
  out.data()[0] = static_cast<S>(acc / double(rows));
  auto tgt = std::make_shared<std::vector<std::int32_t>>(targets);
  out.attach({logits}, [tgt, vocab, rows](const detail::TensorNode<S>& self) {
    const Tensor<S>& p = self.parents[0];
    if (!p.requires_grad()) return;
    p.node()->ensure_grad();
    auto& pg = *p.node()->grad;
    const auto& xd2 = p.data();
    const S g = (*self.grad)[0] / static_cast<S>(rows);
    auto body = [&](std::size_t r0, std::size_t r1) {
      for (std::size_t r = r0; r < r1; ++r) {
        const S* xr = xd2.data() + r * vocab;
        S* pr = pg.data() + r * vocab;
        S mx = xr[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, xr[j]);
        double sum = 0;
        for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(double(xr[j]) - double(mx));
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < vocab; ++j) {
          double soft = std::exp(double(xr[j]) - double(mx)) * inv;
          pr[j] += g * static_cast<S>(soft - (static_cast<std::size_t>((*tgt)[r]) == j ? 1.0 : 0.0));
        }
      }
    };
    if (rows >= 64 && xd2.size() >= detail::kParallelCutoff) parallel_for(rows, body);
    else body(0, rows);
  });
  return out;
}

/// Summed log-likelihood of targets under logits rows (rank-0 output).
template <typename S>
Tensor<S> sequence_logprob(const Tensor<S>& logits, const std::vector<std::int32_t>& targets) {
  Tensor<S> nll = cross_entropy_mean(logits, targets);
  return scale(nll, -static_cast<S>(targets.size()));
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Max relative error between the tape gradient of f at x and central finite
/// differences, |analytic - numeric| / max(1, |analytic|). 64-bit only.
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> xg = x.clone();
  xg.set_requires_grad(true);
  Tensor<double> y = f(xg);
  if (y.numel() != 1) throw std::invalid_argument("grad_check: objective must be scalar");
  if (!std::isfinite(y.item())) throw std::runtime_error("grad_check: non-finite objective");
  y.backward();
  std::vector<double> analytic = xg.grad();

  Tensor<double> xp = x.clone();
  double max_rel = 0.0;
  NoGradGuard ng;
  for (std::size_t i = 0; i < xp.numel(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + h;
    const double fp = f(xp).item();
    xp.data()[i] = orig - h;
    const double fm = f(xp).item();
    xp.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("grad_check: non-finite evaluation at coordinate " +
                               std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace motif
