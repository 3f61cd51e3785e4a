// Dense tensors with reverse-mode differentiation. Tensors are immutable
// values; a Tape records primitive ops in creation order (inputs always
// precede outputs) and replays them once, in reverse, for backward.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tricl/common.hpp"

namespace tricl {

using Shape = std::vector<std::int64_t>;
using Values = std::shared_ptr<const std::vector<Real>>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<Real> vals) {
    Tensor t;
    for (auto e : shape)
      require(e > 0, ErrorKind::InvalidShape, "tensor extents must be positive");
    require(shape_numel(shape) == static_cast<std::int64_t>(vals.size()),
            ErrorKind::InvalidShape, "value count does not match shape");
    t.shape_ = std::move(shape);
    t.vals_ = std::make_shared<const std::vector<Real>>(std::move(vals));
    return t;
  }

  static Tensor zeros(Shape shape) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<Real>(static_cast<size_t>(n), Real(0)));
  }

  static Tensor full(Shape shape, Real v) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<Real>(static_cast<size_t>(n), v));
  }

  static Tensor scalar(Real v) { return from({}, {v}); }

  static Tensor identity(std::int64_t n) {
    std::vector<Real> v(static_cast<size_t>(n * n), Real(0));
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = Real(1);
    return from({n, n}, std::move(v));
  }

  bool defined() const { return static_cast<bool>(vals_); }
  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  std::int64_t numel() const { return defined() ? static_cast<std::int64_t>(vals_->size()) : 0; }
  std::int64_t extent(size_t dim) const { return shape_.at(dim); }
  const std::vector<Real>& values() const { return *vals_; }
  Values storage() const { return vals_; }

  Real value() const {
    require(numel() == 1, ErrorKind::InvalidShape, "value(): tensor is not scalar");
    return (*vals_)[0];
  }

  Real at(std::initializer_list<std::int64_t> idx) const {
    require(idx.size() == shape_.size(), ErrorKind::InvalidShape, "at(): rank mismatch");
    std::int64_t flat = 0;
    size_t d = 0;
    for (auto i : idx) {
      require(i >= 0 && i < shape_[d], ErrorKind::InvalidShape, "at(): index out of range");
      flat = flat * shape_[d] + i;
      ++d;
    }
    return (*vals_)[static_cast<size_t>(flat)];
  }

  bool finite() const {
    for (Real v : *vals_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool requires_grad() const { return requires_grad_; }
  const Tape* tape() const { return tape_; }
  std::int64_t node() const { return node_; }

 private:
  friend class Tape;
  friend Tensor attach_node(Tensor t, const Tape* tape, std::int64_t node);

  Shape shape_;
  Values vals_;
  const Tape* tape_ = nullptr;
  std::int64_t node_ = -1;
  bool requires_grad_ = false;
};

inline Tensor attach_node(Tensor t, const Tape* tape, std::int64_t node) {
  t.tape_ = tape;
  t.node_ = node;
  return t;
}

using GradMap = std::map<std::string, Tensor>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<Real>&)>;

  Tape() {
    require(active_slot() == nullptr, ErrorKind::ContractViolation,
            "a tape is already active on this thread");
    active_slot() = this;
  }
  ~Tape() { active_slot() = nullptr; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_slot(); }

  // Registers a differentiable leaf. Watching the same storage twice yields
  // the same node, so parameter maps can be re-watched wholesale.
  Tensor watch(const std::string& name, const Tensor& t) {
    require(t.defined(), ErrorKind::InvalidShape, "watch: undefined tensor");
    const void* key = static_cast<const void*>(t.storage().get());
    auto it = leaf_by_storage_.find(key);
    if (it != leaf_by_storage_.end()) {
      Tensor bound = attach_node(t, this, it->second);
      bound.requires_grad_ = true;
      return bound;
    }
    require(!leaf_by_name_.count(name), ErrorKind::ContractViolation,
            "watch: duplicate leaf name " + name);
    const std::int64_t id = add_node(t.numel(), nullptr);
    leaf_by_storage_.emplace(key, id);
    leaf_by_name_.emplace(name, LeafInfo{id, t.shape()});
    Tensor bound = attach_node(t, this, id);
    bound.requires_grad_ = true;
    return bound;
  }

  std::int64_t add_node(std::int64_t numel, BackwardFn fn) {
    nodes_.push_back(NodeRec{numel, std::move(fn)});
    return static_cast<std::int64_t>(nodes_.size()) - 1;
  }

  std::vector<Real>& grad_buf(std::int64_t node) {
    auto& g = grads_[static_cast<size_t>(node)];
    if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), Real(0));
    return g;
  }

  // Reverse sweep from a scalar loss. Watched leaves the loss never reached
  // report zero gradients.
  GradMap gradients(const Tensor& loss) {
    require(loss.tape() == this && loss.node() >= 0, ErrorKind::ContractViolation,
            "gradients: loss was not recorded on the active tape");
    require(loss.numel() == 1, ErrorKind::InvalidShape, "gradients: loss must be scalar");

    grads_.assign(nodes_.size(), {});
    grad_buf(loss.node())[0] = Real(1);
    for (std::int64_t i = loss.node(); i >= 0; --i) {
      auto& rec = nodes_[static_cast<size_t>(i)];
      auto& g = grads_[static_cast<size_t>(i)];
      if (g.empty() || !rec.fn) continue;
      rec.fn(*this, g);
    }

    GradMap out;
    for (const auto& [name, leaf] : leaf_by_name_) {
      auto& g = grads_[static_cast<size_t>(leaf.node)];
      if (g.empty())
        out.emplace(name, Tensor::zeros(leaf.shape));
      else
        out.emplace(name, Tensor::from(leaf.shape, g));
    }
    grads_.clear();
    return out;
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct NodeRec {
    std::int64_t numel;
    BackwardFn fn;
  };
  struct LeafInfo {
    std::int64_t node;
    Shape shape;
  };

  static Tape*& active_slot() {
    thread_local Tape* t = nullptr;
    return t;
  }

  std::vector<NodeRec> nodes_;
  std::vector<std::vector<Real>> grads_;
  std::unordered_map<const void*, std::int64_t> leaf_by_storage_;
  std::map<std::string, LeafInfo> leaf_by_name_;
};

namespace detail {

inline std::int64_t node_of(const Tensor& t, const Tape* tp) {
  return (tp && t.tape() == tp) ? t.node() : -1;
}

// Shares the op result with the active tape when any input participates.
inline Tensor record(Tensor out, std::initializer_list<std::int64_t> in_nodes,
                     Tape::BackwardFn fn) {
  Tape* tp = Tape::active();
  if (!tp) return out;
  bool any = false;
  for (auto n : in_nodes) any = any || (n >= 0);
  if (!any) return out;
  const std::int64_t id = tp->add_node(out.numel(), std::move(fn));
  return attach_node(std::move(out), tp, id);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise, reductions, small vector ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::InvalidShape,
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<Real> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na, nb},
                        [na, nb](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0) {
                            auto& ga = t.grad_buf(na);
                            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                          }
                        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::InvalidShape, "sub: shape mismatch");
  std::vector<Real> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na, nb},
                        [na, nb](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0) {
                            auto& ga = t.grad_buf(na);
                            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                          }
                        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::InvalidShape, "mul: shape mismatch");
  std::vector<Real> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  auto ap = a.storage(), bp = b.storage();
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na, nb},
                        [na, nb, ap, bp](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0) {
                            auto& ga = t.grad_buf(na);
                            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bp)[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*ap)[i];
                          }
                        });
}

inline Tensor scale(const Tensor& a, Real c) {
  std::vector<Real> v(a.values());
  for (auto& x : v) x *= c;
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na},
                        [na, c](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                        });
}

inline Tensor relu(const Tensor& a) {
  std::vector<Real> v(a.values());
  for (auto& x : v)
    if (x < Real(0)) x = Real(0);
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  auto ap = a.storage();
  // Subgradient at 0 is taken as 0.
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na},
                        [na, ap](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (size_t i = 0; i < g.size(); ++i)
                            if ((*ap)[i] > Real(0)) ga[i] += g[i];
                        });
}

inline Tensor sum(const Tensor& a) {
  Real s = 0;
  for (Real x : a.values()) s += x;
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  const auto n = static_cast<size_t>(a.numel());
  return detail::record(Tensor::scalar(s), {na},
                        [na, n](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (size_t i = 0; i < n; ++i) ga[i] += g[0];
                        });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), Real(1) / static_cast<Real>(a.numel())); }

inline Tensor dot(const Tensor& a, const Tensor& b) {
  require(a.rank() == 1 && b.rank() == 1 && a.numel() == b.numel(),
          ErrorKind::InvalidShape, "dot: expects equal-length vectors");
  Real s = 0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  auto ap = a.storage(), bp = b.storage();
  return detail::record(Tensor::scalar(s), {na, nb},
                        [na, nb, ap, bp](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0) {
                            auto& ga = t.grad_buf(na);
                            for (size_t i = 0; i < bp->size(); ++i) ga[i] += g[0] * (*bp)[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (size_t i = 0; i < ap->size(); ++i) gb[i] += g[0] * (*ap)[i];
                          }
                        });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), ErrorKind::InvalidShape,
          "reshape: element count mismatch");
  std::vector<Real> v(a.values());
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  return detail::record(Tensor::from(std::move(shape), std::move(v)), {na},
                        [na](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        });
}

inline Tensor row(const Tensor& m, std::int64_t i) {
  require(m.rank() == 2, ErrorKind::InvalidShape, "row: expects a matrix");
  const auto rows = m.extent(0), cols = m.extent(1);
  require(i >= 0 && i < rows, ErrorKind::InvalidShape, "row: index out of range");
  const auto& mv = m.values();
  std::vector<Real> v(mv.begin() + i * cols, mv.begin() + (i + 1) * cols);
  Tape* tp = Tape::active();
  const auto nm = detail::node_of(m, tp);
  return detail::record(Tensor::from({cols}, std::move(v)), {nm},
                        [nm, i, cols](Tape& t, const std::vector<Real>& g) {
                          auto& gm = t.grad_buf(nm);
                          for (std::int64_t j = 0; j < cols; ++j)
                            gm[static_cast<size_t>(i * cols + j)] += g[static_cast<size_t>(j)];
                        });
}

inline Tensor at_index(const Tensor& v, std::int64_t i) {
  require(v.rank() == 1, ErrorKind::InvalidShape, "at_index: expects a vector");
  require(i >= 0 && i < v.extent(0), ErrorKind::InvalidShape, "at_index: out of range");
  Tape* tp = Tape::active();
  const auto nv = detail::node_of(v, tp);
  return detail::record(Tensor::scalar(v.values()[static_cast<size_t>(i)]), {nv},
                        [nv, i](Tape& t, const std::vector<Real>& g) {
                          t.grad_buf(nv)[static_cast<size_t>(i)] += g[0];
                        });
}

inline Tensor drop_index(const Tensor& v, std::int64_t i) {
  require(v.rank() == 1, ErrorKind::InvalidShape, "drop_index: expects a vector");
  const auto n = v.extent(0);
  require(i >= 0 && i < n, ErrorKind::InvalidShape, "drop_index: out of range");
  require(n >= 2, ErrorKind::InvalidShape, "drop_index: vector too short");
  std::vector<Real> out;
  out.reserve(static_cast<size_t>(n - 1));
  const auto& vv = v.values();
  for (std::int64_t j = 0; j < n; ++j)
    if (j != i) out.push_back(vv[static_cast<size_t>(j)]);
  Tape* tp = Tape::active();
  const auto nv = detail::node_of(v, tp);
  return detail::record(Tensor::from({n - 1}, std::move(out)), {nv},
                        [nv, i, n](Tape& t, const std::vector<Real>& g) {
                          auto& gv = t.grad_buf(nv);
                          std::int64_t k = 0;
                          for (std::int64_t j = 0; j < n; ++j) {
                            if (j == i) continue;
                            gv[static_cast<size_t>(j)] += g[static_cast<size_t>(k++)];
                          }
                        });
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  require(a.rank() == 1 && b.rank() == 1, ErrorKind::InvalidShape, "concat: expects vectors");
  std::vector<Real> v(a.values());
  v.insert(v.end(), b.values().begin(), b.values().end());
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  const auto an = static_cast<size_t>(a.numel()), bn = static_cast<size_t>(b.numel());
  return detail::record(Tensor::from({a.numel() + b.numel()}, std::move(v)), {na, nb},
                        [na, nb, an, bn](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0) {
                            auto& ga = t.grad_buf(na);
                            for (size_t i = 0; i < an; ++i) ga[i] += g[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (size_t i = 0; i < bn; ++i) gb[i] += g[an + i];
                          }
                        });
}

// Mean over one axis; result drops that axis.
inline Tensor mean_axis(const Tensor& a, size_t axis) {
  require(axis < a.rank(), ErrorKind::InvalidShape, "mean_axis: axis out of range");
  const auto& sh = a.shape();
  std::int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= sh[d];
  for (size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
  const std::int64_t ax = sh[axis];
  Shape osh;
  for (size_t d = 0; d < sh.size(); ++d)
    if (d != axis) osh.push_back(sh[d]);
  std::vector<Real> out(static_cast<size_t>(outer * inner), Real(0));
  const auto& av = a.values();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < ax; ++k) {
      const Real* src = av.data() + (o * ax + k) * inner;
      Real* dst = out.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  const Real inv = Real(1) / static_cast<Real>(ax);
  for (auto& x : out) x *= inv;
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  return detail::record(Tensor::from(std::move(osh), std::move(out)), {na},
                        [na, outer, inner, ax, inv](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (std::int64_t o = 0; o < outer; ++o)
                            for (std::int64_t k = 0; k < ax; ++k) {
                              Real* dst = ga.data() + (o * ax + k) * inner;
                              const Real* src = g.data() + o * inner;
                              for (std::int64_t i = 0; i < inner; ++i) dst[i] += inv * src[i];
                            }
                        });
}

// Adds a bias vector broadcast along `axis`.
inline Tensor add_bias(const Tensor& x, const Tensor& b, size_t axis) {
  require(b.rank() == 1, ErrorKind::InvalidShape, "add_bias: bias must be a vector");
  require(axis < x.rank(), ErrorKind::InvalidShape, "add_bias: axis out of range");
  require(x.extent(axis) == b.extent(0), ErrorKind::InvalidShape,
          "add_bias: bias length does not match axis extent");
  const auto& sh = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= sh[d];
  for (size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
  const std::int64_t ax = sh[axis];
  std::vector<Real> v(x.values());
  const auto& bv = b.values();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < ax; ++k) {
      Real* dst = v.data() + (o * ax + k) * inner;
      const Real bk = bv[static_cast<size_t>(k)];
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += bk;
    }
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp), nb = detail::node_of(b, tp);
  return detail::record(Tensor::from(x.shape(), std::move(v)), {nx, nb},
                        [nx, nb, outer, inner, ax](Tape& t, const std::vector<Real>& g) {
                          if (nx >= 0) {
                            auto& gx = t.grad_buf(nx);
                            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          }
                          if (nb >= 0) {
                            auto& gb = t.grad_buf(nb);
                            for (std::int64_t o = 0; o < outer; ++o)
                              for (std::int64_t k = 0; k < ax; ++k) {
                                const Real* src = g.data() + (o * ax + k) * inner;
                                Real acc = 0;
                                for (std::int64_t i = 0; i < inner; ++i) acc += src[i];
                                gb[static_cast<size_t>(k)] += acc;
                              }
                          }
                        });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, ErrorKind::InvalidShape, "transpose: expects a matrix");
  const auto m = a.extent(0), n = a.extent(1);
  std::vector<Real> v(static_cast<size_t>(m * n));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      v[static_cast<size_t>(j * m + i)] = av[static_cast<size_t>(i * n + j)];
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  return detail::record(Tensor::from({n, m}, std::move(v)), {na},
                        [na, m, n](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (std::int64_t j = 0; j < n; ++j)
                            for (std::int64_t i = 0; i < m; ++i)
                              ga[static_cast<size_t>(i * n + j)] += g[static_cast<size_t>(j * m + i)];
                        });
}

namespace detail {

// C[m,n] += A[m,k] * B[k,n]; rows of C are partitioned across workers.
inline void gemm_acc(const Real* A, const Real* B, Real* C, std::int64_t m,
                     std::int64_t k, std::int64_t n) {
  parallel_for(m, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      Real* crow = C + i * n;
      const Real* arow = A + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const Real a = arow[p];
        if (a == Real(0)) continue;
        const Real* brow = B + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

// C[m,n] += A[m,k] * B^T where B is [n,k].
inline void gemm_nt_acc(const Real* A, const Real* B, Real* C, std::int64_t m,
                        std::int64_t k, std::int64_t n) {
  parallel_for(m, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      Real* crow = C + i * n;
      const Real* arow = A + i * k;
      for (std::int64_t j = 0; j < n; ++j) {
        const Real* brow = B + j * k;
        Real acc = 0;
        for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  });
}

// C[m,n] += A^T * B where A is [k,m], B is [k,n].
inline void gemm_tn_acc(const Real* A, const Real* B, Real* C, std::int64_t m,
                        std::int64_t k, std::int64_t n) {
  parallel_for(m, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      Real* crow = C + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const Real a = A[p * m + i];
        if (a == Real(0)) continue;
        const Real* brow = B + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::InvalidShape,
          "matmul: expects matrices");
  const auto m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  require(k == k2, ErrorKind::InvalidShape,
          "matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<Real> v(static_cast<size_t>(m * n), Real(0));
  detail::gemm_acc(a.values().data(), b.values().data(), v.data(), m, k, n);
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp), nb = detail::node_of(b, tp);
  auto ap = a.storage(), bp = b.storage();
  return detail::record(Tensor::from({m, n}, std::move(v)), {na, nb},
                        [na, nb, ap, bp, m, k, n](Tape& t, const std::vector<Real>& g) {
                          if (na >= 0)  // dA = G * B^T
                            detail::gemm_nt_acc(g.data(), bp->data(),
                                                t.grad_buf(na).data(), m, n, k);
                          if (nb >= 0)  // dB = A^T * G
                            detail::gemm_tn_acc(ap->data(), g.data(),
                                                t.grad_buf(nb).data(), k, m, n);
                        });
}

inline Tensor matvec(const Tensor& m, const Tensor& v) {
  require(m.rank() == 2 && v.rank() == 1 && m.extent(1) == v.extent(0),
          ErrorKind::InvalidShape, "matvec: shape mismatch");
  const auto rows = m.extent(0), cols = m.extent(1);
  std::vector<Real> out(static_cast<size_t>(rows), Real(0));
  const auto& mv = m.values();
  const auto& vv = v.values();
  for (std::int64_t i = 0; i < rows; ++i) {
    const Real* mr = mv.data() + i * cols;
    Real acc = 0;
    for (std::int64_t j = 0; j < cols; ++j) acc += mr[j] * vv[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = acc;
  }
  Tape* tp = Tape::active();
  const auto nm = detail::node_of(m, tp), nv = detail::node_of(v, tp);
  auto mp = m.storage(), vp = v.storage();
  return detail::record(Tensor::from({rows}, std::move(out)), {nm, nv},
                        [nm, nv, mp, vp, rows, cols](Tape& t, const std::vector<Real>& g) {
                          if (nm >= 0) {
                            auto& gm = t.grad_buf(nm);
                            for (std::int64_t i = 0; i < rows; ++i) {
                              const Real gi = g[static_cast<size_t>(i)];
                              if (gi == Real(0)) continue;
                              Real* gr = gm.data() + i * cols;
                              const Real* vr = vp->data();
                              for (std::int64_t j = 0; j < cols; ++j) gr[j] += gi * vr[j];
                            }
                          }
                          if (nv >= 0) {
                            auto& gv = t.grad_buf(nv);
                            for (std::int64_t i = 0; i < rows; ++i) {
                              const Real gi = g[static_cast<size_t>(i)];
                              if (gi == Real(0)) continue;
                              const Real* mr = mp->data() + i * cols;
                              for (std::int64_t j = 0; j < cols; ++j)
                                gv[static_cast<size_t>(j)] += gi * mr[j];
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// convolutions (valid mode, no padding)
// ---------------------------------------------------------------------------

inline Tensor conv1d(const Tensor& x, const Tensor& w, std::int64_t stride) {
  require(stride >= 1, ErrorKind::InvalidShape, "conv1d: stride must be >= 1");
  require(w.rank() == 3, ErrorKind::InvalidShape, "conv1d: weight must be [Cout,Cin,K]");
  require(x.rank() == 2 || x.rank() == 3, ErrorKind::InvalidShape,
          "conv1d: input must be [Cin,L] or [N,Cin,L]");
  const bool batched = x.rank() == 3;
  const auto N = batched ? x.extent(0) : 1;
  const auto Cin = x.extent(batched ? 1 : 0);
  const auto L = x.extent(batched ? 2 : 1);
  const auto Cout = w.extent(0), K = w.extent(2);
  require(w.extent(1) == Cin, ErrorKind::InvalidShape, "conv1d: channel mismatch");
  require(K <= L, ErrorKind::InvalidShape, "conv1d: kernel longer than input");
  const auto Lo = (L - K) / stride + 1;

  // Output-position-major loops keep every inner pass over contiguous memory.
  std::vector<Real> out(static_cast<size_t>(N * Cout * Lo));
  const Real* xd = x.values().data();
  const Real* wd = w.values().data();
  parallel_for(N * Cout, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t bc = b0; bc < b1; ++bc) {
      const auto n = bc / Cout, co = bc % Cout;
      Real* yrow = out.data() + (n * Cout + co) * Lo;
      for (std::int64_t t = 0; t < Lo; ++t) {
        Real acc = 0;
        const std::int64_t base = t * stride;
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const Real* xr = xd + (n * Cin + ci) * L + base;
          const Real* wr = wd + (co * Cin + ci) * K;
          for (std::int64_t k = 0; k < K; ++k) acc += xr[k] * wr[k];
        }
        yrow[t] = acc;
      }
    }
  });

  Shape osh = batched ? Shape{N, Cout, Lo} : Shape{Cout, Lo};
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp), nw = detail::node_of(w, tp);
  auto xp = x.storage(), wp = w.storage();
  return detail::record(
      Tensor::from(std::move(osh), std::move(out)), {nx, nw},
      [nx, nw, xp, wp, N, Cin, Cout, L, Lo, K, stride](Tape& t, const std::vector<Real>& g) {
        if (nx >= 0) {
          auto& gx = t.grad_buf(nx);
          parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
            for (std::int64_t n = n0; n < n1; ++n)
              for (std::int64_t co = 0; co < Cout; ++co) {
                const Real* grow = g.data() + (n * Cout + co) * Lo;
                for (std::int64_t tt = 0; tt < Lo; ++tt) {
                  const Real gv = grow[tt];
                  if (gv == Real(0)) continue;
                  const std::int64_t base = tt * stride;
                  for (std::int64_t ci = 0; ci < Cin; ++ci) {
                    Real* gxr = gx.data() + (n * Cin + ci) * L + base;
                    const Real* wr = wp->data() + (co * Cin + ci) * K;
                    for (std::int64_t k = 0; k < K; ++k) gxr[k] += gv * wr[k];
                  }
                }
              }
          });
        }
        if (nw >= 0) {
          auto& gw = t.grad_buf(nw);
          parallel_for(Cout, [&](std::int64_t c0, std::int64_t c1) {
            std::vector<Real> local(static_cast<size_t>(Cin * K));
            for (std::int64_t co = c0; co < c1; ++co) {
              std::fill(local.begin(), local.end(), Real(0));
              for (std::int64_t n = 0; n < N; ++n) {
                const Real* grow = g.data() + (n * Cout + co) * Lo;
                for (std::int64_t tt = 0; tt < Lo; ++tt) {
                  const Real gv = grow[tt];
                  if (gv == Real(0)) continue;
                  const std::int64_t base = tt * stride;
                  for (std::int64_t ci = 0; ci < Cin; ++ci) {
                    const Real* xr = xp->data() + (n * Cin + ci) * L + base;
                    Real* acc = local.data() + ci * K;
                    for (std::int64_t k = 0; k < K; ++k) acc[k] += gv * xr[k];
                  }
                }
              }
              Real* gwr = gw.data() + co * Cin * K;
              for (std::int64_t i = 0; i < Cin * K; ++i) gwr[i] += local[static_cast<size_t>(i)];
            }
          });
        }
      });
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, std::int64_t stride) {
  require(stride >= 1, ErrorKind::InvalidShape, "conv2d: stride must be >= 1");
  require(w.rank() == 4, ErrorKind::InvalidShape, "conv2d: weight must be [Cout,Cin,Kh,Kw]");
  require(x.rank() == 3 || x.rank() == 4, ErrorKind::InvalidShape,
          "conv2d: input must be [Cin,H,W] or [N,Cin,H,W]");
  const bool batched = x.rank() == 4;
  const auto N = batched ? x.extent(0) : 1;
  const auto Cin = x.extent(batched ? 1 : 0);
  const auto H = x.extent(batched ? 2 : 1);
  const auto W = x.extent(batched ? 3 : 2);
  const auto Cout = w.extent(0), Kh = w.extent(2), Kw = w.extent(3);
  require(w.extent(1) == Cin, ErrorKind::InvalidShape, "conv2d: channel mismatch");
  require(Kh <= H && Kw <= W, ErrorKind::InvalidShape, "conv2d: kernel larger than input");
  const auto Ho = (H - Kh) / stride + 1;
  const auto Wo = (W - Kw) / stride + 1;

  // Weight-stationary forward: the inner pass slides along output columns.
  std::vector<Real> out(static_cast<size_t>(N * Cout * Ho * Wo), Real(0));
  const Real* xd = x.values().data();
  const Real* wd = w.values().data();
  parallel_for(N * Cout, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t bc = b0; bc < b1; ++bc) {
      const auto n = bc / Cout, co = bc % Cout;
      Real* yplane = out.data() + (n * Cout + co) * Ho * Wo;
      for (std::int64_t ci = 0; ci < Cin; ++ci) {
        const Real* xplane = xd + (n * Cin + ci) * H * W;
        const Real* wplane = wd + (co * Cin + ci) * Kh * Kw;
        for (std::int64_t kh = 0; kh < Kh; ++kh)
          for (std::int64_t kw = 0; kw < Kw; ++kw) {
            const Real wv = wplane[kh * Kw + kw];
            if (wv == Real(0)) continue;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
              const Real* xr = xplane + (oh * stride + kh) * W + kw;
              Real* yr = yplane + oh * Wo;
              for (std::int64_t ow = 0; ow < Wo; ++ow) yr[ow] += wv * xr[ow * stride];
            }
          }
      }
    }
  });

  Shape osh = batched ? Shape{N, Cout, Ho, Wo} : Shape{Cout, Ho, Wo};
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp), nw = detail::node_of(w, tp);
  auto xp = x.storage(), wp = w.storage();
  return detail::record(
      Tensor::from(std::move(osh), std::move(out)), {nx, nw},
      [nx, nw, xp, wp, N, Cin, Cout, H, W, Ho, Wo, Kh, Kw, stride](Tape& t,
                                                                   const std::vector<Real>& g) {
        if (nx >= 0) {
          auto& gx = t.grad_buf(nx);
          parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
            for (std::int64_t n = n0; n < n1; ++n)
              for (std::int64_t co = 0; co < Cout; ++co) {
                const Real* gplane = g.data() + (n * Cout + co) * Ho * Wo;
                for (std::int64_t oh = 0; oh < Ho; ++oh)
                  for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    const Real gv = gplane[oh * Wo + ow];
                    if (gv == Real(0)) continue;
                    for (std::int64_t ci = 0; ci < Cin; ++ci) {
                      Real* gwin = gx.data() + ((n * Cin + ci) * H + oh * stride) * W + ow * stride;
                      const Real* wplane = wp->data() + (co * Cin + ci) * Kh * Kw;
                      for (std::int64_t kh = 0; kh < Kh; ++kh) {
                        Real* gr = gwin + kh * W;
                        const Real* wr = wplane + kh * Kw;
                        for (std::int64_t kw = 0; kw < Kw; ++kw) gr[kw] += gv * wr[kw];
                      }
                    }
                  }
              }
          });
        }
        if (nw >= 0) {
          auto& gw = t.grad_buf(nw);
          parallel_for(Cout, [&](std::int64_t c0, std::int64_t c1) {
            std::vector<Real> local(static_cast<size_t>(Cin * Kh * Kw));
            for (std::int64_t co = c0; co < c1; ++co) {
              std::fill(local.begin(), local.end(), Real(0));
              for (std::int64_t n = 0; n < N; ++n) {
                const Real* gplane = g.data() + (n * Cout + co) * Ho * Wo;
                for (std::int64_t oh = 0; oh < Ho; ++oh)
                  for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    const Real gv = gplane[oh * Wo + ow];
                    if (gv == Real(0)) continue;
                    for (std::int64_t ci = 0; ci < Cin; ++ci) {
                      const Real* xwin =
                          xp->data() + ((n * Cin + ci) * H + oh * stride) * W + ow * stride;
                      Real* lrow = local.data() + ci * Kh * Kw;
                      for (std::int64_t kh = 0; kh < Kh; ++kh) {
                        const Real* xr = xwin + kh * W;
                        Real* lr = lrow + kh * Kw;
                        for (std::int64_t kw = 0; kw < Kw; ++kw) lr[kw] += gv * xr[kw];
                      }
                    }
                  }
              }
              Real* gwr = gw.data() + co * Cin * Kh * Kw;
              for (std::int64_t i = 0; i < Cin * Kh * Kw; ++i)
                gwr[i] += local[static_cast<size_t>(i)];
            }
          });
        }
      });
}

// Mean over the trailing spatial axis of [C,L] / [N,C,L].
inline Tensor spatial_mean_1d(const Tensor& x) {
  require(x.rank() == 2 || x.rank() == 3, ErrorKind::InvalidShape,
          "spatial_mean_1d: expects [C,L] or [N,C,L]");
  return mean_axis(x, x.rank() - 1);
}

// Mean over the trailing two spatial axes of [C,H,W] / [N,C,H,W].
inline Tensor spatial_mean_2d(const Tensor& x) {
  require(x.rank() == 3 || x.rank() == 4, ErrorKind::InvalidShape,
          "spatial_mean_2d: expects [C,H,W] or [N,C,H,W]");
  return mean_axis(mean_axis(x, x.rank() - 1), x.rank() - 2);
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

struct BatchNormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  Real momentum = Real(0.1);
  std::int64_t batches_seen = 0;
};

inline Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Real eps, BatchNormState* state = nullptr) {
  require(x.rank() == 2, ErrorKind::InvalidShape, "batch_norm: input must be [N,D]");
  const auto N = x.extent(0), D = x.extent(1);
  require(N >= 2, ErrorKind::DegenerateBatch, "batch_norm: batch size must be >= 2");
  require(gamma.rank() == 1 && gamma.extent(0) == D && beta.rank() == 1 && beta.extent(0) == D,
          ErrorKind::InvalidShape, "batch_norm: gamma/beta must be [D]");

  const auto& xv = x.values();
  std::vector<Real> mu(static_cast<size_t>(D), Real(0));
  std::vector<Real> var(static_cast<size_t>(D), Real(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t d = 0; d < D; ++d) mu[static_cast<size_t>(d)] += xv[n * D + d];
  for (auto& m : mu) m /= static_cast<Real>(N);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t d = 0; d < D; ++d) {
      const Real c = xv[n * D + d] - mu[static_cast<size_t>(d)];
      var[static_cast<size_t>(d)] += c * c;
    }
  for (auto& v : var) v /= static_cast<Real>(N);

  auto xhat = std::make_shared<std::vector<Real>>(static_cast<size_t>(N * D));
  auto inv_sd = std::make_shared<std::vector<Real>>(static_cast<size_t>(D));
  for (std::int64_t d = 0; d < D; ++d)
    (*inv_sd)[static_cast<size_t>(d)] = Real(1) / std::sqrt(var[static_cast<size_t>(d)] + eps);
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<Real> out(static_cast<size_t>(N * D));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t d = 0; d < D; ++d) {
      const Real h = (xv[n * D + d] - mu[static_cast<size_t>(d)]) * (*inv_sd)[static_cast<size_t>(d)];
      (*xhat)[static_cast<size_t>(n * D + d)] = h;
      out[static_cast<size_t>(n * D + d)] = gv[static_cast<size_t>(d)] * h + bv[static_cast<size_t>(d)];
    }

  if (state) {
    if (state->running_mean.empty()) {
      state->running_mean.assign(static_cast<size_t>(D), Real(0));
      state->running_var.assign(static_cast<size_t>(D), Real(1));
    }
    const Real mom = state->momentum;
    const Real unbias = static_cast<Real>(N) / static_cast<Real>(N - 1);
    for (std::int64_t d = 0; d < D; ++d) {
      auto dd = static_cast<size_t>(d);
      state->running_mean[dd] = (Real(1) - mom) * state->running_mean[dd] + mom * mu[dd];
      state->running_var[dd] = (Real(1) - mom) * state->running_var[dd] + mom * var[dd] * unbias;
    }
    state->batches_seen += 1;
  }

  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp);
  const auto ng = detail::node_of(gamma, tp);
  const auto nb = detail::node_of(beta, tp);
  auto gp = gamma.storage();
  return detail::record(
      Tensor::from({N, D}, std::move(out)), {nx, ng, nb},
      [nx, ng, nb, gp, xhat, inv_sd, N, D](Tape& t, const std::vector<Real>& g) {
        if (nb >= 0) {
          auto& gb = t.grad_buf(nb);
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t d = 0; d < D; ++d) gb[static_cast<size_t>(d)] += g[n * D + d];
        }
        if (ng >= 0) {
          auto& gg = t.grad_buf(ng);
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t d = 0; d < D; ++d)
              gg[static_cast<size_t>(d)] += g[n * D + d] * (*xhat)[static_cast<size_t>(n * D + d)];
        }
        if (nx >= 0) {
          auto& gx = t.grad_buf(nx);
          // dx = inv_sd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          std::vector<Real> m1(static_cast<size_t>(D), Real(0));
          std::vector<Real> m2(static_cast<size_t>(D), Real(0));
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t d = 0; d < D; ++d) {
              const Real dxh = g[n * D + d] * (*gp)[static_cast<size_t>(d)];
              m1[static_cast<size_t>(d)] += dxh;
              m2[static_cast<size_t>(d)] += dxh * (*xhat)[static_cast<size_t>(n * D + d)];
            }
          for (auto& v : m1) v /= static_cast<Real>(N);
          for (auto& v : m2) v /= static_cast<Real>(N);
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t d = 0; d < D; ++d) {
              const auto dd = static_cast<size_t>(d);
              const Real dxh = g[n * D + d] * (*gp)[dd];
              gx[static_cast<size_t>(n * D + d)] +=
                  (*inv_sd)[dd] * (dxh - m1[dd] - (*xhat)[static_cast<size_t>(n * D + d)] * m2[dd]);
            }
        }
      });
}

// Inference-mode batch norm against frozen running statistics; not recorded.
inline Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Real eps, const BatchNormState& state) {
  require(x.rank() == 2, ErrorKind::InvalidShape, "batch_norm_infer: input must be [N,D]");
  const auto N = x.extent(0), D = x.extent(1);
  require(static_cast<std::int64_t>(state.running_mean.size()) == D,
          ErrorKind::InvalidConfig, "batch_norm_infer: no running statistics for this width");
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<Real> out(static_cast<size_t>(N * D));
  for (std::int64_t d = 0; d < D; ++d) {
    const auto dd = static_cast<size_t>(d);
    const Real inv = Real(1) / std::sqrt(state.running_var[dd] + eps);
    for (std::int64_t n = 0; n < N; ++n)
      out[static_cast<size_t>(n * D + d)] =
          gv[dd] * ((xv[n * D + d] - state.running_mean[dd]) * inv) + bv[dd];
  }
  return Tensor::from({N, D}, std::move(out));
}

inline Tensor l2_normalize(const Tensor& x) {
  require(x.rank() == 1, ErrorKind::InvalidShape, "l2_normalize: expects a vector");
  Real nsq = 0;
  for (Real v : x.values()) nsq += v * v;
  const Real r = std::sqrt(nsq);
  require(r > Real(0), ErrorKind::DegenerateInput, "l2_normalize: zero vector");
  std::vector<Real> out(x.values());
  for (auto& v : out) v /= r;
  auto zp = std::make_shared<std::vector<Real>>(out);
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp);
  return detail::record(Tensor::from(x.shape(), std::move(out)), {nx},
                        [nx, zp, r](Tape& t, const std::vector<Real>& g) {
                          auto& gx = t.grad_buf(nx);
                          Real zg = 0;
                          for (size_t i = 0; i < g.size(); ++i) zg += (*zp)[i] * g[i];
                          for (size_t i = 0; i < g.size(); ++i)
                            gx[i] += (g[i] - (*zp)[i] * zg) / r;
                        });
}

// Row-wise unit normalization of [N,E].
inline Tensor l2_normalize_rows(const Tensor& x) {
  require(x.rank() == 2, ErrorKind::InvalidShape, "l2_normalize_rows: expects a matrix");
  const auto N = x.extent(0), E = x.extent(1);
  const auto& xv = x.values();
  std::vector<Real> out(static_cast<size_t>(N * E));
  auto norms = std::make_shared<std::vector<Real>>(static_cast<size_t>(N));
  for (std::int64_t n = 0; n < N; ++n) {
    Real nsq = 0;
    for (std::int64_t e = 0; e < E; ++e) nsq += xv[n * E + e] * xv[n * E + e];
    const Real r = std::sqrt(nsq);
    require(r > Real(0), ErrorKind::DegenerateEmbedding,
            "l2_normalize_rows: zero row " + std::to_string(n));
    (*norms)[static_cast<size_t>(n)] = r;
    for (std::int64_t e = 0; e < E; ++e) out[static_cast<size_t>(n * E + e)] = xv[n * E + e] / r;
  }
  auto zp = std::make_shared<std::vector<Real>>(out);
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp);
  return detail::record(Tensor::from({N, E}, std::move(out)), {nx},
                        [nx, zp, norms, N, E](Tape& t, const std::vector<Real>& g) {
                          auto& gx = t.grad_buf(nx);
                          for (std::int64_t n = 0; n < N; ++n) {
                            const Real r = (*norms)[static_cast<size_t>(n)];
                            Real zg = 0;
                            for (std::int64_t e = 0; e < E; ++e)
                              zg += (*zp)[static_cast<size_t>(n * E + e)] * g[n * E + e];
                            for (std::int64_t e = 0; e < E; ++e)
                              gx[static_cast<size_t>(n * E + e)] +=
                                  (g[n * E + e] - (*zp)[static_cast<size_t>(n * E + e)] * zg) / r;
                          }
                        });
}

// Elementwise log(1 + e^x), computed without overflow; gradient is sigmoid(x).
inline Tensor softplus(const Tensor& a) {
  std::vector<Real> v(a.values());
  for (auto& x : v)
    x = x > Real(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  Tape* tp = Tape::active();
  const auto na = detail::node_of(a, tp);
  auto ap = a.storage();
  return detail::record(Tensor::from(a.shape(), std::move(v)), {na},
                        [na, ap](Tape& t, const std::vector<Real>& g) {
                          auto& ga = t.grad_buf(na);
                          for (size_t i = 0; i < g.size(); ++i) {
                            const Real x = (*ap)[i];
                            const Real sig = x > Real(0)
                                                 ? Real(1) / (Real(1) + std::exp(-x))
                                                 : std::exp(x) / (Real(1) + std::exp(x));
                            ga[i] += g[i] * sig;
                          }
                        });
}

// log(sum(exp(x))) with the max-shift identity; gradient is softmax(x).
inline Tensor logsumexp(const Tensor& x) {
  require(x.rank() == 1 && x.numel() >= 1, ErrorKind::InvalidShape,
          "logsumexp: expects a non-empty vector");
  const auto& xv = x.values();
  const Real m = *std::max_element(xv.begin(), xv.end());
  Real s = 0;
  for (Real v : xv) s += std::exp(v - m);
  const Real out = m + std::log(s);
  auto soft = std::make_shared<std::vector<Real>>(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) (*soft)[i] = std::exp(xv[i] - m) / s;
  Tape* tp = Tape::active();
  const auto nx = detail::node_of(x, tp);
  return detail::record(Tensor::scalar(out), {nx},
                        [nx, soft](Tape& t, const std::vector<Real>& g) {
                          auto& gx = t.grad_buf(nx);
                          for (size_t i = 0; i < soft->size(); ++i) gx[i] += g[0] * (*soft)[i];
                        });
}

}  // namespace tricl
