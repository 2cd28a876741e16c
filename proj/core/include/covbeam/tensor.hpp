#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "covbeam/aligned.hpp"

// Reverse-mode automatic differentiation over 2-D real tensors. The operator
// set is deliberately small; richer operations (complex arithmetic, batched
// per-row matrix algebra, convolutions) are compositions of these primitives,
// so their gradients need no separate derivation.

namespace covbeam::ad {

inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct Node {
  covbeam::AlignedVec<T> val;
  covbeam::AlignedVec<T> grad;  // allocated on first use
  int rows = 0, cols = 0;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;
  std::string name;  // set for parameters

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  void ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), T(0));
  }
  MatMap<T> v() { return MatMap<T>(val.data(), rows, cols); }
  CMatMap<T> v() const { return CMatMap<T>(val.data(), rows, cols); }
  MatMap<T> g() { return MatMap<T>(grad.data(), rows, cols); }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor make(int rows, int cols) {
    Tensor t;
    t.n_ = std::make_shared<Node<T>>();
    t.n_->rows = rows;
    t.n_->cols = cols;
    t.n_->val.assign(static_cast<std::size_t>(rows) * cols, T(0));
    return t;
  }
  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    Tensor t = make(rows, cols);
    t.n_->requires_grad = requires_grad;
    return t;
  }
  static Tensor full(int rows, int cols, T v) {
    Tensor t = make(rows, cols);
    std::fill(t.n_->val.begin(), t.n_->val.end(), v);
    return t;
  }
  static Tensor from(const std::vector<T>& data, int rows, int cols, bool requires_grad = false) {
    if (data.size() != static_cast<std::size_t>(rows) * cols)
      throw std::invalid_argument("tensor data size mismatch");
    Tensor t = make(rows, cols);
    std::copy(data.begin(), data.end(), t.n_->val.begin());
    t.n_->requires_grad = requires_grad;
    return t;
  }
  static Tensor scalar(T v) { return full(1, 1, v); }

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  std::size_t size() const { return n_->size(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  const std::string& name() const { return n_->name; }
  void set_name(std::string s) { n_->name = std::move(s); }

  covbeam::AlignedVec<T>& values() { return n_->val; }
  const covbeam::AlignedVec<T>& values() const { return n_->val; }
  covbeam::AlignedVec<T>& grad() { return n_->grad; }
  const covbeam::AlignedVec<T>& grad() const { return n_->grad; }
  T value() const {
    if (size() != 1) throw std::logic_error("value() on non-scalar tensor");
    return n_->val[0];
  }

  MatMap<T> v() { return n_->v(); }
  CMatMap<T> v() const { return static_cast<const Node<T>&>(*n_).v(); }

  void zero_grad() { n_->grad.assign(n_->size(), T(0)); }

  std::shared_ptr<Node<T>> node() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <typename T>
bool track(std::initializer_list<const Tensor<T>*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T, typename Fn>
void attach(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs, Fn&& fn) {
  if (!track<T>(inputs)) return;
  out.node()->requires_grad = true;
  for (const Tensor<T>* t : inputs) out.node()->parents.push_back(t->node());
  out.node()->backprop = std::forward<Fn>(fn);
}

}  // namespace detail

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// ---- arithmetic ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v() + b.v();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g(); }
    if (bn->requires_grad) { bn->ensure_grad(); bn->g() += on->g(); }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v() - b.v();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g(); }
    if (bn->requires_grad) { bn->ensure_grad(); bn->g() -= on->g(); }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().cwiseProduct(b.v());
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g().cwiseProduct(bn->v()); }
    if (bn->requires_grad) { bn->ensure_grad(); bn->g() += on->g().cwiseProduct(an->v()); }
  });
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "div");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().cwiseQuotient(b.v());
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g().cwiseQuotient(bn->v()); }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->g() -= on->g().cwiseProduct(an->v()).cwiseQuotient(bn->v().cwiseProduct(bn->v()));
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v() * s;
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, s] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g() * s; }
  });
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().array() + s;
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g(); }
  });
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) { return scale(a, T(-1)); }

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
  Tensor<T> out = Tensor<T>::make(a.rows(), b.cols());
  out.v().noalias() = a.v() * b.v();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g().noalias() += on->g() * bn->v().transpose(); }
    if (bn->requires_grad) { bn->ensure_grad(); bn->g().noalias() += an->v().transpose() * on->g(); }
  });
  return out;
}

// b broadcast over rows of a
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw std::invalid_argument("add_rowvec: shape");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().rowwise() + b.v().row(0);
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) { an->ensure_grad(); an->g() += on->g(); }
    if (bn->requires_grad) { bn->ensure_grad(); bn->g().row(0) += on->g().colwise().sum(); }
  });
  return out;
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw std::invalid_argument("mul_rowvec: shape");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().array().rowwise() * b.v().row(0).array();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->g().array() += on->g().array().rowwise() * bn->v().row(0).array();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->g().row(0) += on->g().cwiseProduct(an->v()).colwise().sum();
    }
  });
  return out;
}

// b is [rows, 1], broadcast over columns of a
template <typename T>
Tensor<T> mul_colvec(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.cols() != 1 || b.rows() != a.rows()) throw std::invalid_argument("mul_colvec: shape");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().array().colwise() * b.v().col(0).array();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->g().array() += on->g().array().colwise() * bn->v().col(0).array();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->g().col(0) += on->g().cwiseProduct(an->v()).rowwise().sum();
    }
  });
  return out;
}

template <typename T>
Tensor<T> div_colvec(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.cols() != 1 || b.rows() != a.rows()) throw std::invalid_argument("div_colvec: shape");
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().array().colwise() / b.v().col(0).array();
  Node<T>*an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
  detail::attach(out, {&a, &b}, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->g().array() += on->g().array().colwise() / bn->v().col(0).array();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      auto u = bn->v().col(0).array();
      bn->g().col(0) -= (on->g().cwiseProduct(an->v()).rowwise().sum().array() / (u * u)).matrix();
    }
  });
  return out;
}

// ---- nonlinearities ----

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    auto y = on->v().array();
    an->g().array() += on->g().array() * y * (T(1) - y);
  });
  return out;
}

template <typename T>
Tensor<T> tanh_(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().unaryExpr([](T x) { return std::tanh(x); });
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    auto y = on->v().array();
    an->g().array() += on->g().array() * (T(1) - y * y);
  });
  return out;
}

// input must be positive
template <typename T>
Tensor<T> sqrt_(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().cwiseSqrt();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g().array() += on->g().array() * (T(0.5) / on->v().array());
  });
  return out;
}

template <typename T>
Tensor<T> log_(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  out.v() = a.v().array().log();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g().array() += on->g().array() / an->v().array();
  });
  return out;
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) { return mul(a, a); }

// ---- reductions & layout ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(1, 1);
  out.values()[0] = a.v().sum();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g().array() += on->grad[0];
  });
  return out;
}

template <typename T>
Tensor<T> rowsum(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.rows(), 1);
  out.v().col(0) = a.v().rowwise().sum();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g().array().colwise() += on->g().col(0).array();
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::make(a.cols(), a.rows());
  out.v() = a.v().transpose();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g() += on->g().transpose();
  });
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor<T> out = Tensor<T>::make(rows, cols);
  int off = 0;
  for (const auto& p : parts) {
    out.v().middleCols(off, p.cols()) = p.v();
    off += p.cols();
  }
  bool need = false;
  if (g_grad_enabled)
    for (const auto& p : parts)
      if (p.requires_grad()) need = true;
  if (need) {
    out.node()->requires_grad = true;
    for (const auto& p : parts) out.node()->parents.push_back(p.node());
    Node<T>* on = out.node().get();
    out.node()->backprop = [on] {
      int off2 = 0;
      for (auto& pn : on->parents) {
        if (pn->requires_grad) {
          pn->ensure_grad();
          pn->g() += on->g().middleCols(off2, pn->cols);
        }
        off2 += pn->cols;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_cols(std::vector<Tensor<T>>{a, b});
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int first, int width) {
  if (first < 0 || width <= 0 || first + width > a.cols())
    throw std::invalid_argument("slice_cols: out of range");
  Tensor<T> out = Tensor<T>::make(a.rows(), width);
  out.v() = a.v().middleCols(first, width);
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, first, width] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->g().middleCols(first, width) += on->g();
  });
  return out;
}

// out[r] = a[r - delta] with zero fill (delta=+1 shifts rows down)
template <typename T>
Tensor<T> shift_rows(const Tensor<T>& a, int delta) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols());
  int n = a.rows();
  for (int r = 0; r < n; ++r) {
    int src = r - delta;
    if (src >= 0 && src < n) out.v().row(r) = a.v().row(src);
  }
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, delta, n] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int r = 0; r < n; ++r) {
      int src = r - delta;
      if (src >= 0 && src < n) an->g().row(src) += on->g().row(r);
    }
  });
  return out;
}

// out[:, i*k + j] = a[:, i] for j in [0, k)
template <typename T>
Tensor<T> repeat_interleave_cols(const Tensor<T>& a, int k) {
  Tensor<T> out = Tensor<T>::make(a.rows(), a.cols() * k);
  for (int i = 0; i < a.cols(); ++i)
    for (int j = 0; j < k; ++j) out.v().col(i * k + j) = a.v().col(i);
  Node<T>*an = a.node().get(), *on = out.node().get();
  int c = a.cols();
  detail::attach(out, {&a}, [an, on, k, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < k; ++j) an->g().col(i) += on->g().col(i * k + j);
  });
  return out;
}

// out[:, t*c + i] = a[:, i] for t in [0, k)
template <typename T>
Tensor<T> tile_cols(const Tensor<T>& a, int k) {
  int c = a.cols();
  Tensor<T> out = Tensor<T>::make(a.rows(), c * k);
  for (int t = 0; t < k; ++t) out.v().middleCols(t * c, c) = a.v();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, k, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int t = 0; t < k; ++t) an->g() += on->g().middleCols(t * c, c);
  });
  return out;
}

// out[:, i] = sum_j a[:, i*k + j]
template <typename T>
Tensor<T> group_sum(const Tensor<T>& a, int k) {
  if (a.cols() % k != 0) throw std::invalid_argument("group_sum: cols not divisible");
  int c = a.cols() / k;
  Tensor<T> out = Tensor<T>::make(a.rows(), c);
  for (int i = 0; i < c; ++i) out.v().col(i) = a.v().middleCols(i * k, k).rowwise().sum();
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, k, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < c; ++i)
      an->g().middleCols(i * k, k).array().colwise() += on->g().col(i).array();
  });
  return out;
}

// out[:, j] = a[:, idx[j]]; indices may repeat
template <typename T>
Tensor<T> gather_cols(const Tensor<T>& a, std::vector<int> idx) {
  Tensor<T> out = Tensor<T>::make(a.rows(), static_cast<int>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.cols()) throw std::invalid_argument("gather_cols: index");
    out.v().col(static_cast<int>(j)) = a.v().col(idx[j]);
  }
  Node<T>*an = a.node().get(), *on = out.node().get();
  detail::attach(out, {&a}, [an, on, idx = std::move(idx)] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t j = 0; j < idx.size(); ++j)
      an->g().col(idx[j]) += on->g().col(static_cast<int>(j));
  });
  return out;
}

// ---- backward ----

// Reverse-mode accumulation from a scalar loss. Interior grads are reset on
// every call; leaf gradients accumulate across calls (call zero_grad on the
// leaves between independent uses). The graph stays alive while tensor
// handles do, so backward may run again over the same graph.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad())
    throw std::invalid_argument("backward: loss does not depend on any tracked tensor");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order)
    if (n->backprop) n->grad.assign(n->size(), T(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->grad.size() == n->size()) n->backprop();
  }
}

}  // namespace covbeam::ad
