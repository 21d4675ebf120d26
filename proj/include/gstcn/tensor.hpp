#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "gstcn/rng.hpp"

namespace gstcn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

[[noreturn]] inline void op_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

namespace autograd {
inline bool& enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
inline bool enabled() { return enabled_flag(); }

// Scope guard that disables graph recording (evaluation / finite differences).
struct NoGrad {
  bool prev;
  NoGrad() : prev(enabled_flag()) { enabled_flag() = false; }
  ~NoGrad() { enabled_flag() = prev; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};
}  // namespace autograd

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // sized lazily during backward
  bool requires_grad = false;
  const char* op = "";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() : node_(std::make_shared<Node>()) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape_size(shape) != values.size())
      op_error("tensor", "shape " + shape_str(shape) + " does not match value count " +
                             std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(shape_size(shape), T(0));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> v(shape_size(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  template <typename U>
  static Tensor from(const Shape& shape, const std::vector<U>& values, bool requires_grad = false) {
    std::vector<T> v(values.begin(), values.end());
    return Tensor(shape, std::move(v), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }

  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& mutable_values() { return node_->values; }
  T* data() { return node_->values.data(); }
  const T* data() const { return node_->values.data(); }

  T item() const {
    if (size() != 1) op_error("item", "tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const std::vector<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->values.size(), T(0)); }

  std::shared_ptr<Node> node() const { return node_; }

  bool defined() const { return !node_->shape.empty() || !node_->values.empty(); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
inline void check_finite(const char* op, const std::vector<T>& v) {
#ifndef NDEBUG
  for (const T& x : v)
    if (!std::isfinite(static_cast<double>(x)))
      op_error(op, "produced a non-finite value");
#else
  (void)op;
  (void)v;
#endif
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn) {
  check_finite(op, values);
  bool track = false;
  if (autograd::enabled())
    for (const auto& in : inputs)
      if (in.requires_grad()) track = true;
  Tensor<T> out(std::move(shape), std::move(values), track);
  auto n = out.node();
  n->op = op;
  if (track) {
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(backward_fn);
  }
  return out;
}

// Row-major strides; broadcast dims get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    std::size_t d = in.size() - 1 - k;
    std::size_t od = out.size() - 1 - k;
    strides[od] = (in[d] == 1) ? 0 : s;
    s *= in[d];
  }
  return strides;
}

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t k = 0; k < r; ++k) {
    std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1)
      op_error(op, "shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    out[r - 1 - k] = std::max(da, db);
  }
  return out;
}

// Odometer walk over `out_shape`, calling f(out_linear, off_a, off_b).
template <typename F>
void for_each_broadcast(const Shape& out_shape, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  std::size_t total = shape_size(out_shape);
  std::size_t r = out_shape.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t lin = 0; lin < total; ++lin) {
    f(lin, oa, ob);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out_shape[d]) break;
      oa -= sa[d] * out_shape[d];
      ob -= sb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// Accumulates `src` (laid out on out_shape) into grad of a tensor with shape
// `target`, summing over broadcast dims.
template <typename T>
void reduce_into(const std::vector<T>& src, const Shape& out_shape, TensorNode<T>& target) {
  target.ensure_grad();
  if (target.shape == out_shape) {
    for (std::size_t i = 0; i < src.size(); ++i) target.grad[i] += src[i];
    return;
  }
  auto st = broadcast_strides(target.shape, out_shape);
  std::vector<std::size_t> szero(out_shape.size(), 0);
  for_each_broadcast(out_shape, st, szero,
                     [&](std::size_t lin, std::size_t ot, std::size_t) { target.grad[ot] += src[lin]; });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops with broadcasting

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_op(const char* op, const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd, BwdFn bwd) {
  Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  std::size_t total = shape_size(out_shape);
  std::vector<T> out(total);
  const T* pa = a.data();
  const T* pb = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < total; ++i) out[i] = fwd(pa[i], pb[i]);
  } else if (b.size() == 1) {
    T v = pb[0];
    for (std::size_t i = 0; i < total; ++i) out[i] = fwd(pa[i], v);
  } else if (a.size() == 1) {
    T v = pa[0];
    for (std::size_t i = 0; i < total; ++i) out[i] = fwd(v, pb[i]);
  } else {
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t lin, std::size_t oa, std::size_t ob) {
      out[lin] = fwd(pa[oa], pb[ob]);
    });
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(op, out_shape, std::move(out), {a, b}, [an, bn, bwd](TensorNode<T>& o) {
    bwd(o, *an, *bn);
  });
}

template <typename T>
void binary_backward(const TensorNode<T>& out, TensorNode<T>& a, TensorNode<T>& b,
                     const std::function<T(T, T, T)>& da, const std::function<T(T, T, T)>& db) {
  // da/db map (grad_out, a_val, b_val) -> grad contribution
  std::size_t total = out.values.size();
  auto sa = broadcast_strides(a.shape, out.shape);
  auto sb = broadcast_strides(b.shape, out.shape);
  std::vector<T> ga, gb;
  bool need_a = a.requires_grad, need_b = b.requires_grad;
  if (need_a) ga.resize(total);
  if (need_b) gb.resize(total);
  for_each_broadcast(out.shape, sa, sb, [&](std::size_t lin, std::size_t oa, std::size_t ob) {
    T g = out.grad[lin];
    if (need_a) ga[lin] = da(g, a.values[oa], b.values[ob]);
    if (need_b) gb[lin] = db(g, a.values[oa], b.values[ob]);
  });
  if (need_a) reduce_into(ga, out.shape, a);
  if (need_b) reduce_into(gb, out.shape, b);
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an, detail::TensorNode<T>& bn) {
        if (an.requires_grad) detail::reduce_into(o.grad, o.shape, an);
        if (bn.requires_grad) detail::reduce_into(o.grad, o.shape, bn);
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an, detail::TensorNode<T>& bn) {
        if (an.requires_grad) detail::reduce_into(o.grad, o.shape, an);
        if (bn.requires_grad) {
          std::vector<T> neg(o.grad.size());
          for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -o.grad[i];
          detail::reduce_into(neg, o.shape, bn);
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an, detail::TensorNode<T>& bn) {
        detail::binary_backward<T>(
            o, an, bn, [](T g, T, T y) { return g * y; }, [](T g, T x, T) { return g * x; });
      });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an, detail::TensorNode<T>& bn) {
        detail::binary_backward<T>(
            o, an, bn, [](T g, T, T y) { return g / y; },
            [](T g, T x, T y) { return -g * x / (y * y); });
      });
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, T s) { return add(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, T s) { return sub(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, T s) { return mul(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, T s) { return div(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator-(T s, const Tensor<T>& a) { return sub(Tensor<T>::scalar(s), a); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& a) { return mul(Tensor<T>::scalar(s), a); }

// ---------------------------------------------------------------------------
// unary elementwise ops

namespace detail {
template <typename T, typename FwdFn>
Tensor<T> unary_op(const char* op, const Tensor<T>& a, FwdFn fwd,
                   std::function<void(TensorNode<T>&, TensorNode<T>&)> bwd) {
  std::vector<T> out(a.size());
  const T* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(p[i]);
  auto an = a.node();
  return make_result<T>(op, a.shape(), std::move(out), {a},
                        [an, bwd](TensorNode<T>& o) { bwd(o, *an); });
}
}  // namespace detail

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "neg", a, [](T x) { return -x; },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an.grad[i] -= o.grad[i];
      });
}
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          if (an.values[i] > T(0)) an.grad[i] += o.grad[i];
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "tanh", a, [](T x) { return std::tanh(x); },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          T y = o.values[i];
          an.grad[i] += o.grad[i] * (T(1) - y * y);
        }
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "sigmoid", a,
      [](T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          T y = o.values[i];
          an.grad[i] += o.grad[i] * y * (T(1) - y);
        }
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "exp", a, [](T x) { return std::exp(x); },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an.grad[i] += o.grad[i] * o.values[i];
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "log", a, [](T x) { return std::log(x); },
      [](detail::TensorNode<T>& o, detail::TensorNode<T>& an) {
        an.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an.grad[i] += o.grad[i] / an.values[i];
      });
}

// Inverted dropout: scales survivors by 1/keep at train time, identity in eval.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) op_error("dropout", "rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  T scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(a.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < rate ? T(0) : scale;
  std::vector<T> out(a.size());
  const T* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] * mask[i];
  auto an = a.node();
  return detail::make_result<T>("dropout", a.shape(), std::move(out), {a},
                                [an, mask = std::move(mask)](detail::TensorNode<T>& o) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                    an->grad[i] += o.grad[i] * mask[i];
                                });
}

// ---------------------------------------------------------------------------
// matmul: (m,k)x(k,n), (b,m,k)x(b,k,n), (b,m,k)x(k,n)

namespace detail {

template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  // c (m,n) += a (m,k) * b (k,n); c assumed zeroed
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void mm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  // c (m,k) += a (m,n) * b^T, b is (k,n)
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    T* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n;
      T s = T(0);
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

template <typename T>
void mm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  // c (k,n) += a^T * b, a is (m,k), b is (m,n)
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = ai[p];
      if (av == T(0)) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t ra = sa.size(), rb = sb.size();
  if ((ra != 2 && ra != 3) || (rb != 2 && rb != 3) || (ra == 2 && rb == 3))
    op_error("matmul", "unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
  std::size_t batch = ra == 3 ? sa[0] : 1;
  std::size_t m = sa[ra - 2], k = sa[ra - 1];
  std::size_t kb = sb[rb - 2], n = sb[rb - 1];
  bool b_batched = rb == 3;
  if (k != kb || (b_batched && sb[0] != batch))
    op_error("matmul", "incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));

  Shape out_shape = ra == 3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<T> out(batch * m * n, T(0));
  for (std::size_t bi = 0; bi < batch; ++bi)
    detail::mm_nn(a.data() + bi * m * k, b.data() + (b_batched ? bi * k * n : 0),
                  out.data() + bi * m * n, m, k, n);

  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(
      "matmul", out_shape, std::move(out), {a, b},
      [an, bn, batch, m, k, n, b_batched](detail::TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t bi = 0; bi < batch; ++bi)
            detail::mm_nt_acc(o.grad.data() + bi * m * n,
                              bn->values.data() + (b_batched ? bi * k * n : 0),
                              an->grad.data() + bi * m * k, m, n, k);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t bi = 0; bi < batch; ++bi)
            detail::mm_tn_acc(an->values.data() + bi * m * k, o.grad.data() + bi * m * n,
                              bn->grad.data() + (b_batched ? bi * k * n : 0), m, k, n);
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d, stride 1, zero padding; input (C,H,W) or (B,C,H,W), kernel (Co,Ci,kh,kw)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t padding) {
  const Shape& si = input.shape();
  const Shape& sk = kernel.shape();
  if ((si.size() != 3 && si.size() != 4) || sk.size() != 4)
    op_error("conv2d", "expected input (C,H,W) or (B,C,H,W) and kernel (Co,Ci,kh,kw), got " +
                           shape_str(si) + " and " + shape_str(sk));
  bool batched = si.size() == 4;
  std::size_t B = batched ? si[0] : 1;
  std::size_t Ci = si[batched ? 1 : 0], H = si[batched ? 2 : 1], W = si[batched ? 3 : 2];
  std::size_t Co = sk[0], kh = sk[2], kw = sk[3];
  if (sk[1] != Ci) op_error("conv2d", "kernel expects " + std::to_string(sk[1]) +
                                          " input channels, input has " + std::to_string(Ci));
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    op_error("conv2d", "kernel larger than padded input");
  std::size_t Ho = H + 2 * padding - kh + 1;
  std::size_t Wo = W + 2 * padding - kw + 1;

  Shape out_shape = batched ? Shape{B, Co, Ho, Wo} : Shape{Co, Ho, Wo};
  std::vector<T> out(B * Co * Ho * Wo, T(0));
  const T* in = input.data();
  const T* kn = kernel.data();
  long pad = static_cast<long>(padding);
  for (std::size_t b = 0; b < B; ++b) {
    const T* inb = in + b * Ci * H * W;
    T* outb = out.data() + b * Co * Ho * Wo;
    for (std::size_t co = 0; co < Co; ++co) {
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* kp = kn + (co * Ci + ci) * kh * kw;
        const T* ip = inb + ci * H * W;
        T* op = outb + co * Ho * Wo;
        for (std::size_t r = 0; r < kh; ++r) {
          for (std::size_t c = 0; c < kw; ++c) {
            T kv = kp[r * kw + c];
            if (kv == T(0)) continue;
            long dr = static_cast<long>(r) - pad;
            long dc = static_cast<long>(c) - pad;
            std::size_t oh0 = dr < 0 ? static_cast<std::size_t>(-dr) : 0;
            std::size_t oh1 = std::min(Ho, H - (dr > 0 ? static_cast<std::size_t>(dr) : 0));
            std::size_t ow0 = dc < 0 ? static_cast<std::size_t>(-dc) : 0;
            std::size_t ow1 = std::min(Wo, W - (dc > 0 ? static_cast<std::size_t>(dc) : 0));
            for (std::size_t oh = oh0; oh < oh1; ++oh) {
              const T* irow = ip + (oh + dr) * W + dc;
              T* orow = op + oh * Wo;
              for (std::size_t ow = ow0; ow < ow1; ++ow) orow[ow] += kv * irow[ow];
            }
          }
        }
      }
    }
  }

  auto in_node = input.node();
  auto k_node = kernel.node();
  return detail::make_result<T>(
      "conv2d", out_shape, std::move(out), {input, kernel},
      [in_node, k_node, B, Ci, H, W, Co, kh, kw, Ho, Wo, pad](detail::TensorNode<T>& o) {
        bool need_in = in_node->requires_grad, need_k = k_node->requires_grad;
        if (need_in) in_node->ensure_grad();
        if (need_k) k_node->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          const T* inb = in_node->values.data() + b * Ci * H * W;
          T* ginb = need_in ? in_node->grad.data() + b * Ci * H * W : nullptr;
          const T* gout = o.grad.data() + b * Co * Ho * Wo;
          for (std::size_t co = 0; co < Co; ++co) {
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* kp = k_node->values.data() + (co * Ci + ci) * kh * kw;
              T* gkp = need_k ? k_node->grad.data() + (co * Ci + ci) * kh * kw : nullptr;
              const T* ip = inb + ci * H * W;
              T* gip = need_in ? ginb + ci * H * W : nullptr;
              const T* gop = gout + co * Ho * Wo;
              for (std::size_t r = 0; r < kh; ++r) {
                for (std::size_t c = 0; c < kw; ++c) {
                  long dr = static_cast<long>(r) - pad;
                  long dc = static_cast<long>(c) - pad;
                  std::size_t oh0 = dr < 0 ? static_cast<std::size_t>(-dr) : 0;
                  std::size_t oh1 = std::min(Ho, H - (dr > 0 ? static_cast<std::size_t>(dr) : 0));
                  std::size_t ow0 = dc < 0 ? static_cast<std::size_t>(-dc) : 0;
                  std::size_t ow1 = std::min(Wo, W - (dc > 0 ? static_cast<std::size_t>(dc) : 0));
                  T kv = kp[r * kw + c];
                  T gk = T(0);
                  for (std::size_t oh = oh0; oh < oh1; ++oh) {
                    const T* irow = ip + (oh + dr) * W + dc;
                    T* girow = need_in ? gip + (oh + dr) * W + dc : nullptr;
                    const T* gorow = gop + oh * Wo;
                    for (std::size_t ow = ow0; ow < ow1; ++ow) {
                      T g = gorow[ow];
                      if (need_k) gk += g * irow[ow];
                      if (need_in) girow[ow] += g * kv;
                    }
                  }
                  if (need_k) gkp[r * kw + c] += gk;
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// shape ops

namespace detail {
template <typename T>
void permute_raw(const std::vector<T>& in, const Shape& in_shape,
                 const std::vector<std::size_t>& perm, std::vector<T>& out, Shape& out_shape) {
  std::size_t r = in_shape.size();
  out_shape.resize(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = in_shape[perm[d]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t d = r - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * in_shape[d + 1];
  std::vector<std::size_t> step(r);
  for (std::size_t d = 0; d < r; ++d) step[d] = in_strides[perm[d]];
  out.resize(in.size());
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t lin = 0; lin < in.size(); ++lin) {
    out[lin] = in[off];
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += step[d];
      if (idx[d] < out_shape[d]) break;
      off -= step[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}
}  // namespace detail

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  if (perm.size() != a.rank()) op_error("transpose", "perm rank mismatch for " + shape_str(a.shape()));
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) op_error("transpose", "invalid permutation");
    seen[p] = true;
  }
  std::vector<T> out;
  Shape out_shape;
  detail::permute_raw(a.values(), a.shape(), perm, out, out_shape);
  auto an = a.node();
  return detail::make_result<T>("transpose", out_shape, std::move(out), {a},
                                [an, perm](detail::TensorNode<T>& o) {
                                  std::vector<std::size_t> inv(perm.size());
                                  for (std::size_t d = 0; d < perm.size(); ++d) inv[perm[d]] = d;
                                  std::vector<T> g;
                                  Shape gs;
                                  detail::permute_raw(o.grad, o.shape, inv, g, gs);
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
                                });
}

// standard 2-D transpose
template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) op_error("transpose", "default form needs rank 2, got " + shape_str(a.shape()));
  return transpose(a, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  if (shape_size(new_shape) != a.size())
    op_error("reshape", shape_str(a.shape()) + " -> " + shape_str(new_shape) + " changes element count");
  auto an = a.node();
  std::vector<T> out = a.values();
  return detail::make_result<T>("reshape", std::move(new_shape), std::move(out), {a},
                                [an](detail::TensorNode<T>& o) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                                });
}

namespace detail {
inline void axis_blocks(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
}
}  // namespace detail

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank()) op_error("slice", "axis out of range for " + shape_str(a.shape()));
  if (start + len > a.dim(axis)) op_error("slice", "range exceeds dim " + std::to_string(a.dim(axis)));
  std::size_t outer, inner;
  detail::axis_blocks(a.shape(), axis, outer, inner);
  std::size_t d = a.dim(axis);
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const T* p = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(p + (o * d + start) * inner, p + (o * d + start + len) * inner,
              out.begin() + o * len * inner);
  auto an = a.node();
  return detail::make_result<T>("slice", out_shape, std::move(out), {a},
                                [an, axis, start, len, outer, inner, d](detail::TensorNode<T>& o) {
                                  an->ensure_grad();
                                  for (std::size_t ob = 0; ob < outer; ++ob) {
                                    const T* g = o.grad.data() + ob * len * inner;
                                    T* t = an->grad.data() + (ob * d + start) * inner;
                                    for (std::size_t i = 0; i < len * inner; ++i) t[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) op_error("concat", "no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) op_error("concat", "axis out of range");
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size()) op_error("concat", "rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (d != axis && p.shape()[d] != s0[d])
        op_error("concat", "shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    total_axis += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  std::size_t outer, inner;
  detail::axis_blocks(out_shape, axis, outer, inner);
  std::vector<T> out(shape_size(out_shape));
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::size_t len = p.dim(axis);
    const T* src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(src + o * len * inner, src + (o + 1) * len * inner,
                out.begin() + (o * total_axis + at) * inner);
    at += len;
  }
  std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    lens.push_back(p.dim(axis));
  }
  return detail::make_result<T>(
      "concat", out_shape, std::move(out), parts,
      [nodes, lens, axis, outer, inner, total_axis](detail::TensorNode<T>& o) {
        std::size_t at = 0;
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
          auto& n = *nodes[pi];
          std::size_t len = lens[pi];
          if (n.requires_grad) {
            n.ensure_grad();
            for (std::size_t ob = 0; ob < outer; ++ob) {
              const T* g = o.grad.data() + (ob * total_axis + at) * inner;
              T* t = n.grad.data() + ob * len * inner;
              for (std::size_t i = 0; i < len * inner; ++i) t[i] += g[i];
            }
          }
          at += len;
        }
      });
}

// stack along a new leading axis
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  std::vector<Tensor<T>> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduce(a.rank(), false);
  for (std::size_t ax : axes) {
    if (ax >= a.rank()) op_error("sum", "axis out of range for " + shape_str(a.shape()));
    reduce[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (!reduce[d]) out_shape.push_back(a.dim(d));
  if (out_shape.empty()) out_shape = {1};

  // strides into the output for each input dim (0 where reduced)
  std::vector<std::size_t> map_strides(a.rank(), 0);
  {
    std::size_t s = 1;
    for (std::size_t d = a.rank(); d-- > 0;) {
      if (!reduce[d]) {
        map_strides[d] = s;
        s *= a.dim(d);
      }
    }
  }
  std::vector<T> out(shape_size(out_shape), T(0));
  const Shape& in_shape = a.shape();
  std::vector<std::size_t> idx(a.rank(), 0);
  std::size_t off = 0;
  const T* p = a.data();
  for (std::size_t lin = 0; lin < a.size(); ++lin) {
    out[off] += p[lin];
    for (std::size_t d = a.rank(); d-- > 0;) {
      ++idx[d];
      off += map_strides[d];
      if (idx[d] < in_shape[d]) break;
      off -= map_strides[d] * in_shape[d];
      idx[d] = 0;
    }
  }
  auto an = a.node();
  Shape in_shape_c = in_shape;
  return detail::make_result<T>("sum", out_shape, std::move(out), {a},
                                [an, map_strides, in_shape_c](detail::TensorNode<T>& o) {
                                  an->ensure_grad();
                                  std::vector<std::size_t> idx(in_shape_c.size(), 0);
                                  std::size_t off = 0;
                                  for (std::size_t lin = 0; lin < an->grad.size(); ++lin) {
                                    an->grad[lin] += o.grad[off];
                                    for (std::size_t d = in_shape_c.size(); d-- > 0;) {
                                      ++idx[d];
                                      off += map_strides[d];
                                      if (idx[d] < in_shape_c[d]) break;
                                      off -= map_strides[d] * in_shape_c[d];
                                      idx[d] = 0;
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(a, axes);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  std::size_t count = 1;
  for (std::size_t ax : axes) count *= a.dim(ax);
  return sum(a, axes) * T(1.0 / static_cast<double>(count));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return sum(a) * T(1.0 / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) op_error("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  using Node = detail::TensorNode<T>;
  // iterative post-order DFS over parents
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  Node* root = loss.node().get();
  if (!root->requires_grad) return;  // nothing depends on parameters
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  // Interior grads are scratch space per backward pass; only leaves accumulate.
  for (Node* n : order)
    if (n->backward_fn) n->grad.assign(n->values.size(), T(0));
  root->ensure_grad();
  root->grad[0] += T(1);
  for (std::size_t i = order.size(); i-- > 0;) {
    Node* n = order[i];
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace gstcn
