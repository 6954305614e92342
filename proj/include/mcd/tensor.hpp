#pragma once
// Dense row-major tensors (N,C,H,W for feature maps) with reverse-mode
// automatic differentiation on a dynamic tape that is rebuilt each forward.
// Single-threaded execution is the correctness contract; results are
// bit-identical across runs for identical inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcd/rng.hpp"

namespace mcd {

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= (long long)d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream o;
  o << '(';
  for (size_t i = 0; i < s.size(); ++i) o << (i ? "," : "") << s[i];
  o << ')';
  return o.str();
}

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& m) : std::runtime_error(m) {}
};

inline void tcheck(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

// Value-semantic handle over shared storage; copies alias the same data,
// which is what ties parameters, the tape and the optimizer together.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    impl_->values.assign((size_t)shape_numel(impl_->shape), fill);
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    tcheck(shape_numel(shape) == (long long)values.size(),
           "tensor: " + shape_str(shape) + " does not hold " + std::to_string(values.size()) + " values");
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::move(values);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return (int)impl_->shape.size(); }
  int dim(int i) const { return impl_->shape[(size_t)i]; }
  long long size() const { return (long long)impl_->values.size(); }

  std::vector<T>& data() const { return impl_->values; }
  T* ptr() const { return impl_->values.data(); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  // Gradient buffer, same shape as the tensor, zeroed on first touch.
  std::vector<T>& grad() const {
    if (impl_->grad.size() != impl_->values.size()) impl_->grad.assign(impl_->values.size(), T(0));
    return impl_->grad;
  }
  T* grad_ptr() const { return grad().data(); }
  bool grad_materialized() const { return impl_ && impl_->grad.size() == impl_->values.size(); }
  void zero_grad() const {
    if (impl_) impl_->grad.assign(impl_->values.size(), T(0));
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->values = impl_->values;
    return t;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of executed operations. Backward replays adjoint steps in
// exact reverse execution order; a tape can be consumed only once.
template <typename T>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  size_t recorded() const { return steps_.size(); }

  void backward(const Tensor<T>& loss) {
    tcheck(!consumed_, "tape: backward called twice without a new forward");
    tcheck(loss.size() == 1, "tape: backward requires a scalar loss, got " + shape_str(loss.shape()));
    consumed_ = true;
    loss.grad()[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
  Tape* prev_ = nullptr;
  bool consumed_ = false;
  static inline thread_local Tape* active_ = nullptr;
};

template <typename T, typename F>
inline void tape_record(bool needed, F&& fn) {
  if (needed && Tape<T>::active()) Tape<T>::active()->record(std::forward<F>(fn));
}

// ---------------------------------------------------------------------------
// factories

template <typename T>
Tensor<T> full_like(const Tensor<T>& x, T v) {
  return Tensor<T>(x.shape(), v);
}

template <typename T>
Tensor<T> randn(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor<T> t(std::move(shape));
  T* p = t.ptr();
  for (long long i = 0; i < t.size(); ++i) p[i] = (T)(rng.normal() * stddev);
  return t;
}

template <typename T>
Tensor<T> rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  T* p = t.ptr();
  for (long long i = 0; i < t.size(); ++i) p[i] = (T)rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------
// elementwise

namespace detail {

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  tcheck(a.shape() == b.shape(),
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  bool need = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [a, b, out, n]() {
    const T* g = out.grad_ptr();
    if (a.requires_grad()) {
      T* ga = a.grad_ptr();
      for (long long i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_ptr();
      for (long long i = 0; i < n; ++i) gb[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  bool need = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [a, b, out, n]() {
    const T* g = out.grad_ptr();
    if (a.requires_grad()) {
      T* ga = a.grad_ptr();
      for (long long i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_ptr();
      for (long long i = 0; i < n; ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  bool need = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [a, b, out, n]() {
    const T* g = out.grad_ptr();
    if (a.requires_grad()) {
      T* ga = a.grad_ptr();
      const T* pb2 = b.ptr();
      for (long long i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_ptr();
      const T* pa2 = a.ptr();
      for (long long i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] / pb[i];
  bool need = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [a, b, out, n]() {
    const T* g = out.grad_ptr();
    const T* pa2 = a.ptr();
    const T* pb2 = b.ptr();
    if (a.requires_grad()) {
      T* ga = a.grad_ptr();
      for (long long i = 0; i < n; ++i) ga[i] += g[i] / pb2[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_ptr();
      for (long long i = 0; i < n; ++i) gb[i] -= g[i] * pa2[i] / (pb2[i] * pb2[i]);
    }
  });
  return out;
}

// |x|; subgradient at 0 defined as 0
template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = std::abs(px[i]);
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i)
      gx[i] += px2[i] > T(0) ? g[i] : (px2[i] < T(0) ? -g[i] : T(0));
  });
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = -px[i];
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] -= g[i];
  });
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = px[i] * c;
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n, c]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i] * c;
  });
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = px[i] + c;
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = std::exp(px[i]);
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    const T* po2 = out.ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i] * po2[i];
  });
  return out;
}

// x^e for real e >= 0; d/dx defined as 0 when e == 0
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T e) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = std::pow(px[i], e);
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n, e]() {
    if (e == T(0)) return;
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i] * e * std::pow(px2[i], e - T(1));
  });
  return out;
}

// multiply by a trainable scalar held in a 1-element tensor
template <typename T>
Tensor<T> mul_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  tcheck(s.size() == 1, "mul_scalar_tensor: scale must hold exactly one element");
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  const T sv = s.ptr()[0];
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = px[i] * sv;
  bool need = x.requires_grad() || s.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, s, out, n]() {
    const T* g = out.grad_ptr();
    if (x.requires_grad()) {
      const T sv2 = s.ptr()[0];
      T* gx = x.grad_ptr();
      for (long long i = 0; i < n; ++i) gx[i] += g[i] * sv2;
    }
    if (s.requires_grad()) {
      const T* px2 = x.ptr();
      T acc = 0;
      for (long long i = 0; i < n; ++i) acc += g[i] * px2[i];
      s.grad_ptr()[0] += acc;
    }
  });
  return out;
}

// broadcast a per-channel vector v[C] over (N,C,H,W)
template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v) {
  tcheck(x.ndim() == 4, "add_channel: expected 4-d input, got " + shape_str(x.shape()));
  tcheck(v.ndim() == 1 && v.dim(0) == x.dim(1),
         "add_channel: vector " + shape_str(v.shape()) + " does not match channels of " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const long long hw = (long long)x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  const T* pv = v.ptr();
  T* po = out.ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const long long base = ((long long)n * C + c) * hw;
      const T vc = pv[c];
      for (long long i = 0; i < hw; ++i) po[base + i] = px[base + i] + vc;
    }
  bool need = x.requires_grad() || v.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, v, out, N, C, hw]() {
    const T* g = out.grad_ptr();
    if (x.requires_grad()) {
      T* gx = x.grad_ptr();
      const long long n = out.size();
      for (long long i = 0; i < n; ++i) gx[i] += g[i];
    }
    if (v.requires_grad()) {
      T* gv = v.grad_ptr();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const long long base = ((long long)n * C + c) * hw;
          T s = 0;
          for (long long i = 0; i < hw; ++i) s += g[base + i];
          gv[c] += s;
        }
    }
  });
  return out;
}

// multiply (N,C,H,W) by a per-position map (N,1,H,W), broadcast over channels
template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& a) {
  tcheck(x.ndim() == 4 && a.ndim() == 4, "scale_spatial: expected 4-d tensors");
  tcheck(a.dim(1) == 1 && a.dim(0) == x.dim(0) && a.dim(2) == x.dim(2) && a.dim(3) == x.dim(3),
         "scale_spatial: map " + shape_str(a.shape()) + " does not match " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const long long hw = (long long)x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  const T* pa = a.ptr();
  T* po = out.ptr();
  for (int n = 0; n < N; ++n) {
    const T* am = pa + (long long)n * hw;
    for (int c = 0; c < C; ++c) {
      const long long base = ((long long)n * C + c) * hw;
      for (long long i = 0; i < hw; ++i) po[base + i] = px[base + i] * am[i];
    }
  }
  bool need = x.requires_grad() || a.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, a, out, N, C, hw]() {
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    const T* pa2 = a.ptr();
    if (x.requires_grad()) {
      T* gx = x.grad_ptr();
      for (int n = 0; n < N; ++n) {
        const T* am = pa2 + (long long)n * hw;
        for (int c = 0; c < C; ++c) {
          const long long base = ((long long)n * C + c) * hw;
          for (long long i = 0; i < hw; ++i) gx[base + i] += g[base + i] * am[i];
        }
      }
    }
    if (a.requires_grad()) {
      T* ga = a.grad_ptr();
      for (int n = 0; n < N; ++n) {
        T* gm = ga + (long long)n * hw;
        for (int c = 0; c < C; ++c) {
          const long long base = ((long long)n * C + c) * hw;
          for (long long i = 0; i < hw; ++i) gm[i] += g[base + i] * px2[base + i];
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  tcheck(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  tcheck(axis >= 0 && axis < (int)s0.size(), "concat: axis out of range");
  Shape out_shape = s0;
  long long axis_total = 0;
  for (const auto& p : parts) {
    tcheck(p.ndim() == (int)s0.size(), "concat: rank mismatch");
    for (int d = 0; d < p.ndim(); ++d)
      if (d != axis)
        tcheck(p.dim(d) == s0[(size_t)d], "concat: off-axis mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    axis_total += p.dim(axis);
  }
  out_shape[(size_t)axis] = (int)axis_total;
  Tensor<T> out(out_shape);

  long long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[(size_t)d];
  for (int d = axis + 1; d < (int)s0.size(); ++d) inner *= s0[(size_t)d];

  T* po = out.ptr();
  const long long out_stride = axis_total * inner;
  long long offset = 0;
  for (const auto& p : parts) {
    const long long len = (long long)p.dim(axis) * inner;
    const T* pp = p.ptr();
    for (long long o = 0; o < outer; ++o)
      std::copy(pp + o * len, pp + (o + 1) * len, po + o * out_stride + offset);
    offset += len;
  }

  bool need = false;
  for (const auto& p : parts) need = need || p.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [parts, out, outer, out_stride]() {
    const T* g = out.grad_ptr();
    long long offset = 0;
    for (const auto& p : parts) {
      const long long plen = p.size() / outer;
      if (p.requires_grad()) {
        T* gp = p.grad_ptr();
        for (long long o = 0; o < outer; ++o) {
          const T* src = g + o * out_stride + offset;
          T* dst = gp + o * plen;
          for (long long i = 0; i < plen; ++i) dst[i] += src[i];
        }
      }
      offset += plen;
    }
  });
  return out;
}

// contiguous slice along one axis
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  tcheck(axis >= 0 && axis < x.ndim(), "slice: axis out of range");
  tcheck(start >= 0 && len >= 1 && start + len <= x.dim(axis), "slice: range out of bounds");
  Shape out_shape = x.shape();
  out_shape[(size_t)axis] = len;
  Tensor<T> out(out_shape);

  long long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
  const long long in_stride = (long long)x.dim(axis) * inner;
  const long long out_stride = (long long)len * inner;

  const T* px = x.ptr();
  T* po = out.ptr();
  for (long long o = 0; o < outer; ++o)
    std::copy(px + o * in_stride + start * inner, px + o * in_stride + (start + len) * inner, po + o * out_stride);

  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, outer, inner, in_stride, out_stride, start]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (long long o = 0; o < outer; ++o) {
      const T* src = g + o * out_stride;
      T* dst = gx + o * in_stride + start * inner;
      for (long long i = 0; i < out_stride; ++i) dst[i] += src[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  tcheck(shape_numel(new_shape) == x.size(),
         "reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape) + " changes element count");
  Tensor<T> out = Tensor<T>::from(std::move(new_shape), x.data());
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    const long long n = x.size();
    for (long long i = 0; i < n; ++i) gx[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  return reshape(x, Shape{(int)x.size()});
}

// out[i] = x[idx[i]] over flattened x
template <typename T>
Tensor<T> gather(const Tensor<T>& x, const std::vector<long long>& idx) {
  Tensor<T> out(Shape{(int)idx.size()});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (size_t i = 0; i < idx.size(); ++i) {
    tcheck(idx[i] >= 0 && idx[i] < x.size(), "gather: index out of range");
    po[i] = px[idx[i]];
  }
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, idx]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions: axes removed from the shape; reducing everything yields {1}

namespace detail {

template <typename T>
Tensor<T> reduce_impl(const Tensor<T>& x, std::vector<int> axes, bool mean) {
  std::sort(axes.begin(), axes.end());
  for (size_t i = 0; i < axes.size(); ++i) {
    tcheck(axes[i] >= 0 && axes[i] < x.ndim(), "reduce: axis out of range");
    tcheck(i == 0 || axes[i] != axes[i - 1], "reduce: duplicate axis");
  }
  std::vector<bool> reduced((size_t)x.ndim(), false);
  for (int a : axes) reduced[(size_t)a] = true;

  Shape out_shape;
  for (int d = 0; d < x.ndim(); ++d)
    if (!reduced[(size_t)d]) out_shape.push_back(x.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);

  long long count = 1;
  for (int a : axes) count *= x.dim(a);
  if (axes.empty()) count = 1;

  Tensor<T> out(out_shape, T(0));

  // strides of x, and the output index for each input element
  const int nd = x.ndim();
  std::vector<long long> xstride((size_t)nd, 1);
  for (int d = nd - 2; d >= 0; --d) xstride[(size_t)d] = xstride[(size_t)d + 1] * x.dim(d + 1);
  std::vector<long long> ostride((size_t)nd, 0);
  {
    long long s = 1;
    for (int d = nd - 1; d >= 0; --d) {
      if (!reduced[(size_t)d]) {
        ostride[(size_t)d] = s;
        s *= x.dim(d);
      }
    }
  }

  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = x.size();
  std::vector<int> ix((size_t)nd, 0);
  for (long long i = 0; i < n; ++i) {
    long long oi = 0;
    long long rem = i;
    for (int d = 0; d < nd; ++d) {
      long long c = rem / xstride[(size_t)d];
      rem -= c * xstride[(size_t)d];
      oi += c * ostride[(size_t)d];
    }
    po[oi] += px[i];
  }
  if (mean && count > 1) {
    const T inv = T(1) / (T)count;
    for (long long i = 0; i < out.size(); ++i) po[i] *= inv;
  }

  bool need = x.requires_grad();
  out.set_requires_grad(need);
  const T scale = mean ? T(1) / (T)count : T(1);
  tape_record<T>(need, [x, out, xstride, ostride, nd, scale]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    const long long n = x.size();
    for (long long i = 0; i < n; ++i) {
      long long oi = 0;
      long long rem = i;
      for (int d = 0; d < nd; ++d) {
        long long c = rem / xstride[(size_t)d];
        rem -= c * xstride[(size_t)d];
        oi += c * ostride[(size_t)d];
      }
      gx[i] += g[oi] * scale;
    }
  });
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<int> axes) {
  return detail::reduce_impl(x, std::move(axes), false);
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::vector<int> axes) {
  return detail::reduce_impl(x, std::move(axes), true);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  std::vector<int> axes(x.shape().size());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = (int)i;
  return reduce_sum(x, axes);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  std::vector<int> axes(x.shape().size());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = (int)i;
  return reduce_mean(x, axes);
}

}  // namespace mcd
