#pragma once
// Neural-net operations over mcd::Tensor: convolutions (im2col + small GEMM),
// batch norm, activations, bilinear upsampling, linear, dropout.

#include <cmath>
#include <vector>

#include "mcd/tensor.hpp"

namespace mcd {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// GEMM kernels (row-major). Inner loops run over contiguous memory.

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_acc(long long M, long long K, long long N, const T* A, const T* B, T* C) {
  for (long long m = 0; m < M; ++m) {
    const T* a = A + m * K;
    T* c = C + m * N;
    for (long long k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (long long n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,K] += A[M,N] * B[K,N]^T
template <typename T>
void gemm_abt_acc(long long M, long long N, long long K, const T* A, const T* B, T* C) {
  for (long long m = 0; m < M; ++m) {
    const T* a = A + m * N;
    for (long long k = 0; k < K; ++k) {
      const T* b = B + k * N;
      T s = 0;
      for (long long n = 0; n < N; ++n) s += a[n] * b[n];
      C[m * K + k] += s;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_atb_acc(long long M, long long K, long long N, const T* A, const T* B, T* C) {
  for (long long m = 0; m < M; ++m) {
    const T* a = A + m * K;
    const T* b = B + m * N;
    for (long long k = 0; k < K; ++k) {
      const T av = a[k];
      T* c = C + k * N;
      for (long long n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, T* cols) {
  const long long M = (long long)Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = cols + (((long long)c * kh + ki) * kw + kj) * M;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* drow = dst + (long long)oy * Wo;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) drow[ox] = T(0);
            continue;
          }
          const T* row = x + ((long long)c * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            drow[ox] = (ix >= 0 && ix < W) ? row[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_acc(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, T* x) {
  const long long M = (long long)Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = cols + (((long long)c * kh + ki) * kw + kj) * M;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          T* row = x + ((long long)c * H + iy) * W;
          const T* srow = src + (long long)oy * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W) row[ix] += srow[ox];
          }
        }
      }
}

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x (N,Cin,H,W), w (Cout,Cin,kh,kw), optional bias b (Cout)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  tcheck(x.ndim() == 4, "conv2d: input must be 4-d, got " + shape_str(x.shape()));
  tcheck(w.ndim() == 4, "conv2d: weight must be 4-d, got " + shape_str(w.shape()));
  tcheck(w.dim(1) == x.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                   " do not match weight channels " + std::to_string(w.dim(1)));
  tcheck(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  tcheck(kh <= H + 2 * pad && kw <= W + 2 * pad, "conv2d: kernel does not fit padded input");
  const int Ho = detail::conv_out_extent(H, kh, stride, pad);
  const int Wo = detail::conv_out_extent(W, kw, stride, pad);
  const bool has_bias = b.defined() && b.size() > 0;
  if (has_bias) tcheck(b.ndim() == 1 && b.dim(0) == Cout, "conv2d: bias must be (Cout)");

  const long long K = (long long)Cin * kh * kw;
  const long long M = (long long)Ho * Wo;
  Tensor<T> out(Shape{N, Cout, Ho, Wo});
  std::vector<T> cols((size_t)(K * M));
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.ptr() + (long long)n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
    T* on = out.ptr() + (long long)n * Cout * M;
    if (has_bias) {
      const T* pb = b.ptr();
      for (int co = 0; co < Cout; ++co)
        for (long long i = 0; i < M; ++i) on[(long long)co * M + i] = pb[co];
    }
    detail::gemm_acc(Cout, K, M, w.ptr(), cols.data(), on);
  }

  bool need = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
  out.set_requires_grad(need);
  tape_record<T>(need, [x, w, b, out, stride, pad, has_bias, N, Cin, H, W, Cout, kh, kw, Ho, Wo, K, M]() {
    const T* g = out.grad_ptr();
    std::vector<T> cols((size_t)(K * M));
    std::vector<T> dcols;
    if (x.requires_grad()) dcols.assign((size_t)(K * M), T(0));
    for (int n = 0; n < N; ++n) {
      const T* gn = g + (long long)n * Cout * M;
      if (w.requires_grad() || x.requires_grad()) {
        if (w.requires_grad()) {
          detail::im2col(x.ptr() + (long long)n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
          detail::gemm_abt_acc(Cout, M, K, gn, cols.data(), w.grad_ptr());
        }
        if (x.requires_grad()) {
          std::fill(dcols.begin(), dcols.end(), T(0));
          detail::gemm_atb_acc(Cout, K, M, w.ptr(), gn, dcols.data());
          detail::col2im_acc(dcols.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                             x.grad_ptr() + (long long)n * Cin * H * W);
        }
      }
      if (has_bias && b.requires_grad()) {
        T* gb = b.grad_ptr();
        for (int co = 0; co < Cout; ++co) {
          T s = 0;
          const T* gr = gn + (long long)co * M;
          for (long long i = 0; i < M; ++i) s += gr[i];
          gb[co] += s;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  return conv2d(x, w, Tensor<T>(), stride, pad);
}

// depthwise: x (N,C,H,W), w (C,1,kh,kw), per-channel grouping, no bias
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  tcheck(x.ndim() == 4 && w.ndim() == 4, "depthwise_conv2d: expected 4-d tensors");
  tcheck(w.dim(0) == x.dim(1) && w.dim(1) == 1,
         "depthwise_conv2d: weight " + shape_str(w.shape()) + " does not match channels of " + shape_str(x.shape()));
  tcheck(stride >= 1 && pad >= 0, "depthwise_conv2d: stride must be >= 1 and pad >= 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int kh = w.dim(2), kw = w.dim(3);
  tcheck(kh <= H + 2 * pad && kw <= W + 2 * pad, "depthwise_conv2d: kernel does not fit padded input");
  const int Ho = detail::conv_out_extent(H, kh, stride, pad);
  const int Wo = detail::conv_out_extent(W, kw, stride, pad);

  Tensor<T> out(Shape{N, C, Ho, Wo});
  const T* px = x.ptr();
  const T* pw = w.ptr();
  T* po = out.ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = px + ((long long)n * C + c) * H * W;
      const T* wc = pw + (long long)c * kh * kw;
      T* oc = po + ((long long)n * C + c) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          T s = 0;
          for (int ki = 0; ki < kh; ++ki) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= H) continue;
            for (int kj = 0; kj < kw; ++kj) {
              const int ix = ox * stride - pad + kj;
              if (ix >= 0 && ix < W) s += wc[ki * kw + kj] * xc[(long long)iy * W + ix];
            }
          }
          oc[(long long)oy * Wo + ox] = s;
        }
    }

  bool need = x.requires_grad() || w.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, w, out, stride, pad, N, C, H, W, kh, kw, Ho, Wo]() {
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    const T* pw2 = w.ptr();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* gc = g + ((long long)n * C + c) * Ho * Wo;
        const T* xc = px2 + ((long long)n * C + c) * H * W;
        const T* wc = pw2 + (long long)c * kh * kw;
        T* gxc = x.requires_grad() ? x.grad_ptr() + ((long long)n * C + c) * H * W : nullptr;
        T* gwc = w.requires_grad() ? w.grad_ptr() + (long long)c * kh * kw : nullptr;
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            const T go = gc[(long long)oy * Wo + ox];
            if (go == T(0)) continue;
            for (int ki = 0; ki < kh; ++ki) {
              const int iy = oy * stride - pad + ki;
              if (iy < 0 || iy >= H) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int ix = ox * stride - pad + kj;
                if (ix < 0 || ix >= W) continue;
                if (gxc) gxc[(long long)iy * W + ix] += go * wc[ki * kw + kj];
                if (gwc) gwc[ki * kw + kj] += go * xc[(long long)iy * W + ix];
              }
            }
          }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// batch norm over (N,H,W) per channel

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  Tensor<T> batches_seen;  // scalar counter; 0 means no statistics yet

  void init(int channels) {
    running_mean = Tensor<T>(Shape{channels}, T(0));
    running_var = Tensor<T>(Shape{channels}, T(1));
    batches_seen = Tensor<T>(Shape{1}, T(0));
  }
  bool initialized() const { return batches_seen.defined() && batches_seen.data()[0] > T(0); }
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                      Mode mode, T momentum = T(0.1), T eps = T(1e-5)) {
  tcheck(x.ndim() == 4, "batchnorm2d: input must be 4-d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  tcheck(gamma.ndim() == 1 && gamma.dim(0) == C && beta.ndim() == 1 && beta.dim(0) == C,
         "batchnorm2d: gamma/beta must be (C)");
  tcheck(state.running_mean.defined() && state.running_mean.dim(0) == C, "batchnorm2d: state not initialized for C");

  const long long S = (long long)N * H * W;  // normalization set per channel
  const long long hw = (long long)H * W;
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();

  if (mode == Mode::eval) {
    tcheck(state.initialized(), "batchnorm2d: eval mode before any train-mode statistics");
    const T* rm = state.running_mean.ptr();
    const T* rv = state.running_var.ptr();
    const T* pg = gamma.ptr();
    const T* pb = beta.ptr();
    std::vector<T> scale((size_t)C), shift((size_t)C);
    for (int c = 0; c < C; ++c) {
      scale[(size_t)c] = pg[c] / std::sqrt(rv[c] + eps);
      shift[(size_t)c] = pb[c] - rm[c] * scale[(size_t)c];
    }
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const long long base = ((long long)n * C + c) * hw;
        for (long long i = 0; i < hw; ++i) po[base + i] = px[base + i] * scale[(size_t)c] + shift[(size_t)c];
      }
    bool need = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    out.set_requires_grad(need);
    Tensor<T> rm_t = state.running_mean, rv_t = state.running_var;
    tape_record<T>(need, [x, gamma, beta, out, rm_t, rv_t, eps, N, C, hw]() {
      const T* g = out.grad_ptr();
      const T* px2 = x.ptr();
      const T* rm = rm_t.ptr();
      const T* rv = rv_t.ptr();
      const T* pg = gamma.ptr();
      for (int c = 0; c < C; ++c) {
        const T inv = T(1) / std::sqrt(rv[c] + eps);
        T dg = 0, db = 0;
        for (int n = 0; n < N; ++n) {
          const long long base = ((long long)n * C + c) * hw;
          for (long long i = 0; i < hw; ++i) {
            const T go = g[base + i];
            if (x.requires_grad()) x.grad_ptr()[base + i] += go * pg[c] * inv;
            dg += go * (px2[base + i] - rm[c]) * inv;
            db += go;
          }
        }
        if (gamma.requires_grad()) gamma.grad_ptr()[c] += dg;
        if (beta.requires_grad()) beta.grad_ptr()[c] += db;
      }
    });
    return out;
  }

  // train mode: batch statistics, biased variance for normalization
  std::vector<T> mu((size_t)C, T(0)), var((size_t)C, T(0));
  for (int c = 0; c < C; ++c) {
    T s = 0;
    for (int n = 0; n < N; ++n) {
      const long long base = ((long long)n * C + c) * hw;
      for (long long i = 0; i < hw; ++i) s += px[base + i];
    }
    mu[(size_t)c] = s / (T)S;
    T v = 0;
    for (int n = 0; n < N; ++n) {
      const long long base = ((long long)n * C + c) * hw;
      for (long long i = 0; i < hw; ++i) {
        const T d = px[base + i] - mu[(size_t)c];
        v += d * d;
      }
    }
    var[(size_t)c] = v / (T)S;
  }
  const T* pg = gamma.ptr();
  const T* pb = beta.ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const long long base = ((long long)n * C + c) * hw;
      const T inv = T(1) / std::sqrt(var[(size_t)c] + eps);
      for (long long i = 0; i < hw; ++i) po[base + i] = pg[c] * (px[base + i] - mu[(size_t)c]) * inv + pb[c];
    }

  // running statistics: unbiased variance when the set allows it
  {
    T* rm = state.running_mean.ptr();
    T* rv = state.running_var.ptr();
    for (int c = 0; c < C; ++c) {
      const T uvar = S > 1 ? var[(size_t)c] * (T)S / (T)(S - 1) : var[(size_t)c];
      rm[c] = (T(1) - momentum) * rm[c] + momentum * mu[(size_t)c];
      rv[c] = (T(1) - momentum) * rv[c] + momentum * uvar;
    }
    state.batches_seen.data()[0] += T(1);
  }

  bool need = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, gamma, beta, out, mu, var, eps, N, C, hw, S]() {
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    const T* pg = gamma.ptr();
    for (int c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(var[(size_t)c] + eps);
      // accumulate sums of dy and dy*xhat
      T sum_g = 0, sum_gx = 0;
      for (int n = 0; n < N; ++n) {
        const long long base = ((long long)n * C + c) * hw;
        for (long long i = 0; i < hw; ++i) {
          const T go = g[base + i];
          const T xh = (px2[base + i] - mu[(size_t)c]) * inv;
          sum_g += go;
          sum_gx += go * xh;
        }
      }
      if (gamma.requires_grad()) gamma.grad_ptr()[c] += sum_gx;
      if (beta.requires_grad()) beta.grad_ptr()[c] += sum_g;
      if (x.requires_grad()) {
        const T k = pg[c] * inv / (T)S;
        T* gx = x.grad_ptr();
        for (int n = 0; n < N; ++n) {
          const long long base = ((long long)n * C + c) * hw;
          for (long long i = 0; i < hw; ++i) {
            const T xh = (px2[base + i] - mu[(size_t)c]) * inv;
            gx[base + i] += k * ((T)S * g[base + i] - sum_g - xh * sum_gx);
          }
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// activations

// exact erf form
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  static const T inv_sqrt2 = (T)0.70710678118654752440;
  static const T inv_sqrt2pi = (T)0.39894228040143267794;
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = (T)0.5 * px[i] * (T(1) + std::erf(px[i] * inv_sqrt2));
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    const T* px2 = x.ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) {
      const T v = px2[i];
      const T cdf = (T)0.5 * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp((T)-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  const long long n = out.size();
  for (long long i = 0; i < n; ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, n]() {
    const T* g = out.grad_ptr();
    const T* po2 = out.ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i] * po2[i] * (T(1) - po2[i]);
  });
  return out;
}

namespace detail {

template <typename T>
void axis_spans(const Tensor<T>& x, int axis, long long& outer, long long& len, long long& inner) {
  tcheck(axis >= 0 && axis < x.ndim(), "softmax: axis out of range for " + shape_str(x.shape()));
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  len = x.dim(axis);
  for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  long long outer, len, inner;
  detail::axis_spans(x, axis, outer, len, inner);
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  for (long long o = 0; o < outer; ++o)
    for (long long i = 0; i < inner; ++i) {
      const long long base = o * len * inner + i;
      T mx = px[base];
      for (long long l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
      T s = 0;
      for (long long l = 0; l < len; ++l) {
        const T e = std::exp(px[base + l * inner] - mx);
        po[base + l * inner] = e;
        s += e;
      }
      const T invs = T(1) / s;
      for (long long l = 0; l < len; ++l) po[base + l * inner] *= invs;
    }
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, outer, len, inner]() {
    const T* g = out.grad_ptr();
    const T* p = out.ptr();
    T* gx = x.grad_ptr();
    for (long long o = 0; o < outer; ++o)
      for (long long i = 0; i < inner; ++i) {
        const long long base = o * len * inner + i;
        T dot = 0;
        for (long long l = 0; l < len; ++l) dot += g[base + l * inner] * p[base + l * inner];
        for (long long l = 0; l < len; ++l)
          gx[base + l * inner] += p[base + l * inner] * (g[base + l * inner] - dot);
      }
  });
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis) {
  long long outer, len, inner;
  detail::axis_spans(x, axis, outer, len, inner);
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  for (long long o = 0; o < outer; ++o)
    for (long long i = 0; i < inner; ++i) {
      const long long base = o * len * inner + i;
      T mx = px[base];
      for (long long l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
      T s = 0;
      for (long long l = 0; l < len; ++l) s += std::exp(px[base + l * inner] - mx);
      const T lse = mx + std::log(s);
      for (long long l = 0; l < len; ++l) po[base + l * inner] = px[base + l * inner] - lse;
    }
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, outer, len, inner]() {
    const T* g = out.grad_ptr();
    const T* lg = out.ptr();
    T* gx = x.grad_ptr();
    for (long long o = 0; o < outer; ++o)
      for (long long i = 0; i < inner; ++i) {
        const long long base = o * len * inner + i;
        T sum_g = 0;
        for (long long l = 0; l < len; ++l) sum_g += g[base + l * inner];
        for (long long l = 0; l < len; ++l)
          gx[base + l * inner] += g[base + l * inner] - std::exp(lg[base + l * inner]) * sum_g;
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// bilinear upsampling, half-pixel centers with edge clamping (normative):
// src = (dst + 0.5) / factor - 0.5, clamped to [0, extent-1]

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor) {
  tcheck(factor == 2 || factor == 4, "upsample_bilinear: factor must be 2 or 4");
  tcheck(x.ndim() == 4, "upsample_bilinear: input must be 4-d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = H * factor, Wo = W * factor;

  // per output coordinate: low index, high index, weight of high side
  std::vector<int> y0((size_t)Ho), y1((size_t)Ho), x0((size_t)Wo), x1((size_t)Wo);
  std::vector<T> wy((size_t)Ho), wx((size_t)Wo);
  auto fill = [factor](int out_extent, int in_extent, std::vector<int>& lo, std::vector<int>& hi, std::vector<T>& w) {
    for (int o = 0; o < out_extent; ++o) {
      double s = ((double)o + 0.5) / factor - 0.5;
      if (s < 0) s = 0;
      if (s > in_extent - 1) s = in_extent - 1;
      int l = (int)std::floor(s);
      lo[(size_t)o] = l;
      hi[(size_t)o] = std::min(l + 1, in_extent - 1);
      w[(size_t)o] = (T)(s - l);
    }
  };
  fill(Ho, H, y0, y1, wy);
  fill(Wo, W, x0, x1, wx);

  Tensor<T> out(Shape{N, C, Ho, Wo});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = px + ((long long)n * C + c) * H * W;
      T* oc = po + ((long long)n * C + c) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy) {
        const T* r0 = xc + (long long)y0[(size_t)oy] * W;
        const T* r1 = xc + (long long)y1[(size_t)oy] * W;
        const T fy = wy[(size_t)oy];
        for (int ox = 0; ox < Wo; ++ox) {
          const T fx = wx[(size_t)ox];
          const T top = r0[x0[(size_t)ox]] * (T(1) - fx) + r0[x1[(size_t)ox]] * fx;
          const T bot = r1[x0[(size_t)ox]] * (T(1) - fx) + r1[x1[(size_t)ox]] * fx;
          oc[(long long)oy * Wo + ox] = top * (T(1) - fy) + bot * fy;
        }
      }
    }

  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, y0, y1, x0, x1, wy, wx, N, C, H, W, Ho, Wo]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* xc = gx + ((long long)n * C + c) * H * W;
        const T* oc = g + ((long long)n * C + c) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const T fy = wy[(size_t)oy];
          for (int ox = 0; ox < Wo; ++ox) {
            const T fx = wx[(size_t)ox];
            const T go = oc[(long long)oy * Wo + ox];
            xc[(long long)y0[(size_t)oy] * W + x0[(size_t)ox]] += go * (T(1) - fy) * (T(1) - fx);
            xc[(long long)y0[(size_t)oy] * W + x1[(size_t)ox]] += go * (T(1) - fy) * fx;
            xc[(long long)y1[(size_t)oy] * W + x0[(size_t)ox]] += go * fy * (T(1) - fx);
            xc[(long long)y1[(size_t)oy] * W + x1[(size_t)ox]] += go * fy * fx;
          }
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// linear: x (M,k), w (d,k), optional bias (d) -> (M,d)

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  tcheck(x.ndim() == 2 && w.ndim() == 2, "linear: expected 2-d input and weight");
  tcheck(x.dim(1) == w.dim(1), "linear: input width " + std::to_string(x.dim(1)) + " does not match weight " +
                                   shape_str(w.shape()));
  const long long M = x.dim(0), k = x.dim(1), d = w.dim(0);
  const bool has_bias = b.defined() && b.size() > 0;
  if (has_bias) tcheck(b.ndim() == 1 && b.dim(0) == (int)d, "linear: bias must be (d)");

  Tensor<T> out(Shape{(int)M, (int)d});
  T* po = out.ptr();
  if (has_bias) {
    const T* pb = b.ptr();
    for (long long m = 0; m < M; ++m)
      for (long long j = 0; j < d; ++j) po[m * d + j] = pb[j];
  }
  detail::gemm_abt_acc(M, k, d, x.ptr(), w.ptr(), po);

  bool need = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
  out.set_requires_grad(need);
  tape_record<T>(need, [x, w, b, out, M, k, d, has_bias]() {
    const T* g = out.grad_ptr();
    if (x.requires_grad()) detail::gemm_acc(M, d, k, g, w.ptr(), x.grad_ptr());
    if (w.requires_grad()) detail::gemm_atb_acc(M, d, k, g, x.ptr(), w.grad_ptr());
    if (has_bias && b.requires_grad()) {
      T* gb = b.grad_ptr();
      for (long long m = 0; m < M; ++m)
        for (long long j = 0; j < d; ++j) gb[j] += g[m * d + j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
  return linear(x, w, Tensor<T>());
}

// ---------------------------------------------------------------------------
// dropout: inverted scaling in train mode, identity in eval mode

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng) {
  tcheck(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  const long long n = x.size();
  std::vector<T> mask((size_t)n);
  const T keep_scale = (T)(1.0 / (1.0 - p));
  for (long long i = 0; i < n; ++i) mask[(size_t)i] = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* po = out.ptr();
  for (long long i = 0; i < n; ++i) po[i] = px[i] * mask[(size_t)i];
  bool need = x.requires_grad();
  out.set_requires_grad(need);
  tape_record<T>(need, [x, out, mask, n]() {
    const T* g = out.grad_ptr();
    T* gx = x.grad_ptr();
    for (long long i = 0; i < n; ++i) gx[i] += g[i] * mask[(size_t)i];
  });
  return out;
}

}  // namespace mcd
