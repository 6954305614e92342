#pragma once
// Independent reference implementations used as oracles by the verification
// suites and tests. These deliberately share no code with the main paths:
// direct 6-loop convolution, naive softmax, per-pixel counting, brute-force
// sorted-prefix evaluation of the Lovasz extension, closed-form schedule.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mcd/label.hpp"

namespace mcd::reference {

struct Dims4 {
  int n, c, h, w;
  long long numel() const { return (long long)n * c * h * w; }
};

// direct convolution, NCHW x (Cout,Cin,kh,kw)
inline std::vector<double> conv2d(const std::vector<double>& x, Dims4 xd, const std::vector<double>& w, int cout,
                                  int kh, int kw, const std::vector<double>& bias, int stride, int pad, Dims4& od) {
  od.n = xd.n;
  od.c = cout;
  od.h = (xd.h + 2 * pad - kh) / stride + 1;
  od.w = (xd.w + 2 * pad - kw) / stride + 1;
  std::vector<double> out((size_t)od.numel(), 0.0);
  for (int n = 0; n < xd.n; ++n)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < od.h; ++oy)
        for (int ox = 0; ox < od.w; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[(size_t)co];
          for (int ci = 0; ci < xd.c; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= xd.h || ix < 0 || ix >= xd.w) continue;
                acc += x[(((size_t)n * xd.c + ci) * xd.h + iy) * xd.w + ix] *
                       w[(((size_t)co * xd.c + ci) * kh + ky) * kw + kx];
              }
          out[(((size_t)n * cout + co) * od.h + oy) * od.w + ox] = acc;
        }
  return out;
}

inline std::vector<double> depthwise_conv2d(const std::vector<double>& x, Dims4 xd, const std::vector<double>& w,
                                            int kh, int kw, int stride, int pad, Dims4& od) {
  od.n = xd.n;
  od.c = xd.c;
  od.h = (xd.h + 2 * pad - kh) / stride + 1;
  od.w = (xd.w + 2 * pad - kw) / stride + 1;
  std::vector<double> out((size_t)od.numel(), 0.0);
  for (int n = 0; n < xd.n; ++n)
    for (int c = 0; c < xd.c; ++c)
      for (int oy = 0; oy < od.h; ++oy)
        for (int ox = 0; ox < od.w; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= xd.h || ix < 0 || ix >= xd.w) continue;
              acc += x[(((size_t)n * xd.c + c) * xd.h + iy) * xd.w + ix] * w[((size_t)c * kh + ky) * kw + kx];
            }
          out[(((size_t)n * xd.c + c) * od.h + oy) * od.w + ox] = acc;
        }
  return out;
}

// naive per-pixel softmax over the class axis of (N,C,H,W) logits
inline std::vector<double> softmax_nchw(const std::vector<double>& logits, Dims4 d) {
  std::vector<double> p(logits.size());
  const long long hw = (long long)d.h * d.w;
  for (int n = 0; n < d.n; ++n)
    for (long long i = 0; i < hw; ++i) {
      double denom = 0.0;
      for (int c = 0; c < d.c; ++c) denom += std::exp(logits[((size_t)n * d.c + c) * hw + i]);
      for (int c = 0; c < d.c; ++c) p[((size_t)n * d.c + c) * hw + i] = std::exp(logits[((size_t)n * d.c + c) * hw + i]) / denom;
    }
  return p;
}

// mean cross-entropy via explicit log-sum-exp
inline double cross_entropy(const std::vector<double>& logits, Dims4 d, const LabelMap& target) {
  const long long hw = (long long)d.h * d.w;
  double total = 0.0;
  for (int n = 0; n < d.n; ++n)
    for (long long i = 0; i < hw; ++i) {
      double mx = logits[(size_t)n * d.c * hw + i];
      for (int c = 1; c < d.c; ++c) mx = std::max(mx, logits[((size_t)n * d.c + c) * hw + i]);
      double lse = 0.0;
      for (int c = 0; c < d.c; ++c) lse += std::exp(logits[((size_t)n * d.c + c) * hw + i] - mx);
      lse = mx + std::log(lse);
      const int t = target.v[(size_t)(n * hw + i)];
      total += lse - logits[((size_t)n * d.c + t) * hw + i];
    }
  return total / (double)(d.n * hw);
}

inline double focal(const std::vector<double>& logits, Dims4 d, const LabelMap& target,
                    const std::vector<double>& alpha, double gamma) {
  std::vector<double> p = softmax_nchw(logits, d);
  const long long hw = (long long)d.h * d.w;
  double total = 0.0;
  for (int n = 0; n < d.n; ++n)
    for (long long i = 0; i < hw; ++i) {
      const int t = target.v[(size_t)(n * hw + i)];
      const double pt = p[((size_t)n * d.c + t) * hw + i];
      const double a = alpha.empty() ? 1.0 : alpha[(size_t)t];
      total += -a * std::pow(1.0 - pt, gamma) * std::log(pt);
    }
  return total / (double)(d.n * hw);
}

inline double dice(const std::vector<double>& logits, Dims4 d, const LabelMap& target, double eps) {
  std::vector<double> p = softmax_nchw(logits, d);
  const long long hw = (long long)d.h * d.w;
  double total = 0.0;
  for (int c = 0; c < d.c; ++c) {
    double inter = 0.0, sum_y = 0.0, sum_p = 0.0;
    for (int n = 0; n < d.n; ++n)
      for (long long i = 0; i < hw; ++i) {
        const double y = target.v[(size_t)(n * hw + i)] == c ? 1.0 : 0.0;
        const double pr = p[((size_t)n * d.c + c) * hw + i];
        inter += y * pr;
        sum_y += y * y;
        sum_p += pr * pr;
      }
    total += 1.0 - (2.0 * inter + eps) / (sum_y + sum_p + eps);
  }
  return total / d.c;
}

// Brute-force Lovasz-Softmax straight from the definition: per present
// class, sort errors descending (stable), and evaluate the Jaccard loss of
// every sorted prefix from scratch to form the discrete gradient.
inline double lovasz_softmax(const std::vector<double>& logits, Dims4 d, const LabelMap& target) {
  std::vector<double> p = softmax_nchw(logits, d);
  const long long hw = (long long)d.h * d.w;
  const long long P = (long long)d.n * hw;
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < d.c; ++c) {
    std::vector<int> y((size_t)P);
    std::vector<double> err((size_t)P);
    long long gts = 0;
    for (int n = 0; n < d.n; ++n)
      for (long long i = 0; i < hw; ++i) {
        const long long pi = n * hw + i;
        y[(size_t)pi] = target.v[(size_t)pi] == c ? 1 : 0;
        gts += y[(size_t)pi];
        err[(size_t)pi] = std::abs((double)y[(size_t)pi] - p[((size_t)n * d.c + c) * hw + i]);
      }
    if (gts == 0) continue;

    std::vector<long long> order((size_t)P);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&err](long long a, long long b) { return err[(size_t)a] > err[(size_t)b]; });

    // Jaccard loss of the prefix set S_j = first j sorted pixels, counted
    // from scratch: J(j) = 1 - |G minus S_j| / |G union S_j|
    auto jaccard_loss = [&](long long j) {
      long long fg_in_prefix = 0;
      for (long long q = 0; q < j; ++q) fg_in_prefix += y[(size_t)order[(size_t)q]];
      const long long inter = gts - fg_in_prefix;
      const long long uni = gts + (j - fg_in_prefix);
      return 1.0 - (double)inter / (double)uni;
    };
    double class_loss = 0.0;
    for (long long j = 1; j <= P; ++j) {
      const double g = jaccard_loss(j) - jaccard_loss(j - 1);
      class_loss += err[(size_t)order[(size_t)(j - 1)]] * g;
    }
    total += class_loss;
    ++present;
  }
  return present > 0 ? total / present : 0.0;
}

// closed-form schedule evaluation via the cycle-index formula
inline double lr_closed_form(double epoch, double base_lr, double t0, double tmult, double eta_min) {
  double start = 0.0, cycle = t0;
  if (tmult == 1.0) {
    const double i = std::floor(epoch / t0);
    start = i * t0;
  } else {
    double i = std::floor(std::log(1.0 + epoch * (tmult - 1.0) / t0) / std::log(tmult));
    start = t0 * (std::pow(tmult, i) - 1.0) / (tmult - 1.0);
    cycle = t0 * std::pow(tmult, i);
    // guard against one-ulp log/floor slips at cycle boundaries
    while (epoch < start) {
      i -= 1.0;
      start = t0 * (std::pow(tmult, i) - 1.0) / (tmult - 1.0);
      cycle = t0 * std::pow(tmult, i);
    }
    while (epoch >= start + cycle) {
      i += 1.0;
      start = t0 * (std::pow(tmult, i) - 1.0) / (tmult - 1.0);
      cycle = t0 * std::pow(tmult, i);
    }
  }
  const double t = epoch - start;
  return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + std::cos(3.14159265358979323846 * t / cycle));
}

// scalar AdamW sequence (decoupled weight decay)
struct AdamWScalar {
  double m = 0, v = 0;
  long long t = 0;
  double step(double& p, double g, double lr, double beta1, double beta2, double eps, double wd) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double mhat = m / (1 - std::pow(beta1, (double)t));
    const double vhat = v / (1 - std::pow(beta2, (double)t));
    p -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p);
    return p;
  }
};

// per-pixel confusion counting
inline std::vector<long long> confusion_counts(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  std::vector<long long> counts((size_t)num_classes * num_classes, 0);
  for (long long i = 0; i < pred.size(); ++i)
    counts[(size_t)pred.v[(size_t)i] * num_classes + gt.v[(size_t)i]]++;
  return counts;
}

inline LabelMap scd_to_mcd_rule(const LabelMap& t1, const LabelMap& t2) {
  LabelMap out(t1.n, t1.h, t1.w);
  for (long long i = 0; i < t1.size(); ++i) {
    const uint8_t a = t1.v[(size_t)i], b = t2.v[(size_t)i];
    out.v[(size_t)i] = (a != b && b > 0) ? b : 0;
  }
  return out;
}

}  // namespace mcd::reference
