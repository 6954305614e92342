#pragma once
// Composite segmentation objective:
//   L = w_focal * Focal + w_dice * Dice + w_lovasz * Lovasz-Softmax
// Focal is averaged over all pixels; Dice over all classes; the Lovasz term
// over classes present in the batch (the per-class normalization is
// undefined for absent classes).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mcd/label.hpp"
#include "mcd/ops.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

struct LossConfig {
  double w_focal = 0.4;
  double w_dice = 0.3;
  double w_lovasz = 0.3;
  double focal_gamma = 3.0;
  std::vector<double> focal_alpha;  // per-class weights; empty = all ones
  double dice_eps = 1e-5;
};

namespace detail {

template <typename T>
void check_loss_inputs(const Tensor<T>& logits, const LabelMap& target) {
  tcheck(logits.ndim() == 4, "loss: logits must be (N,C,H,W), got " + shape_str(logits.shape()));
  tcheck(logits.dim(0) == target.n && logits.dim(2) == target.h && logits.dim(3) == target.w,
         "loss: target " + std::to_string(target.n) + "x" + std::to_string(target.h) + "x" +
             std::to_string(target.w) + " does not match logits " + shape_str(logits.shape()));
  const int C = logits.dim(1);
  for (long long i = 0; i < target.size(); ++i)
    tcheck(target.v[(size_t)i] < C, "loss: target class " + std::to_string((int)target.v[(size_t)i]) +
                                        " out of range for " + std::to_string(C) + " classes");
}

// one-hot constant (N,C,H,W) for the target
template <typename T>
Tensor<T> one_hot(const LabelMap& target, int num_classes) {
  Tensor<T> oh(Shape{target.n, num_classes, target.h, target.w}, T(0));
  T* p = oh.ptr();
  const long long hw = (long long)target.h * target.w;
  for (int ni = 0; ni < target.n; ++ni)
    for (long long i = 0; i < hw; ++i) {
      const int c = target.v[(size_t)(ni * hw + i)];
      p[((long long)ni * num_classes + c) * hw + i] = T(1);
    }
  return oh;
}

}  // namespace detail

// -alpha_t * (1 - p_t)^gamma * log p_t, averaged over all pixels
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const LabelMap& target, const LossConfig& cfg) {
  detail::check_loss_inputs(logits, target);
  const int C = logits.dim(1);
  Tensor<T> lsm = log_softmax(logits, 1);
  Tensor<T> oh = detail::one_hot<T>(target, C);
  Tensor<T> lsm_t = reduce_sum(mul(lsm, oh), {1});  // (N,H,W) log p_t
  Tensor<T> p_t = exp(lsm_t);

  // per-pixel class weight as a constant map
  Tensor<T> alpha_map(Shape{target.n, target.h, target.w}, T(1));
  if (!cfg.focal_alpha.empty()) {
    tcheck((int)cfg.focal_alpha.size() == C, "focal: alpha vector length must equal class count");
    T* pa = alpha_map.ptr();
    for (long long i = 0; i < target.size(); ++i) pa[i] = (T)cfg.focal_alpha[target.v[(size_t)i]];
  }

  Tensor<T> ones(p_t.shape(), T(1));
  Tensor<T> focus = pow_scalar(sub(ones, p_t), (T)cfg.focal_gamma);
  Tensor<T> per_pixel = neg(mul(alpha_map, mul(focus, lsm_t)));
  return mean_all(per_pixel);
}

// per class: 1 - (2*sum(y*p) + eps) / (sum(y^2) + sum(p^2) + eps), mean over classes
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const LabelMap& target, const LossConfig& cfg) {
  detail::check_loss_inputs(logits, target);
  const int C = logits.dim(1);
  Tensor<T> probs = softmax(logits, 1);
  Tensor<T> oh = detail::one_hot<T>(target, C);
  const T eps = (T)cfg.dice_eps;

  Tensor<T> inter = reduce_sum(mul(probs, oh), {0, 2, 3});      // (C)
  Tensor<T> sum_y = reduce_sum(mul(oh, oh), {0, 2, 3});         // (C)
  Tensor<T> sum_p = reduce_sum(mul(probs, probs), {0, 2, 3});   // (C)
  Tensor<T> num = add_scalar(mul_scalar(inter, T(2)), eps);
  Tensor<T> den = add_scalar(add(sum_y, sum_p), eps);
  Tensor<T> ones(Shape{C}, T(1));
  Tensor<T> terms = sub(ones, div(num, den));
  return mean_all(terms);
}

// Lovasz extension of the per-class Jaccard loss on softmax probabilities.
// For each class present in the target: errors e_i = |y_ic - p_ic|, sorted
// descending (stable in pixel index); coefficients are the discrete Jaccard
// gradient along sorted prefixes; the class loss is dot(e_sorted, g).
template <typename T>
Tensor<T> lovasz_softmax(const Tensor<T>& logits, const LabelMap& target, const LossConfig&) {
  detail::check_loss_inputs(logits, target);
  const int C = logits.dim(1);
  const long long P = target.size();  // pixels across the batch
  Tensor<T> probs = softmax(logits, 1);

  // flatten probabilities to (C*P) with class-major layout for slicing
  // probs is (N,C,H,W); per class gather indices map pixel i -> flat offset
  const long long hw = (long long)target.h * target.w;
  std::vector<long long> class_count((size_t)C, 0);
  for (long long i = 0; i < P; ++i) class_count[(size_t)target.v[(size_t)i]]++;

  Tensor<T> flat = flatten(probs);
  Tensor<T> total;
  int present = 0;
  for (int c = 0; c < C; ++c) {
    if (class_count[(size_t)c] == 0) continue;  // class absent from this batch
    // errors e_i = |y_i - p_i| as a differentiable vector over pixels
    std::vector<long long> idx((size_t)P);
    for (long long ni = 0, i = 0; ni < target.n; ++ni)
      for (long long j = 0; j < hw; ++j, ++i) idx[(size_t)i] = ((long long)ni * C + c) * hw + j;
    Tensor<T> p_c = gather(flat, idx);  // (P)
    Tensor<T> y_c(Shape{(int)P}, T(0));
    for (long long i = 0; i < P; ++i)
      if (target.v[(size_t)i] == c) y_c.ptr()[i] = T(1);
    Tensor<T> err = abs(sub(y_c, p_c));

    // descending stable sort of errors; permutation treated as constant
    std::vector<long long> order((size_t)P);
    std::iota(order.begin(), order.end(), 0);
    const T* ev = err.ptr();
    std::stable_sort(order.begin(), order.end(), [ev](long long a, long long b) { return ev[a] > ev[b]; });

    // discrete Jaccard gradient over sorted prefixes
    const long long gts = class_count[(size_t)c];
    Tensor<T> coeff(Shape{(int)P}, T(0));
    T* cw = coeff.ptr();
    long long cum_y = 0;
    T prev_j = T(0);
    for (long long j = 0; j < P; ++j) {
      const bool is_fg = target.v[(size_t)order[(size_t)j]] == c;
      cum_y += is_fg ? 1 : 0;
      const long long inter = gts - cum_y;
      const long long uni = gts + (j + 1 - cum_y);
      const T jac = T(1) - (T)inter / (T)uni;
      cw[j] = jac - prev_j;
      prev_j = jac;
    }

    Tensor<T> err_sorted = gather(err, order);
    Tensor<T> term = sum_all(mul(err_sorted, coeff));
    total = total.defined() ? add(total, term) : term;
    ++present;
  }
  tcheck(present > 0, "lovasz: no classes present in target");
  return mul_scalar(total, T(1) / (T)present);
}

template <typename T>
Tensor<T> composite_loss(const Tensor<T>& logits, const LabelMap& target, const LossConfig& cfg) {
  Tensor<T> out;
  if (cfg.w_focal != 0.0) out = mul_scalar(focal_loss(logits, target, cfg), (T)cfg.w_focal);
  if (cfg.w_dice != 0.0) {
    Tensor<T> d = mul_scalar(dice_loss(logits, target, cfg), (T)cfg.w_dice);
    out = out.defined() ? add(out, d) : d;
  }
  if (cfg.w_lovasz != 0.0) {
    Tensor<T> l = mul_scalar(lovasz_softmax(logits, target, cfg), (T)cfg.w_lovasz);
    out = out.defined() ? add(out, l) : l;
  }
  tcheck(out.defined(), "composite_loss: all weights are zero");
  return out;
}

}  // namespace mcd
