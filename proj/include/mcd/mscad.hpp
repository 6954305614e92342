#pragma once
// Multi-scale difference module. Three conceptual steps per temporal branch
// and across branches:
//   1. cross-scale alignment: C3/C4/C5 -> 1x1 conv to a common width ->
//      bilinear upsample to C2 resolution -> per-position softmax gate over
//      the three scales (one weight per scale per position, broadcast over
//      channels) -> weighted sum.
//   2. temporal differences: direct |f1 - f2| and a learned path
//      concat -> 3x3 conv -> BN -> GELU -> 1x1 conv.
//   3. aggregation: concat -> 1x1 conv -> BN -> GELU.
//
// Ablation wiring:
//   ms_att off:   uniform 1/3 fusion weights, gate conv not built.
//   diff_ada off: learned path not built, aggregation runs on the direct
//                 difference alone (1x1 conv D->D).
//   diff_agg off: aggregation replaced by direct-difference pass-through
//                 plus a learned 1x1 projection of the adaptive path.

#include <array>

#include "mcd/backbone.hpp"
#include "mcd/ops.hpp"
#include "mcd/params.hpp"

namespace mcd {

struct MscadConfig {
  int common_dim = 64;
  bool ablate_ms_att = false;
  bool ablate_diff_ada = false;
  bool ablate_diff_agg = false;
};

template <typename T>
class Mscad {
 public:
  Mscad() = default;

  Mscad(const MscadConfig& cfg, std::array<int, 3> in_channels /*C3,C4,C5*/, ParamSet<T>& ps, Rng& rng) : cfg_(cfg) {
    if (cfg.common_dim < 1) throw ConfigError("mscad: common_dim must be >= 1");
    const int d = cfg.common_dim;
    for (int i = 0; i < 3; ++i) {
      const std::string p = "mscad.align" + std::to_string(i + 3);
      align_w_[(size_t)i] = init::conv_weight(ps, p + ".w", d, in_channels[(size_t)i], 1, rng, ParamGroup::mscad);
      align_b_[(size_t)i] = init::zeros_param(ps, p + ".b", Shape{d}, ParamGroup::mscad);
    }
    if (!cfg.ablate_ms_att) {
      gate_w_ = init::conv_weight(ps, "mscad.gate.w", 3, 3 * d, 1, rng, ParamGroup::mscad);
      gate_b_ = init::zeros_param(ps, "mscad.gate.b", Shape{3}, ParamGroup::mscad);
    }
    if (!cfg.ablate_diff_ada) {
      ada_conv1_w_ = init::conv_weight(ps, "mscad.ada.conv1.w", d, 2 * d, 3, rng, ParamGroup::mscad);
      ada_conv1_b_ = init::zeros_param(ps, "mscad.ada.conv1.b", Shape{d}, ParamGroup::mscad);
      ada_bn_gamma_ = ps.add("mscad.ada.bn.gamma", Tensor<T>(Shape{d}, T(1)), ParamGroup::mscad);
      ada_bn_beta_ = init::zeros_param(ps, "mscad.ada.bn.beta", Shape{d}, ParamGroup::mscad);
      ada_bn_.init(d);
      ps.add_buffer("mscad.ada.bn.running_mean", ada_bn_.running_mean, ParamGroup::mscad);
      ps.add_buffer("mscad.ada.bn.running_var", ada_bn_.running_var, ParamGroup::mscad);
      ps.add_buffer("mscad.ada.bn.batches", ada_bn_.batches_seen, ParamGroup::mscad);
      ada_conv2_w_ = init::conv_weight(ps, "mscad.ada.conv2.w", d, d, 1, rng, ParamGroup::mscad);
      ada_conv2_b_ = init::zeros_param(ps, "mscad.ada.conv2.b", Shape{d}, ParamGroup::mscad);
    }
    if (!cfg.ablate_diff_agg) {
      const int agg_in = cfg.ablate_diff_ada ? d : 2 * d;
      agg_w_ = init::conv_weight(ps, "mscad.agg.w", d, agg_in, 1, rng, ParamGroup::mscad);
      agg_b_ = init::zeros_param(ps, "mscad.agg.b", Shape{d}, ParamGroup::mscad);
      agg_bn_gamma_ = ps.add("mscad.agg.bn.gamma", Tensor<T>(Shape{d}, T(1)), ParamGroup::mscad);
      agg_bn_beta_ = init::zeros_param(ps, "mscad.agg.bn.beta", Shape{d}, ParamGroup::mscad);
      agg_bn_.init(d);
      ps.add_buffer("mscad.agg.bn.running_mean", agg_bn_.running_mean, ParamGroup::mscad);
      ps.add_buffer("mscad.agg.bn.running_var", agg_bn_.running_var, ParamGroup::mscad);
      ps.add_buffer("mscad.agg.bn.batches", agg_bn_.batches_seen, ParamGroup::mscad);
    } else if (!cfg.ablate_diff_ada) {
      proj_w_ = init::conv_weight(ps, "mscad.aggproj.w", d, d, 1, rng, ParamGroup::mscad);
      proj_b_ = init::zeros_param(ps, "mscad.aggproj.b", Shape{d}, ParamGroup::mscad);
    }
  }

  const MscadConfig& config() const { return cfg_; }

  // C3/C4/C5 -> common width at C2 resolution, softmax-gated over scales
  Tensor<T> align_and_fuse(const Tensor<T>& c3, const Tensor<T>& c4, const Tensor<T>& c5) const {
    tcheck(c3.dim(0) == c4.dim(0) && c3.dim(0) == c5.dim(0), "mscad: mismatched batch across stages");
    tcheck(c4.dim(2) * 2 == c3.dim(2) && c4.dim(3) * 2 == c3.dim(3) && c5.dim(2) * 4 == c3.dim(2) &&
               c5.dim(3) * 4 == c3.dim(3),
           "mscad: unexpected stage strides, want C4 = C3/2 and C5 = C3/4");
    std::array<Tensor<T>, 3> aligned;
    aligned[0] = upsample_bilinear(conv2d(c3, align_w_[0], align_b_[0], 1, 0), 2);
    aligned[1] = upsample_bilinear(conv2d(c4, align_w_[1], align_b_[1], 1, 0), 4);
    // x8 to C2 resolution, composed from the supported factors
    aligned[2] = upsample_bilinear(upsample_bilinear(conv2d(c5, align_w_[2], align_b_[2], 1, 0), 2), 4);

    if (cfg_.ablate_ms_att) {
      return mul_scalar(add(add(aligned[0], aligned[1]), aligned[2]), T(1) / T(3));
    }
    Tensor<T> cat = concat<T>({aligned[0], aligned[1], aligned[2]}, 1);
    Tensor<T> logits = conv2d(cat, gate_w_, gate_b_, 1, 0);  // (N,3,H,W)
    Tensor<T> att = softmax(logits, 1);
    Tensor<T> out = scale_spatial(aligned[0], slice(att, 1, 0, 1));
    out = add(out, scale_spatial(aligned[1], slice(att, 1, 1, 1)));
    out = add(out, scale_spatial(aligned[2], slice(att, 1, 2, 1)));
    return out;
  }

  static Tensor<T> diff_direct(const Tensor<T>& f1, const Tensor<T>& f2) { return abs(sub(f1, f2)); }

  Tensor<T> diff_adaptive(const Tensor<T>& f1, const Tensor<T>& f2, Mode mode) {
    tcheck(!cfg_.ablate_diff_ada, "mscad: adaptive difference path is ablated");
    detail::check_same_shape(f1, f2, "mscad.diff_adaptive");
    Tensor<T> h = concat<T>({f1, f2}, 1);
    h = conv2d(h, ada_conv1_w_, ada_conv1_b_, 1, 1);
    h = batchnorm2d(h, ada_bn_gamma_, ada_bn_beta_, ada_bn_, mode);
    h = gelu(h);
    return conv2d(h, ada_conv2_w_, ada_conv2_b_, 1, 0);
  }

  Tensor<T> aggregate(const Tensor<T>& d_dir, const Tensor<T>& d_ada, Mode mode) {
    if (cfg_.ablate_diff_agg) {
      if (!d_ada.defined()) return d_dir;
      return add(d_dir, conv2d(d_ada, proj_w_, proj_b_, 1, 0));
    }
    Tensor<T> h = d_ada.defined() ? concat<T>({d_dir, d_ada}, 1) : d_dir;
    h = conv2d(h, agg_w_, agg_b_, 1, 0);
    h = batchnorm2d(h, agg_bn_gamma_, agg_bn_beta_, agg_bn_, mode);
    return gelu(h);
  }

  Tensor<T> forward(const typename Backbone<T>::Features& f1, const typename Backbone<T>::Features& f2, Mode mode) {
    Tensor<T> fused1 = align_and_fuse(f1.c3, f1.c4, f1.c5);
    Tensor<T> fused2 = align_and_fuse(f2.c3, f2.c4, f2.c5);
    Tensor<T> d_dir = diff_direct(fused1, fused2);
    Tensor<T> d_ada;
    if (!cfg_.ablate_diff_ada) d_ada = diff_adaptive(fused1, fused2, mode);
    return aggregate(d_dir, d_ada, mode);
  }

 private:
  MscadConfig cfg_;
  std::array<Tensor<T>, 3> align_w_, align_b_;
  Tensor<T> gate_w_, gate_b_;
  Tensor<T> ada_conv1_w_, ada_conv1_b_, ada_conv2_w_, ada_conv2_b_;
  Tensor<T> ada_bn_gamma_, ada_bn_beta_;
  BatchNormState<T> ada_bn_;
  Tensor<T> agg_w_, agg_b_, agg_bn_gamma_, agg_bn_beta_;
  BatchNormState<T> agg_bn_;
  Tensor<T> proj_w_, proj_b_;
};

}  // namespace mcd
