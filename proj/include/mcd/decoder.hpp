#pragma once
// Decoder head: three depthwise-separable residual refiner units
//   Y = X + BN(GELU(DWConv3x3(Conv3x3(X))))
// followed by a 1x1 channel recalibration, an element-wise sigmoid
// self-gate F = sigmoid(Y) * Y (skippable by ablation), a 1x1 classifier
// and 4x bilinear upsampling to input resolution. Logits are raw.

#include <vector>

#include "mcd/ops.hpp"
#include "mcd/params.hpp"

namespace mcd {

struct DecoderConfig {
  int in_channels = 64;
  int num_classes = 7;  // K+1, index 0 = no change
  bool ablate_attention = false;
};

inline constexpr int kDecoderDepth = 3;

template <typename T>
class Decoder {
 public:
  Decoder() = default;

  Decoder(const DecoderConfig& cfg, ParamSet<T>& ps, Rng& rng) : cfg_(cfg) {
    if (cfg.num_classes < 2) throw ConfigError("decoder: num_classes must be >= 2 (background plus K >= 1)");
    const int d = cfg.in_channels;
    units_.resize(kDecoderDepth);
    for (int u = 0; u < kDecoderDepth; ++u) {
      const std::string p = "decoder.unit" + std::to_string(u);
      Unit& un = units_[(size_t)u];
      un.conv_w = init::conv_weight(ps, p + ".conv.w", d, d, 3, rng, ParamGroup::decoder);
      un.conv_b = init::zeros_param(ps, p + ".conv.b", Shape{d}, ParamGroup::decoder);
      un.dw_w = ps.add(p + ".dw.w", randn<T>(Shape{d, 1, 3, 3}, rng, std::sqrt(2.0 / 9.0)), ParamGroup::decoder);
      un.bn_gamma = ps.add(p + ".bn.gamma", Tensor<T>(Shape{d}, T(1)), ParamGroup::decoder);
      un.bn_beta = init::zeros_param(ps, p + ".bn.beta", Shape{d}, ParamGroup::decoder);
      un.bn.init(d);
      ps.add_buffer(p + ".bn.running_mean", un.bn.running_mean, ParamGroup::decoder);
      ps.add_buffer(p + ".bn.running_var", un.bn.running_var, ParamGroup::decoder);
      ps.add_buffer(p + ".bn.batches", un.bn.batches_seen, ParamGroup::decoder);
    }
    recal_w_ = init::conv_weight(ps, "decoder.recal.w", d, d, 1, rng, ParamGroup::decoder);
    recal_b_ = init::zeros_param(ps, "decoder.recal.b", Shape{d}, ParamGroup::decoder);
    cls_w_ = init::conv_weight(ps, "decoder.cls.w", cfg.num_classes, d, 1, rng, ParamGroup::decoder);
    cls_b_ = init::zeros_param(ps, "decoder.cls.b", Shape{cfg.num_classes}, ParamGroup::decoder);
  }

  const DecoderConfig& config() const { return cfg_; }

  Tensor<T> context_enhance(const Tensor<T>& x, Mode mode) {
    tcheck(x.dim(1) == cfg_.in_channels, "decoder: channel mismatch, input " + shape_str(x.shape()) + " expects " +
                                             std::to_string(cfg_.in_channels) + " channels");
    Tensor<T> y = x;
    for (auto& un : units_) {
      Tensor<T> h = conv2d(y, un.conv_w, un.conv_b, 1, 1);
      h = depthwise_conv2d(h, un.dw_w, 1, 1);
      h = gelu(h);
      h = batchnorm2d(h, un.bn_gamma, un.bn_beta, un.bn, mode);
      y = add(y, h);
    }
    return conv2d(y, recal_w_, recal_b_, 1, 0);
  }

  static Tensor<T> attention_gate(const Tensor<T>& y) { return mul(sigmoid(y), y); }

  Tensor<T> classify_and_upsample(const Tensor<T>& f) const {
    Tensor<T> logits = conv2d(f, cls_w_, cls_b_, 1, 0);
    return upsample_bilinear(logits, 4);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = context_enhance(x, mode);
    if (!cfg_.ablate_attention) y = attention_gate(y);
    return classify_and_upsample(y);
  }

 private:
  struct Unit {
    Tensor<T> conv_w, conv_b;
    Tensor<T> dw_w;
    Tensor<T> bn_gamma, bn_beta;
    BatchNormState<T> bn;
  };

  DecoderConfig cfg_;
  std::vector<Unit> units_;
  Tensor<T> recal_w_, recal_b_;
  Tensor<T> cls_w_, cls_b_;
};

}  // namespace mcd
