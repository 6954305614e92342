#pragma once
// Full change-detection model: one weight-shared encoder applied to both
// temporal images, multi-scale difference fusion, decoder head. Output is a
// logit map (N, K+1, H, W) at input resolution.

#include <array>
#include <memory>
#include <string>

#include "mcd/backbone.hpp"
#include "mcd/decoder.hpp"
#include "mcd/mscad.hpp"

namespace mcd {

struct ModelConfig {
  BackboneConfig backbone;
  MscadConfig mscad;
  int num_classes = 7;  // K+1
  bool ablate_dec_att = false;
};

template <typename T>
class ChangeModel {
 public:
  explicit ChangeModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.backbone.init_seed);
    backbone_ = std::make_unique<Backbone<T>>(cfg.backbone, params_, rng);
    mscad_ = std::make_unique<Mscad<T>>(
        cfg.mscad,
        std::array<int, 3>{cfg.backbone.stage_channels[1], cfg.backbone.stage_channels[2],
                           cfg.backbone.stage_channels[3]},
        params_, rng);
    DecoderConfig dc;
    dc.in_channels = cfg.mscad.common_dim;
    dc.num_classes = cfg.num_classes;
    dc.ablate_attention = cfg.ablate_dec_att;
    decoder_ = std::make_unique<Decoder<T>>(dc, params_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  Backbone<T>& backbone() { return *backbone_; }
  Mscad<T>& mscad() { return *mscad_; }
  Decoder<T>& decoder() { return *decoder_; }

  Tensor<T> forward(const Tensor<T>& t1, const Tensor<T>& t2, Mode mode, Rng& rng) {
    detail::check_same_shape(t1, t2, "model: temporal pair");
    auto f1 = backbone_->forward(t1, mode, rng);
    auto f2 = backbone_->forward(t2, mode, rng);
    Tensor<T> d = mscad_->forward(f1, f2, mode);
    return decoder_->forward(d, mode);
  }

 private:
  ModelConfig cfg_;
  ParamSet<T> params_;
  std::unique_ptr<Backbone<T>> backbone_;
  std::unique_ptr<Mscad<T>> mscad_;
  std::unique_ptr<Decoder<T>> decoder_;
};

}  // namespace mcd
