#pragma once
// Frozen hierarchical trunk producing stages C2..C5 at strides 4/8/16/32,
// enhanced with three trainable plug-ins: bottleneck adapters after every
// block, low-rank (LoRA) branches on the pointwise convs of the last four
// blocks, and learnable prompt tokens injected into stages C2..C4.
//
// With fresh plug-ins (gate 0, LoRA B = 0, zero tokens) the enhanced forward
// equals the plain trunk forward exactly.

#include <array>
#include <string>
#include <vector>

#include "mcd/errors.hpp"
#include "mcd/ops.hpp"
#include "mcd/params.hpp"
#include "mcd/rng.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

struct BackboneConfig {
  std::array<int, 4> stage_channels{32, 64, 128, 256};  // C2..C5
  std::array<int, 4> blocks_per_stage{1, 1, 2, 1};
  int lora_rank = 24;
  double lora_alpha = 48.0;
  double lora_dropout = 0.1;
  int adapter_reduction = 4;
  int prompt_count = 20;
  uint64_t init_seed = 1;
};

// pointwise expansion inside trunk blocks
inline constexpr int kTrunkExpansion = 4;
// number of trailing blocks whose pointwise convs carry low-rank branches
inline constexpr int kLoraBlocks = 4;

// 1x1 convolution host (optionally frozen) plus an optional low-rank branch:
// forward = W0 x + (alpha/r) B A x, dropout on the branch input in train mode.
template <typename T>
struct PointwiseConv {
  Tensor<T> w;  // (Cout, Cin, 1, 1)
  Tensor<T> b;  // (Cout)
  bool has_lora = false;
  Tensor<T> lora_a;  // (r, Cin, 1, 1)
  Tensor<T> lora_b;  // (Cout, r, 1, 1)
  T lora_scale = T(0);
  double lora_dropout = 0.0;

  int in_channels() const { return w.dim(1); }
  int out_channels() const { return w.dim(0); }

  Tensor<T> forward_host(const Tensor<T>& x) const { return conv2d(x, w, b, 1, 0); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    Tensor<T> y = forward_host(x);
    if (!has_lora) return y;
    Tensor<T> z = dropout(x, lora_dropout, mode, rng);
    z = conv2d(z, lora_a, 1, 0);
    z = conv2d(z, lora_b, 1, 0);
    return add(y, mul_scalar(z, lora_scale));
  }
};

template <typename T>
PointwiseConv<T> make_pointwise(ParamSet<T>& ps, const std::string& prefix, int cin, int cout, Rng& rng,
                                ParamGroup host_group) {
  PointwiseConv<T> pc;
  pc.w = init::conv_weight(ps, prefix + ".w", cout, cin, 1, rng, host_group);
  pc.b = init::zeros_param(ps, prefix + ".b", Shape{cout}, host_group);
  return pc;
}

template <typename T>
void attach_lora(ParamSet<T>& ps, PointwiseConv<T>& pc, const std::string& prefix, int rank, double alpha,
                 double dropout_p, Rng& rng) {
  const int d = pc.out_channels(), k = pc.in_channels();
  if (rank > std::min(d, k))
    throw ConfigError("lora rank " + std::to_string(rank) + " exceeds min dimension " +
                      std::to_string(std::min(d, k)) + " of adapted matrix " + prefix);
  pc.lora_a = ps.add(prefix + ".A", randn<T>(Shape{rank, k, 1, 1}, rng, std::sqrt(1.0 / k)), ParamGroup::lora);
  pc.lora_b = init::zeros_param(ps, prefix + ".B", Shape{d, rank, 1, 1}, ParamGroup::lora);
  pc.lora_scale = (T)(alpha / rank);
  pc.lora_dropout = dropout_p;
  pc.has_lora = true;
}

// Residual bottleneck with a scalar gate, zero at construction:
// y = x + s * Up(GELU(Down(x)))
template <typename T>
struct BottleneckAdapter {
  Tensor<T> w_down;  // (Cr, C, 1, 1)
  Tensor<T> w_up;    // (C, Cr, 1, 1)
  Tensor<T> gate;    // (1)

  Tensor<T> forward(const Tensor<T>& x) const {
    tcheck(x.dim(1) == w_down.dim(1), "adapter: channel mismatch, input " + shape_str(x.shape()) + " expects " +
                                          std::to_string(w_down.dim(1)) + " channels");
    Tensor<T> h = conv2d(x, w_down, 1, 0);
    h = gelu(h);
    h = conv2d(h, w_up, 1, 0);
    return add(x, mul_scalar_tensor(h, gate));
  }
};

template <typename T>
BottleneckAdapter<T> make_adapter(ParamSet<T>& ps, const std::string& prefix, int channels, int reduction, Rng& rng) {
  const int cr = std::max(1, channels / reduction);
  BottleneckAdapter<T> a;
  a.w_down = init::conv_weight(ps, prefix + ".down.w", cr, channels, 1, rng, ParamGroup::adapter);
  a.w_up = init::conv_weight(ps, prefix + ".up.w", channels, cr, 1, rng, ParamGroup::adapter);
  a.gate = init::zeros_param(ps, prefix + ".gate", Shape{1}, ParamGroup::adapter);
  return a;
}

// P learnable token vectors of C2 width plus per-stage projections. At each
// stage the projected tokens are averaged into a stage vector that is
// broadcast-added to every spatial position; the projected tokens feed the
// next stage (cross-stage projection). Tokens are zero at construction.
template <typename T>
struct PromptTokens {
  Tensor<T> tokens;                 // (P, ch2)
  std::array<Tensor<T>, 3> proj;    // ch2->ch2, ch2->ch3, ch3->ch4

  std::array<Tensor<T>, 3> stage_vectors() const {
    std::array<Tensor<T>, 3> v;
    Tensor<T> cur = tokens;
    for (int i = 0; i < 3; ++i) {
      cur = linear(cur, proj[(size_t)i]);
      v[(size_t)i] = reduce_mean(cur, {0});
    }
    return v;
  }
};

template <typename T>
PromptTokens<T> make_prompts(ParamSet<T>& ps, const std::string& prefix, int count, int ch2, int ch3, int ch4,
                             Rng& rng) {
  PromptTokens<T> p;
  p.tokens = init::zeros_param(ps, prefix + ".tokens", Shape{count, ch2}, ParamGroup::prompt);
  const int din[3] = {ch2, ch2, ch3};
  const int dout[3] = {ch2, ch3, ch4};
  for (int i = 0; i < 3; ++i)
    p.proj[(size_t)i] = ps.add(prefix + ".proj" + std::to_string(i + 2),
                               randn<T>(Shape{dout[i], din[i]}, rng, std::sqrt(1.0 / din[i])), ParamGroup::prompt);
  return p;
}

// Adds the prompt stage vectors to given C2..C4 feature maps (shape-neutral).
template <typename T>
std::array<Tensor<T>, 3> inject_prompts(const std::array<Tensor<T>, 3>& feats, const PromptTokens<T>& prompts) {
  auto v = prompts.stage_vectors();
  std::array<Tensor<T>, 3> out;
  for (int i = 0; i < 3; ++i) out[(size_t)i] = add_channel(feats[(size_t)i], v[(size_t)i]);
  return out;
}

template <typename T>
struct TrunkBlock {
  Tensor<T> dw;  // (C, 1, 3, 3)
  PointwiseConv<T> pw1;
  PointwiseConv<T> pw2;
  BottleneckAdapter<T> adapter;
  bool has_adapter = false;

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    Tensor<T> h = depthwise_conv2d(x, dw, 1, 1);
    h = pw1.forward(h, mode, rng);
    h = gelu(h);
    h = pw2.forward(h, mode, rng);
    Tensor<T> y = add(x, h);
    return has_adapter ? adapter.forward(y) : y;
  }

  Tensor<T> forward_trunk(const Tensor<T>& x) const {
    Tensor<T> h = depthwise_conv2d(x, dw, 1, 1);
    h = pw1.forward_host(h);
    h = gelu(h);
    h = pw2.forward_host(h);
    return add(x, h);
  }
};

template <typename T>
struct TrunkStage {
  Tensor<T> down_w;
  Tensor<T> down_b;
  int down_stride = 2;
  int down_pad = 0;
  std::vector<TrunkBlock<T>> blocks;
};

template <typename T>
class Backbone {
 public:
  struct Features {
    Tensor<T> c2, c3, c4, c5;
  };

  Backbone(const BackboneConfig& cfg, ParamSet<T>& ps, Rng& rng) : cfg_(cfg) {
    for (int i = 0; i < 4; ++i) {
      tcheck(cfg.stage_channels[(size_t)i] >= 1 && cfg.blocks_per_stage[(size_t)i] >= 1,
             "backbone: stage extents must be positive");
    }
    if (cfg.adapter_reduction < 1) throw ConfigError("backbone: adapter_reduction must be >= 1");
    if (cfg.lora_rank < 1) throw ConfigError("backbone: lora_rank must be >= 1");
    if (cfg.prompt_count < 0) throw ConfigError("backbone: prompt_count must be >= 0");

    // frozen trunk first: its draw sequence does not depend on plug-in settings
    int prev_c = 3;
    for (int s = 0; s < 4; ++s) {
      const int c = cfg.stage_channels[(size_t)s];
      TrunkStage<T>& st = stages_[(size_t)s];
      const std::string sp = "trunk.stage" + std::to_string(s + 2);
      const int k = s == 0 ? 4 : 3;  // overlapping stride-2 downsamples past the stem
      st.down_stride = s == 0 ? 4 : 2;
      st.down_pad = s == 0 ? 0 : 1;
      st.down_w = init::conv_weight(ps, sp + ".down.w", c, prev_c, k, rng, ParamGroup::frozen);
      st.down_b = init::zeros_param(ps, sp + ".down.b", Shape{c}, ParamGroup::frozen);
      st.blocks.resize((size_t)cfg.blocks_per_stage[(size_t)s]);
      for (size_t bIdx = 0; bIdx < st.blocks.size(); ++bIdx) {
        const std::string bp = sp + ".block" + std::to_string(bIdx);
        TrunkBlock<T>& blk = st.blocks[bIdx];
        blk.dw = ps.add(bp + ".dw.w", randn<T>(Shape{c, 1, 3, 3}, rng, std::sqrt(2.0 / 9.0)), ParamGroup::frozen);
        blk.pw1 = make_pointwise(ps, bp + ".pw1", c, c * kTrunkExpansion, rng, ParamGroup::frozen);
        blk.pw2 = make_pointwise(ps, bp + ".pw2", c * kTrunkExpansion, c, rng, ParamGroup::frozen);
      }
      prev_c = c;
    }

    // adapters after every block
    for (int s = 0; s < 4; ++s)
      for (size_t bIdx = 0; bIdx < stages_[(size_t)s].blocks.size(); ++bIdx) {
        const std::string ap = "adapter.stage" + std::to_string(s + 2) + ".block" + std::to_string(bIdx);
        TrunkBlock<T>& blk = stages_[(size_t)s].blocks[bIdx];
        blk.adapter = make_adapter(ps, ap, cfg.stage_channels[(size_t)s], cfg.adapter_reduction, rng);
        blk.has_adapter = true;
      }

    // low-rank branches on the pointwise convs of the last kLoraBlocks blocks
    int total_blocks = 0;
    for (int s = 0; s < 4; ++s) total_blocks += cfg.blocks_per_stage[(size_t)s];
    const int first_lora = std::max(0, total_blocks - kLoraBlocks);
    int gi = 0;
    for (int s = 0; s < 4; ++s)
      for (size_t bIdx = 0; bIdx < stages_[(size_t)s].blocks.size(); ++bIdx, ++gi) {
        if (gi < first_lora) continue;
        const std::string lp = "lora.stage" + std::to_string(s + 2) + ".block" + std::to_string(bIdx);
        TrunkBlock<T>& blk = stages_[(size_t)s].blocks[bIdx];
        attach_lora(ps, blk.pw1, lp + ".pw1", cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout, rng);
        attach_lora(ps, blk.pw2, lp + ".pw2", cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout, rng);
      }

    if (cfg.prompt_count > 0) {
      prompts_ = make_prompts(ps, "prompt", cfg.prompt_count, cfg.stage_channels[0], cfg.stage_channels[1],
                              cfg.stage_channels[2], rng);
      has_prompts_ = true;
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  bool has_prompts() const { return has_prompts_; }
  const PromptTokens<T>& prompts() const { return prompts_; }

  // siamese contract: the same parameter set serves both temporal inputs
  Features forward(const Tensor<T>& image, Mode mode, Rng& rng) const {
    check_input(image);
    std::array<Tensor<T>, 3> stage_vec;
    if (has_prompts_) stage_vec = prompts_.stage_vectors();
    Features f;
    Tensor<T> x = image;
    for (int s = 0; s < 4; ++s) {
      const TrunkStage<T>& st = stages_[(size_t)s];
      x = conv2d(x, st.down_w, st.down_b, st.down_stride, st.down_pad);
      for (const auto& blk : st.blocks) x = blk.forward(x, mode, rng);
      if (has_prompts_ && s < 3) x = add_channel(x, stage_vec[(size_t)s]);
      assign_stage(f, s, x);
    }
    return f;
  }

  // plain frozen trunk, all plug-ins skipped (reference path)
  Features forward_trunk(const Tensor<T>& image) const {
    check_input(image);
    Features f;
    Tensor<T> x = image;
    for (int s = 0; s < 4; ++s) {
      const TrunkStage<T>& st = stages_[(size_t)s];
      x = conv2d(x, st.down_w, st.down_b, st.down_stride, st.down_pad);
      for (const auto& blk : st.blocks) x = blk.forward_trunk(x);
      assign_stage(f, s, x);
    }
    return f;
  }

 private:
  static void assign_stage(Features& f, int s, const Tensor<T>& x) {
    if (s == 0)
      f.c2 = x;
    else if (s == 1)
      f.c3 = x;
    else if (s == 2)
      f.c4 = x;
    else
      f.c5 = x;
  }

  static void check_input(const Tensor<T>& image) {
    tcheck(image.ndim() == 4 && image.dim(1) == 3,
           "backbone: input must be (N,3,H,W), got " + shape_str(image.shape()));
    tcheck(image.dim(2) % 32 == 0 && image.dim(3) % 32 == 0,
           "backbone: input height and width must be divisible by 32, got " + shape_str(image.shape()));
  }

  BackboneConfig cfg_;
  std::array<TrunkStage<T>, 4> stages_;
  bool has_prompts_ = false;
  PromptTokens<T> prompts_;
};

}  // namespace mcd
