#include "mcd/verify.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include "mcd/checkpoint.hpp"
#include "mcd/config.hpp"
#include "mcd/data.hpp"
#include "mcd/gradcheck.hpp"
#include "mcd/losses.hpp"
#include "mcd/metrics.hpp"
#include "mcd/model.hpp"
#include "mcd/reference.hpp"
#include "mcd/train.hpp"

namespace mcd::verify {

namespace {

using D = double;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Suite {
  std::vector<CheckResult> results;

  void add(const std::string& name, bool pass, const std::string& detail) {
    results.push_back(CheckResult{name, pass, detail});
  }

  // aggregates per-instance gradcheck reports into one line
  void gradcheck_op(const std::string& name, int instances, uint64_t seed,
                    const std::function<GradCheckReport(Rng&)>& make) {
    double worst = 0.0;
    long long checked = 0;
    bool ok = true;
    Rng top(seed);
    for (int i = 0; i < instances; ++i) {
      Rng rng = top.fork((uint64_t)i);
      GradCheckReport rep = make(rng);
      worst = std::max(worst, rep.max_rel_err);
      checked += rep.checked;
      ok = ok && rep.pass(1e-4);
    }
    add(name, ok, "max_rel_err=" + fmt(worst) + " over " + std::to_string(instances) + " instances, " +
                      std::to_string(checked) + " elements");
  }
};

Shape small_map_shape(Rng& rng, int max_c = 4, int max_hw = 8) {
  return Shape{1 + rng.uniform_int(2), 2 + rng.uniform_int(max_c - 1), 3 + rng.uniform_int(max_hw - 2),
               3 + rng.uniform_int(max_hw - 2)};
}

LabelMap random_target(Rng& rng, int n, int c, int h, int w) {
  LabelMap t(n, h, w);
  for (auto& v : t.v) v = (uint8_t)rng.uniform_int(c);
  return t;
}

// logits whose per-class error vectors have no near-ties (lovasz sort)
Tensor<D> lovasz_safe_logits(Rng& rng, int n, int c, int h, int w, const LabelMap& target) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    Tensor<D> logits = rand_uniform<D>(Shape{n, c, h, w}, rng, -2.0, 2.0);
    reference::Dims4 d{n, c, h, w};
    std::vector<double> vals(logits.ptr(), logits.ptr() + logits.size());
    std::vector<double> p = reference::softmax_nchw(vals, d);
    const long long hw2 = (long long)h * w;
    bool tie = false;
    for (int cc = 0; cc < c && !tie; ++cc) {
      std::vector<double> errs;
      for (long long ni = 0; ni < n; ++ni)
        for (long long i = 0; i < hw2; ++i) {
          const double y = target.v[(size_t)(ni * hw2 + i)] == cc ? 1.0 : 0.0;
          errs.push_back(std::abs(y - p[((size_t)ni * c + cc) * hw2 + i]));
        }
      std::sort(errs.begin(), errs.end());
      for (size_t i = 1; i < errs.size(); ++i)
        if (errs[i] - errs[i - 1] < 1e-6) tie = true;
    }
    if (!tie) return logits;
  }
  throw TensorError("verify: could not build tie-free lovasz instance");
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<CheckResult> run_gradcheck_suite(int instances_per_op, uint64_t seed) {
  Suite s;
  const int N = instances_per_op;

  s.gradcheck_op("grad.add", N, seed + 1, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2), b = rand_uniform<D>(sh, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(add(a, b), w)); }, {a, b});
  });
  s.gradcheck_op("grad.sub", N, seed + 2, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2), b = rand_uniform<D>(sh, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(sub(a, b), w)); }, {a, b});
  });
  s.gradcheck_op("grad.mul", N, seed + 3, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2), b = rand_uniform<D>(sh, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(mul(a, b), w)); }, {a, b});
  });
  s.gradcheck_op("grad.div", N, seed + 4, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto b = rand_uniform<D>(sh, rng, 0.5, 2.0);  // bounded away from zero
    if (rng.coin())
      for (long long i = 0; i < b.size(); ++i) b.ptr()[i] = -b.ptr()[i];
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(div(a, b), w)); }, {a, b});
  });
  s.gradcheck_op("grad.abs", N, seed + 5, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    // keep every element at least 0.05 away from the kink
    Tensor<D> a(sh);
    for (long long i = 0; i < a.size(); ++i)
      a.ptr()[i] = (rng.coin() ? 1 : -1) * rng.uniform(0.05, 2.0);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(abs(a), w)); }, {a});
  });
  s.gradcheck_op("grad.neg_scale_shift", N, seed + 6, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(add_scalar(mul_scalar(neg(a), D(1.7)), D(0.3)), w)); }, {a});
  });
  s.gradcheck_op("grad.exp", N, seed + 7, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 1.5);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(exp(a), w)); }, {a});
  });
  s.gradcheck_op("grad.pow_scalar", N, seed + 8, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, 0.1, 2.0);
    const D e = rng.coin() ? D(3) : D(1.5);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(pow_scalar(a, e), w)); }, {a});
  });
  s.gradcheck_op("grad.mul_scalar_tensor", N, seed + 9, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto g = rand_uniform<D>(Shape{1}, rng, -1.5, 1.5);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(mul_scalar_tensor(a, g), w)); }, {a, g});
  });
  s.gradcheck_op("grad.add_channel", N, seed + 10, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto v = rand_uniform<D>(Shape{sh[1]}, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(add_channel(a, v), w)); }, {a, v});
  });
  s.gradcheck_op("grad.scale_spatial", N, seed + 11, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto m = rand_uniform<D>(Shape{sh[0], 1, sh[2], sh[3]}, rng, -1.5, 1.5);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(scale_spatial(a, m), w)); }, {a, m});
  });
  s.gradcheck_op("grad.concat_slice", N, seed + 12, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    Shape sh2 = sh;
    sh2[1] = 1 + rng.uniform_int(3);
    auto b = rand_uniform<D>(sh2, rng, -2, 2);
    Shape catsh = sh;
    catsh[1] = sh[1] + sh2[1];
    auto w = rand_uniform<D>(catsh, rng, -1, 1);
    return gradcheck(
        [&]() {
          auto c = concat<D>({a, b}, 1);
          auto sl = slice(c, 1, 0, catsh[1] - 1);
          auto sl2 = slice(c, 1, catsh[1] - 1, 1);
          return add(sum_all(mul(c, w)), add(sum_all(sl), sum_all(sl2)));
        },
        {a, b});
  });
  s.gradcheck_op("grad.reshape_gather", N, seed + 13, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    const long long n = shape_numel(sh);
    std::vector<long long> idx;
    for (int i = 0; i < 10; ++i) idx.push_back(rng.uniform_int((int)n));
    auto w = rand_uniform<D>(Shape{10}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(gather(flatten(a), idx), w)); }, {a});
  });
  s.gradcheck_op("grad.reduce", N, seed + 14, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto w1 = rand_uniform<D>(Shape{sh[0], sh[2], sh[3]}, rng, -1, 1);
    auto w2 = rand_uniform<D>(Shape{sh[1]}, rng, -1, 1);
    return gradcheck(
        [&]() {
          auto r1 = reduce_sum(a, {1});
          auto r2 = reduce_mean(a, {0, 2, 3});
          return add(sum_all(mul(r1, w1)), sum_all(mul(r2, w2)));
        },
        {a});
  });
  s.gradcheck_op("grad.gelu", N, seed + 15, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -3, 3);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(gelu(a), w)); }, {a});
  });
  s.gradcheck_op("grad.sigmoid", N, seed + 16, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -4, 4);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(sigmoid(a), w)); }, {a});
  });
  s.gradcheck_op("grad.softmax", N, seed + 17, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    const int axis = rng.uniform_int(4);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(softmax(a, axis), w)); }, {a});
  });
  s.gradcheck_op("grad.log_softmax", N, seed + 18, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto a = rand_uniform<D>(sh, rng, -2, 2);
    auto w = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(log_softmax(a, 1), w)); }, {a});
  });
  s.gradcheck_op("grad.conv2d", N, seed + 19, [](Rng& rng) {
    const int n = 1 + rng.uniform_int(2), cin = 1 + rng.uniform_int(3), cout = 1 + rng.uniform_int(4);
    const int h = 5 + rng.uniform_int(4), w0 = 5 + rng.uniform_int(4);
    const int k = rng.coin() ? 3 : 1;
    const int stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
    auto x = rand_uniform<D>(Shape{n, cin, h, w0}, rng, -1, 1);
    auto w = rand_uniform<D>(Shape{cout, cin, k, k}, rng, -0.7, 0.7);
    auto b = rand_uniform<D>(Shape{cout}, rng, -0.3, 0.3);
    const int ho = (h + 2 * pad - k) / stride + 1, wo = (w0 + 2 * pad - k) / stride + 1;
    auto sw = rand_uniform<D>(Shape{n, cout, ho, wo}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(conv2d(x, w, b, stride, pad), sw)); }, {x, w, b});
  });
  s.gradcheck_op("grad.depthwise_conv2d", N, seed + 20, [](Rng& rng) {
    const int n = 1 + rng.uniform_int(2), c = 1 + rng.uniform_int(4);
    const int h = 5 + rng.uniform_int(4), w0 = 5 + rng.uniform_int(4);
    const int stride = 1 + rng.uniform_int(2);
    auto x = rand_uniform<D>(Shape{n, c, h, w0}, rng, -1, 1);
    auto w = rand_uniform<D>(Shape{c, 1, 3, 3}, rng, -0.7, 0.7);
    const int ho = (h + 2 - 3) / stride + 1, wo = (w0 + 2 - 3) / stride + 1;
    auto sw = rand_uniform<D>(Shape{n, c, ho, wo}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(depthwise_conv2d(x, w, stride, 1), sw)); }, {x, w});
  });
  s.gradcheck_op("grad.batchnorm_train", N, seed + 21, [](Rng& rng) {
    const int n = 2, c = 1 + rng.uniform_int(3), h = 3 + rng.uniform_int(3), w0 = 3 + rng.uniform_int(3);
    auto x = rand_uniform<D>(Shape{n, c, h, w0}, rng, -2, 2);
    auto gamma = rand_uniform<D>(Shape{c}, rng, 0.5, 1.5);
    auto beta = rand_uniform<D>(Shape{c}, rng, -0.5, 0.5);
    BatchNormState<D> state;
    state.init(c);
    auto sw = rand_uniform<D>(Shape{n, c, h, w0}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(batchnorm2d(x, gamma, beta, state, Mode::train), sw)); },
                     {x, gamma, beta});
  });
  s.gradcheck_op("grad.batchnorm_eval", N, seed + 22, [](Rng& rng) {
    const int n = 2, c = 1 + rng.uniform_int(3), h = 3 + rng.uniform_int(3), w0 = 3 + rng.uniform_int(3);
    auto x = rand_uniform<D>(Shape{n, c, h, w0}, rng, -2, 2);
    auto gamma = rand_uniform<D>(Shape{c}, rng, 0.5, 1.5);
    auto beta = rand_uniform<D>(Shape{c}, rng, -0.5, 0.5);
    BatchNormState<D> state;
    state.init(c);
    {
      auto warm = rand_uniform<D>(Shape{n, c, h, w0}, rng, -2, 2);
      batchnorm2d(warm, gamma, beta, state, Mode::train);
    }
    auto sw = rand_uniform<D>(Shape{n, c, h, w0}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(batchnorm2d(x, gamma, beta, state, Mode::eval), sw)); },
                     {x, gamma, beta});
  });
  s.gradcheck_op("grad.upsample_bilinear", N, seed + 23, [](Rng& rng) {
    const int f = rng.coin() ? 2 : 4;
    Shape sh{1 + rng.uniform_int(2), 1 + rng.uniform_int(3), 2 + rng.uniform_int(3), 2 + rng.uniform_int(3)};
    auto x = rand_uniform<D>(sh, rng, -2, 2);
    auto sw = rand_uniform<D>(Shape{sh[0], sh[1], sh[2] * f, sh[3] * f}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(upsample_bilinear(x, f), sw)); }, {x});
  });
  s.gradcheck_op("grad.linear", N, seed + 24, [](Rng& rng) {
    const int m = 2 + rng.uniform_int(5), k = 2 + rng.uniform_int(5), d = 2 + rng.uniform_int(5);
    auto x = rand_uniform<D>(Shape{m, k}, rng, -1, 1);
    auto w = rand_uniform<D>(Shape{d, k}, rng, -1, 1);
    auto b = rand_uniform<D>(Shape{d}, rng, -0.5, 0.5);
    auto sw = rand_uniform<D>(Shape{m, d}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(linear(x, w, b), sw)); }, {x, w, b});
  });
  s.gradcheck_op("grad.dropout_train", N, seed + 25, [](Rng& rng) {
    Shape sh = small_map_shape(rng);
    auto x = rand_uniform<D>(sh, rng, -2, 2);
    const uint64_t mask_seed = rng.next_u64();
    auto sw = rand_uniform<D>(sh, rng, -1, 1);
    return gradcheck(
        [&, mask_seed]() {
          Rng mask_rng(mask_seed);  // identical mask on every evaluation
          return sum_all(mul(dropout(x, 0.3, Mode::train, mask_rng), sw));
        },
        {x});
  });

  // module-level paths
  s.gradcheck_op("grad.adapter", N, seed + 26, [](Rng& rng) {
    const int c = 4 + rng.uniform_int(4);
    ParamSet<D> ps;
    auto ad = make_adapter(ps, "a", c, 2, rng);
    ad.gate.ptr()[0] = rng.uniform(-1, 1);  // exercise a live gate
    auto x = rand_uniform<D>(Shape{1, c, 4, 4}, rng, -1, 1);
    auto sw = rand_uniform<D>(Shape{1, c, 4, 4}, rng, -1, 1);
    return gradcheck([&]() { return sum_all(mul(ad.forward(x), sw)); }, {x, ad.w_down, ad.w_up, ad.gate});
  });
  s.gradcheck_op("grad.lora_branch", N, seed + 27, [](Rng& rng) {
    const int cin = 4 + rng.uniform_int(3), cout = 4 + rng.uniform_int(3);
    ParamSet<D> ps;
    auto pc = make_pointwise(ps, "h", cin, cout, rng, ParamGroup::frozen);
    attach_lora(ps, pc, "l", 2, 4.0, 0.0, rng);
    for (long long i = 0; i < pc.lora_b.size(); ++i) pc.lora_b.ptr()[i] = rng.uniform(-0.5, 0.5);
    auto x = rand_uniform<D>(Shape{1, cin, 4, 4}, rng, -1, 1);
    auto sw = rand_uniform<D>(Shape{1, cout, 4, 4}, rng, -1, 1);
    Rng fwd_rng(1);
    return gradcheck([&]() { return sum_all(mul(pc.forward(x, Mode::eval, fwd_rng), sw)); },
                     {x, pc.lora_a, pc.lora_b});
  });
  s.gradcheck_op("grad.prompts", N, seed + 28, [](Rng& rng) {
    const int ch2 = 3, ch3 = 4, ch4 = 5, p = 2;
    ParamSet<D> ps;
    auto pt = make_prompts(ps, "p", p, ch2, ch3, ch4, rng);
    for (long long i = 0; i < pt.tokens.size(); ++i) pt.tokens.ptr()[i] = rng.uniform(-1, 1);
    std::array<Tensor<D>, 3> feats = {rand_uniform<D>(Shape{1, ch2, 4, 4}, rng, -1, 1),
                                      rand_uniform<D>(Shape{1, ch3, 2, 2}, rng, -1, 1),
                                      rand_uniform<D>(Shape{1, ch4, 2, 2}, rng, -1, 1)};
    std::array<Tensor<D>, 3> sw = {rand_uniform<D>(Shape{1, ch2, 4, 4}, rng, -1, 1),
                                   rand_uniform<D>(Shape{1, ch3, 2, 2}, rng, -1, 1),
                                   rand_uniform<D>(Shape{1, ch4, 2, 2}, rng, -1, 1)};
    return gradcheck(
        [&]() {
          auto out = inject_prompts(feats, pt);
          Tensor<D> loss = sum_all(mul(out[0], sw[0]));
          loss = add(loss, sum_all(mul(out[1], sw[1])));
          return add(loss, sum_all(mul(out[2], sw[2])));
        },
        {pt.tokens, pt.proj[0], pt.proj[1], pt.proj[2], feats[0], feats[1], feats[2]});
  });
  s.gradcheck_op("grad.mscad_end_to_end", std::max(5, instances_per_op / 2), seed + 29, [](Rng& rng) {
    MscadConfig mc;
    mc.common_dim = 3;
    ParamSet<D> ps;
    Mscad<D> m(mc, {3, 4, 5}, ps, rng);
    auto c3a = rand_uniform<D>(Shape{1, 3, 4, 4}, rng, -1, 1);
    auto c4a = rand_uniform<D>(Shape{1, 4, 2, 2}, rng, -1, 1);
    auto c5a = rand_uniform<D>(Shape{1, 5, 1, 1}, rng, -1, 1);
    auto c3b = rand_uniform<D>(Shape{1, 3, 4, 4}, rng, -1, 1);
    auto c4b = rand_uniform<D>(Shape{1, 4, 2, 2}, rng, -1, 1);
    auto c5b = rand_uniform<D>(Shape{1, 5, 1, 1}, rng, -1, 1);
    auto sw = rand_uniform<D>(Shape{1, 3, 8, 8}, rng, -1, 1);
    std::vector<Tensor<D>> inputs = {c3a, c4a, c5a, c3b, c4b, c5b};
    for (const auto& e : ps.entries)
      if (!e.buffer) inputs.push_back(e.tensor);
    return gradcheck(
        [&]() {
          typename Backbone<D>::Features f1{Tensor<D>(), c3a, c4a, c5a};
          typename Backbone<D>::Features f2{Tensor<D>(), c3b, c4b, c5b};
          return sum_all(mul(m.forward(f1, f2, Mode::train), sw));
        },
        inputs);
  });
  s.gradcheck_op("grad.decoder_enhance_gate", std::max(5, instances_per_op / 2), seed + 30, [](Rng& rng) {
    DecoderConfig dc;
    dc.in_channels = 3;
    dc.num_classes = 3;
    ParamSet<D> ps;
    Decoder<D> dec(dc, ps, rng);
    auto x = rand_uniform<D>(Shape{1, 3, 4, 4}, rng, -1, 1);
    auto sw = rand_uniform<D>(Shape{1, 3, 16, 16}, rng, -1, 1);
    std::vector<Tensor<D>> inputs = {x};
    for (const auto& e : ps.entries)
      if (!e.buffer) inputs.push_back(e.tensor);
    return gradcheck([&]() { return sum_all(mul(dec.forward(x, Mode::train), sw)); }, inputs);
  });

  // losses on (1,3,4,4) instances
  s.gradcheck_op("grad.focal_loss", N, seed + 31, [](Rng& rng) {
    auto logits = rand_uniform<D>(Shape{1, 3, 4, 4}, rng, -2, 2);
    LabelMap t = random_target(rng, 1, 3, 4, 4);
    LossConfig cfg;
    return gradcheck([&]() { return focal_loss(logits, t, cfg); }, {logits});
  });
  s.gradcheck_op("grad.dice_loss", N, seed + 32, [](Rng& rng) {
    auto logits = rand_uniform<D>(Shape{1, 3, 4, 4}, rng, -2, 2);
    LabelMap t = random_target(rng, 1, 3, 4, 4);
    LossConfig cfg;
    return gradcheck([&]() { return dice_loss(logits, t, cfg); }, {logits});
  });
  s.gradcheck_op("grad.lovasz_softmax", N, seed + 33, [](Rng& rng) {
    LabelMap t = random_target(rng, 1, 3, 4, 4);
    auto logits = lovasz_safe_logits(rng, 1, 3, 4, 4, t);
    LossConfig cfg;
    return gradcheck([&]() { return lovasz_softmax(logits, t, cfg); }, {logits});
  });
  s.gradcheck_op("grad.composite_loss", N, seed + 34, [](Rng& rng) {
    LabelMap t = random_target(rng, 1, 3, 4, 4);
    auto logits = lovasz_safe_logits(rng, 1, 3, 4, 4, t);
    LossConfig cfg;
    return gradcheck([&]() { return composite_loss(logits, t, cfg); }, {logits});
  });

  return s.results;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> run_oracle_suite(uint64_t seed) {
  Suite s;
  Rng top(seed);

  // conv against the 6-loop reference
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(100 + (uint64_t)i);
      const int n = 1 + rng.uniform_int(2), cin = 1 + rng.uniform_int(3), cout = 1 + rng.uniform_int(4);
      const int h = 5 + rng.uniform_int(4), w0 = 5 + rng.uniform_int(4);
      const int k = rng.coin() ? 3 : 1, stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
      auto x = rand_uniform<D>(Shape{n, cin, h, w0}, rng, -2, 2);
      auto w = rand_uniform<D>(Shape{cout, cin, k, k}, rng, -1, 1);
      auto b = rand_uniform<D>(Shape{cout}, rng, -0.5, 0.5);
      auto out = conv2d(x, w, b, stride, pad);
      reference::Dims4 od{};
      auto ref = reference::conv2d(std::vector<double>(x.ptr(), x.ptr() + x.size()), {n, cin, h, w0},
                                   std::vector<double>(w.ptr(), w.ptr() + w.size()), cout, k, k,
                                   std::vector<double>(b.ptr(), b.ptr() + b.size()), stride, pad, od);
      for (long long j = 0; j < out.size(); ++j) worst = std::max(worst, std::abs(out.ptr()[j] - ref[(size_t)j]));
    }
    s.add("oracle.conv2d_vs_direct", worst <= 1e-10, "max_abs_diff=" + fmt(worst));
  }
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(200 + (uint64_t)i);
      const int n = 1 + rng.uniform_int(2), c = 1 + rng.uniform_int(4);
      const int h = 5 + rng.uniform_int(4), w0 = 5 + rng.uniform_int(4);
      auto x = rand_uniform<D>(Shape{n, c, h, w0}, rng, -2, 2);
      auto w = rand_uniform<D>(Shape{c, 1, 3, 3}, rng, -1, 1);
      auto out = depthwise_conv2d(x, w, 1, 1);
      reference::Dims4 od{};
      auto ref = reference::depthwise_conv2d(std::vector<double>(x.ptr(), x.ptr() + x.size()), {n, c, h, w0},
                                             std::vector<double>(w.ptr(), w.ptr() + w.size()), 3, 3, 1, 1, od);
      for (long long j = 0; j < out.size(); ++j) worst = std::max(worst, std::abs(out.ptr()[j] - ref[(size_t)j]));
    }
    s.add("oracle.depthwise_vs_direct", worst <= 1e-10, "max_abs_diff=" + fmt(worst));
  }

  // softmax slices: nonnegative, sum to 1
  {
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(300 + (uint64_t)i);
      Shape sh = small_map_shape(rng);
      auto p = softmax(rand_uniform<D>(sh, rng, -5, 5), 1);
      const long long hw = (long long)sh[2] * sh[3];
      for (int n = 0; n < sh[0]; ++n)
        for (long long j = 0; j < hw; ++j) {
          double sum = 0;
          for (int c = 0; c < sh[1]; ++c) {
            const double v = p.ptr()[((long long)n * sh[1] + c) * hw + j];
            ok = ok && v >= 0.0;
            sum += v;
          }
          worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    s.add("oracle.softmax_simplex", ok && worst <= 1e-6, "max_dev=" + fmt(worst));
  }

  // lovasz against the brute-force definition, 200 tiny instances
  {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      Rng rng = top.fork(400 + (uint64_t)i);
      const int c = 2 + rng.uniform_int(2);   // 2..3 classes
      const int w0 = 1 + rng.uniform_int(6);  // 1..6 pixels
      auto logits = rand_uniform<D>(Shape{1, c, 1, w0}, rng, -3, 3);
      LabelMap t = random_target(rng, 1, c, 1, w0);
      LossConfig cfg;
      const double got = lovasz_softmax(logits, t, cfg).ptr()[0];
      const double want = reference::lovasz_softmax(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()),
                                                    {1, c, 1, w0}, t);
      worst = std::max(worst, std::abs(got - want));
    }
    s.add("oracle.lovasz_vs_bruteforce", worst <= 1e-9, "max_abs_diff=" + fmt(worst) + " over 200 instances");
  }

  // focal with gamma=0, alpha=1 equals cross-entropy
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(500 + (uint64_t)i);
      auto logits = rand_uniform<D>(Shape{2, 4, 4, 4}, rng, -3, 3);
      LabelMap t = random_target(rng, 2, 4, 4, 4);
      LossConfig cfg;
      cfg.focal_gamma = 0.0;
      const double got = focal_loss(logits, t, cfg).ptr()[0];
      const double want =
          reference::cross_entropy(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()), {2, 4, 4, 4}, t);
      worst = std::max(worst, std::abs(got - want));
    }
    s.add("oracle.focal_gamma0_is_ce", worst <= 1e-12, "max_abs_diff=" + fmt(worst));
  }

  // focal single-pixel closed form: p_t = 1/2, gamma = 3 -> (1/8) ln 2
  {
    auto logits = Tensor<D>::from(Shape{1, 2, 1, 1}, {0.0, 0.0});
    LabelMap t(1, 1, 1);
    LossConfig cfg;
    const double got = focal_loss(logits, t, cfg).ptr()[0];
    const double want = 0.125 * std::log(2.0);
    s.add("oracle.focal_halfprob_pixel", std::abs(got - want) <= 1e-12,
          "got=" + fmt(got) + " want=" + fmt(want));
  }

  // dice against direct-formula evaluation
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(600 + (uint64_t)i);
      auto logits = rand_uniform<D>(Shape{2, 3, 4, 4}, rng, -3, 3);
      LabelMap t = random_target(rng, 2, 3, 4, 4);
      LossConfig cfg;
      const double got = dice_loss(logits, t, cfg).ptr()[0];
      const double want = reference::dice(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()),
                                          {2, 3, 4, 4}, t, cfg.dice_eps);
      worst = std::max(worst, std::abs(got - want));
    }
    s.add("oracle.dice_vs_direct", worst <= 1e-12, "max_abs_diff=" + fmt(worst));
  }

  // composite equals the weighted sum of separately computed terms
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng = top.fork(700 + (uint64_t)i);
      LabelMap t = random_target(rng, 1, 3, 4, 4);
      auto logits = lovasz_safe_logits(rng, 1, 3, 4, 4, t);
      LossConfig cfg;
      const double got = composite_loss(logits, t, cfg).ptr()[0];
      const double want = 0.4 * focal_loss(logits, t, cfg).ptr()[0] + 0.3 * dice_loss(logits, t, cfg).ptr()[0] +
                          0.3 * lovasz_softmax(logits, t, cfg).ptr()[0];
      worst = std::max(worst, std::abs(got - want));
    }
    s.add("oracle.composite_is_weighted_sum", worst <= 1e-12, "max_abs_diff=" + fmt(worst));
  }

  // confusion matrix and ratio metrics against per-pixel counting
  {
    bool counts_ok = true;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      Rng rng = top.fork(800 + (uint64_t)i);
      const int K = 6;
      LabelMap pred = random_target(rng, 1, K + 1, 16, 16);
      LabelMap gt = random_target(rng, 1, K + 1, 16, 16);
      ConfusionMatrix cm(K + 1);
      cm.update(pred, gt);
      auto ref_counts = reference::confusion_counts(pred, gt, K + 1);
      for (int a = 0; a < K + 1; ++a)
        for (int b = 0; b < K + 1; ++b) counts_ok = counts_ok && cm.at(a, b) == ref_counts[(size_t)a * (K + 1) + b];

      MetricReport rep = compute_metrics(cm);
      // recompute every ratio from the raw counts
      long long total = 0, diag = 0;
      for (int a = 0; a < K + 1; ++a)
        for (int b = 0; b < K + 1; ++b) total += ref_counts[(size_t)a * (K + 1) + b];
      for (int a = 0; a < K + 1; ++a) diag += ref_counts[(size_t)a * (K + 1) + a];
      worst = std::max(worst, std::abs(rep.oa - (double)diag / total));
      double miou = 0;
      int counted = 0;
      for (int c = 1; c < K + 1; ++c) {
        long long tp = ref_counts[(size_t)c * (K + 1) + c], fp = 0, fn = 0;
        for (int j = 0; j < K + 1; ++j) {
          if (j == c) continue;
          fp += ref_counts[(size_t)c * (K + 1) + j];
          fn += ref_counts[(size_t)j * (K + 1) + c];
        }
        const double p = tp + fp > 0 ? (double)tp / (tp + fp) : 0.0;
        const double r = tp + fn > 0 ? (double)tp / (tp + fn) : 0.0;
        const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        worst = std::max(worst, std::abs(rep.per_class[(size_t)c].precision - p));
        worst = std::max(worst, std::abs(rep.per_class[(size_t)c].recall - r));
        worst = std::max(worst, std::abs(rep.per_class[(size_t)c].f1 - f1));
        if (tp + fp + fn > 0) {
          miou += (double)tp / (tp + fp + fn);
          ++counted;
        }
      }
      if (counted) worst = std::max(worst, std::abs(rep.miou_changed - miou / counted));
    }
    s.add("oracle.metrics_vs_counting", counts_ok && worst <= 1e-12,
          std::string("counts ") + (counts_ok ? "exact" : "MISMATCH") + ", max_ratio_diff=" + fmt(worst));
  }

  // binary F1 equals the Dice coefficient of the hard masks
  {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      Rng rng = top.fork(900 + (uint64_t)i);
      LabelMap pred = random_target(rng, 1, 2, 8, 8);
      LabelMap gt = random_target(rng, 1, 2, 8, 8);
      ConfusionMatrix cm(2);
      cm.update(pred, gt);
      MetricReport rep = compute_metrics(cm);
      long long tp = 0, fp = 0, fn = 0;
      for (long long j = 0; j < pred.size(); ++j) {
        if (pred.v[(size_t)j] == 1 && gt.v[(size_t)j] == 1) ++tp;
        if (pred.v[(size_t)j] == 1 && gt.v[(size_t)j] == 0) ++fp;
        if (pred.v[(size_t)j] == 0 && gt.v[(size_t)j] == 1) ++fn;
      }
      if (2 * tp + fp + fn == 0) continue;
      const double dice_coef = 2.0 * tp / (2.0 * tp + fp + fn);
      worst = std::max(worst, std::abs(rep.per_class[1].f1 - dice_coef));
    }
    s.add("oracle.binary_f1_is_dice", worst <= 1e-12, "max_abs_diff=" + fmt(worst));
  }

  // schedule against the closed form; restarts at 30 and 90
  {
    double worst = 0.0;
    Rng rng = top.fork(1000);
    for (int i = 0; i < 1000; ++i) {
      const double e = rng.uniform(0.0, 500.0);
      worst = std::max(worst, std::abs(lr_at(e, 3e-4, 30, 2, 1e-7) -
                                       reference::lr_closed_form(e, 3e-4, 30, 2, 1e-7)));
    }
    const bool restarts = lr_at(0, 3e-4, 30, 2, 1e-7) == 3e-4 && lr_at(30, 3e-4, 30, 2, 1e-7) == 3e-4 &&
                          lr_at(90, 3e-4, 30, 2, 1e-7) == 3e-4;
    const double mid = lr_at(15, 3e-4, 30, 2, 1e-7);
    const double mid_want = 1e-7 + 0.5 * (3e-4 - 1e-7);
    s.add("oracle.lr_schedule", worst <= 1e-12 && restarts && std::abs(mid - mid_want) <= 1e-12,
          "max_abs_diff=" + fmt(worst) + " over 1000 samples, restarts at 30/90 " + (restarts ? "exact" : "WRONG"));
  }

  // optimizer against the scalar sequence
  {
    Rng rng = top.fork(1100);
    ParamSet<D> ps;
    Tensor<D> p = ps.add("w", Tensor<D>(Shape{1}, 0.7), ParamGroup::decoder);
    AdamW<D> opt(ps, 0.9, 0.999, 1e-8, 0.01);
    reference::AdamWScalar ref;
    double ref_p = 0.7;
    double worst = 0.0;
    GroupLr glr{};
    glr[(size_t)ParamGroup::decoder] = 1e-2;
    for (int i = 0; i < 10; ++i) {
      const double g = rng.uniform(-1, 1);
      p.zero_grad();
      p.grad()[0] = g;
      opt.step(ps, glr);
      ref.step(ref_p, g, 1e-2, 0.9, 0.999, 1e-8, 0.01);
      worst = std::max(worst, std::abs(p.ptr()[0] - ref_p));
    }
    // single-step closed form: g=1, wd=0 -> update = -lr / (1 + eps)
    ParamSet<D> ps2;
    Tensor<D> q = ps2.add("w", Tensor<D>(Shape{1}, 0.0), ParamGroup::decoder);
    AdamW<D> opt2(ps2, 0.9, 0.999, 1e-8, 0.0);
    q.zero_grad();
    q.grad()[0] = 1.0;
    opt2.step(ps2, glr);
    const double want = -1e-2 / (1.0 + 1e-8);
    s.add("oracle.adamw_scalar", worst <= 1e-15 && std::abs(q.ptr()[0] - want) <= 1e-15,
          "max_abs_diff=" + fmt(worst) + " one_step_err=" + fmt(std::abs(q.ptr()[0] - want)));
  }

  // conversion rule on random semantic pairs
  {
    bool ok = true;
    for (int i = 0; i < 50; ++i) {
      Rng rng = top.fork(1200 + (uint64_t)i);
      LabelMap a = random_target(rng, 1, 5, 8, 8);
      LabelMap b = random_target(rng, 1, 5, 8, 8);
      LabelMap got = scd_to_mcd(a, b);
      LabelMap want = reference::scd_to_mcd_rule(a, b);
      ok = ok && got.v == want.v;
      // unchanged set maps to zero
      for (long long j = 0; j < a.size(); ++j)
        if (a.v[(size_t)j] == b.v[(size_t)j]) ok = ok && got.v[(size_t)j] == 0;
    }
    s.add("oracle.scd_to_mcd_rule", ok, "50 random pairs, exact");
  }

  return s.results;
}

// ---------------------------------------------------------------------------

namespace {

ModelConfig tiny_model_config(uint64_t init_seed) {
  ModelConfig mc;
  mc.backbone.stage_channels = {8, 12, 16, 24};
  mc.backbone.blocks_per_stage = {1, 1, 2, 1};
  mc.backbone.lora_rank = 2;
  mc.backbone.lora_alpha = 4.0;
  mc.backbone.lora_dropout = 0.1;
  mc.backbone.adapter_reduction = 4;
  mc.backbone.prompt_count = 4;
  mc.backbone.init_seed = init_seed;
  mc.mscad.common_dim = 8;
  mc.num_classes = 4;
  return mc;
}

bool bits_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.ptr(), b.ptr(), (size_t)a.size() * sizeof(float)) == 0;
}

}  // namespace

std::vector<CheckResult> run_model_suite(uint64_t seed) {
  Suite s;
  Rng top(seed);

  // identity at init: enhanced forward == plain trunk forward, bitwise
  {
    ModelConfig mc = tiny_model_config(seed);
    ParamSet<float> ps;
    Rng init(mc.backbone.init_seed);
    Backbone<float> bb(mc.backbone, ps, init);
    bool ok = true;
    for (int i = 0; i < 10; ++i) {
      Rng rng = top.fork(10 + (uint64_t)i);
      auto img = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
      Rng fwd(0);
      auto enhanced = bb.forward(img, Mode::eval, fwd);
      auto plain = bb.forward_trunk(img);
      ok = ok && bits_equal(enhanced.c2, plain.c2) && bits_equal(enhanced.c3, plain.c3) &&
           bits_equal(enhanced.c4, plain.c4) && bits_equal(enhanced.c5, plain.c5);
    }
    s.add("model.identity_at_init", ok, "10 images, all four stages bit-identical");
  }

  // siamese weight sharing: identical inputs give bit-identical outputs
  {
    ModelConfig mc = tiny_model_config(seed + 1);
    ParamSet<float> ps;
    Rng init(mc.backbone.init_seed);
    Backbone<float> bb(mc.backbone, ps, init);
    Rng rng = top.fork(50);
    auto img = rand_uniform<float>(Shape{2, 3, 64, 64}, rng, 0, 1);
    Rng f1(0), f2(0);
    auto a = bb.forward(img, Mode::eval, f1);
    auto b = bb.forward(img, Mode::eval, f2);
    s.add("model.siamese_sharing", bits_equal(a.c5, b.c5) && bits_equal(a.c2, b.c2), "two calls, same weights");
  }

  // stage stride and channel contract on the desk default config
  {
    BackboneConfig bc;  // desk defaults 32/64/128/256, blocks 1/1/2/1
    ParamSet<float> ps;
    Rng init(bc.init_seed);
    Backbone<float> bb(bc, ps, init);
    Rng rng = top.fork(60);
    auto img = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
    Rng fwd(0);
    auto f = bb.forward(img, Mode::eval, fwd);
    const bool ok = f.c2.shape() == Shape{1, 32, 16, 16} && f.c3.shape() == Shape{1, 64, 8, 8} &&
                    f.c4.shape() == Shape{1, 128, 4, 4} && f.c5.shape() == Shape{1, 256, 2, 2};
    s.add("model.stage_contract", ok, "strides 4/8/16/32 at channels 32/64/128/256");
  }

  // frozen draws are reproducible; trainable set is adapters + prompts + lora
  {
    BackboneConfig bc;
    ParamSet<float> ps1, ps2;
    Rng i1(bc.init_seed), i2(bc.init_seed);
    Backbone<float> b1(bc, ps1, i1), b2(bc, ps2, i2);
    bool frozen_same = ps1.count(ParamGroup::frozen) == ps2.count(ParamGroup::frozen);
    bool groups_ok = true;
    for (size_t i = 0; i < ps1.entries.size() && frozen_same; ++i) {
      const auto& e1 = ps1.entries[i];
      const auto& e2 = ps2.entries[i];
      if (e1.group == ParamGroup::frozen && !e1.buffer)
        frozen_same = frozen_same && e1.name == e2.name && bits_equal(e1.tensor, e2.tensor);
    }
    for (const auto& e : ps1.entries) {
      if (e.buffer) continue;
      const bool trainable = e.tensor.requires_grad();
      const bool plugin = e.group == ParamGroup::adapter || e.group == ParamGroup::prompt || e.group == ParamGroup::lora;
      groups_ok = groups_ok && trainable == plugin;
    }
    s.add("model.frozen_reproducible", frozen_same, "same seed, bit-identical frozen tensors");
    s.add("model.trainable_set", groups_ok, "trainable == adapters + prompts + lora in the encoder");
  }

  // lora parameter count: r * sum(d+k) and linearity across ranks
  {
    auto lora_count = [](int r) {
      BackboneConfig bc;
      bc.lora_rank = r;
      bc.lora_alpha = 2.0 * r;
      ParamSet<float> ps;
      Rng init(bc.init_seed);
      Backbone<float> bb(bc, ps, init);
      return ps.count(ParamGroup::lora);
    };
    // adapted matrices: pw1 (4C x C) and pw2 (C x 4C) of the last 4 blocks
    BackboneConfig bc;
    int total_blocks = 0;
    for (int v : bc.blocks_per_stage) total_blocks += v;
    long long sum_dk = 0;
    int gi = 0;
    for (int st = 0; st < 4; ++st)
      for (int bIdx = 0; bIdx < bc.blocks_per_stage[(size_t)st]; ++bIdx, ++gi) {
        if (gi < total_blocks - kLoraBlocks) continue;
        const long long c = bc.stage_channels[(size_t)st];
        sum_dk += 2 * (c + kTrunkExpansion * c);  // both pointwise convs
      }
    bool ok = true;
    std::ostringstream detail;
    long long prev = -1;
    int prev_r = 0;
    for (int r : {4, 8, 16, 24, 32}) {
      const long long n = lora_count(r);
      ok = ok && n == (long long)r * sum_dk;
      if (prev >= 0) ok = ok && (n - prev) == (long long)(r - prev_r) * sum_dk;
      detail << "r=" << r << ":" << n << " ";
      prev = n;
      prev_r = r;
    }
    detail << "(slope " << sum_dk << ")";
    s.add("model.lora_count_linear", ok, detail.str());
  }

  // decoder gate never amplifies: 0 <= F/Y <= 1 off zero
  {
    Rng rng = top.fork(70);
    auto y = rand_uniform<float>(Shape{2, 3, 6, 6}, rng, -4, 4);
    auto f = Decoder<float>::attention_gate(y);
    bool ok = true;
    for (long long i = 0; i < y.size(); ++i) {
      const float yy = y.ptr()[i], ff = f.ptr()[i];
      if (yy != 0.0f) {
        const float ratio = ff / yy;
        ok = ok && ratio >= 0.0f && ratio <= 1.0f;
      }
    }
    s.add("model.gate_attenuates", ok, "sigmoid self-gate ratio within [0,1]");
  }

  // full forward: logits at input resolution, finite everywhere
  {
    ModelConfig mc = tiny_model_config(seed + 2);
    ChangeModel<float> model(mc);
    Rng rng = top.fork(80);
    auto t1 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
    auto t2 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
    Rng fwd(1);
    auto logits = model.forward(t1, t2, Mode::train, fwd);
    bool ok = logits.shape() == Shape{1, mc.num_classes, 64, 64};
    for (long long i = 0; i < logits.size() && ok; ++i) ok = std::isfinite(logits.ptr()[i]);
    s.add("model.full_forward", ok, "logits " + shape_str(logits.shape()) + ", finite");
  }

  return s.results;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> run_format_suite(const std::filesystem::path& tmp_dir, uint64_t seed) {
  Suite s;
  namespace fs = std::filesystem;
  fs::create_directories(tmp_dir);

  // checkpoint round trip restores bit-identical tensors and forwards
  {
    ModelConfig mc = tiny_model_config(seed);
    ChangeModel<float> m1(mc);
    Rng noise(seed + 9);
    for (auto& e : m1.params().entries)
      if (!e.buffer)
        for (long long i = 0; i < e.tensor.size(); ++i) e.tensor.ptr()[i] += (float)noise.uniform(-0.01, 0.01);
    AdamW<float> opt(m1.params(), 0.9, 0.999, 1e-8, 0.01);
    {
      // one train-mode forward so normalization statistics exist
      Rng rng(seed + 2);
      auto w1 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
      auto w2 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
      Rng fwd(1);
      m1.forward(w1, w2, Mode::train, fwd);
    }
    const fs::path ck = tmp_dir / "roundtrip.ckpt";
    save_checkpoint(ck, m1.params(), &opt, 12, 0xabcdefULL);

    ChangeModel<float> m2(mc);
    AdamW<float> opt2(m2.params(), 0.9, 0.999, 1e-8, 0.01);
    int epoch = -1;
    uint64_t hash = 0;
    load_checkpoint(ck, m2.params(), &opt2, &epoch, &hash);

    bool ok = epoch == 12 && hash == 0xabcdefULL;
    for (size_t i = 0; i < m1.params().entries.size() && ok; ++i)
      ok = bits_equal(m1.params().entries[i].tensor, m2.params().entries[i].tensor);

    Rng rng(seed + 1);
    auto t1 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
    auto t2 = rand_uniform<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
    Rng f1(3), f2(3);
    ok = ok && bits_equal(m1.forward(t1, t2, Mode::eval, f1), m2.forward(t1, t2, Mode::eval, f2));

    // second save of the loaded state is byte-identical
    const fs::path ck2 = tmp_dir / "roundtrip2.ckpt";
    save_checkpoint(ck2, m2.params(), &opt2, 12, 0xabcdefULL);
    std::ifstream a(ck, std::ios::binary), b(ck2, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    ok = ok && ba == bb;
    s.add("format.checkpoint_roundtrip", ok, "bit-exact tensors, forwards and re-saved bytes");
  }

  // dataset write -> load is pixel-exact; regeneration is byte-identical
  {
    SynthSpec spec;
    spec.count = 3;
    spec.size = 32;
    spec.k = 3;
    spec.seed = seed + 2;
    const fs::path d1 = tmp_dir / "synth_a", d2 = tmp_dir / "synth_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    DatasetManifest m1 = synth_generate(spec, d1);
    DatasetManifest m2 = synth_generate(spec, d2);

    bool ok = true;
    for (const std::string& id : m1.train_ids) {
      BiTemporalSample s1 = load_sample(m1, "train", id);
      ok = ok && s1.t1.pixels == load_sample(m2, "train", id).t1.pixels;
      // label support equals the changed-pixel set by construction
      for (int y = 0; y < s1.label.h && ok; ++y)
        for (int x = 0; x < s1.label.w && ok; ++x) {
          bool differs = false;
          for (int c = 0; c < 3; ++c) differs = differs || s1.t1.at(y, x, c) != s1.t2.at(y, x, c);
          ok = (s1.label.at(y, x) != 0) == differs;
        }
    }
    // byte-level comparison of the generated trees
    for (auto it = fs::recursive_directory_iterator(d1); it != fs::recursive_directory_iterator(); ++it) {
      if (!it->is_regular_file()) continue;
      const fs::path rel = fs::relative(it->path(), d1);
      std::ifstream a(it->path(), std::ios::binary), b(d2 / rel, std::ios::binary);
      std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
      std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
      ok = ok && !ba.empty() && ba == bb;
    }
    s.add("format.dataset_roundtrip", ok, "pixel-exact reload, byte-identical regeneration");
  }

  // config canonical round trip, unknown keys rejected
  {
    Config c;
    c.lora_r = 8;
    c.lora_alpha = 16;
    c.seed = 777;
    Config back = parse_config_text(serialize_config(c));
    bool ok = serialize_config(back) == serialize_config(c) && config_hash(back) == config_hash(c);
    bool rejected = false;
    try {
      parse_config_text("definitely_not_a_key=1\n");
    } catch (const ConfigError&) {
      rejected = true;
    }
    s.add("format.config_roundtrip", ok && rejected, "canonical text stable, unknown key rejected");
  }

  return s.results;
}

int report(const std::vector<CheckResult>& results) {
  int failures = 0;
  for (const auto& r : results) {
    std::printf("[%s] %-32s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    if (!r.pass) ++failures;
  }
  return failures;
}

}  // namespace mcd::verify
