#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "mcd/backbone.hpp"
#include "mcd/gradcheck.hpp"

using namespace mcd;

namespace {

BackboneConfig desk_config() {
  BackboneConfig c;  // 32/64/128/256, blocks 1/1/2/1
  return c;
}

template <typename T>
bool bits_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), (size_t)a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_CASE("default desk config builds with the right trainable partition") {
  ParamSet<float> ps;
  Rng rng(1);
  Backbone<float> bb(desk_config(), ps, rng);
  CHECK(ps.count(ParamGroup::frozen) > 0);
  CHECK(ps.count(ParamGroup::adapter) > 0);
  CHECK(ps.count(ParamGroup::prompt) > 0);
  CHECK(ps.count(ParamGroup::lora) > 0);
  for (const auto& e : ps.entries) {
    if (e.buffer) continue;
    const bool plugin =
        e.group == ParamGroup::adapter || e.group == ParamGroup::prompt || e.group == ParamGroup::lora;
    CHECK(e.tensor.requires_grad() == plugin);
  }
}

TEST_CASE("frozen parameter count is seed-invariant across builds") {
  ParamSet<float> p1, p2;
  Rng r1(7), r2(7);
  Backbone<float> b1(desk_config(), p1, r1);
  Backbone<float> b2(desk_config(), p2, r2);
  CHECK(p1.count(ParamGroup::frozen) == p2.count(ParamGroup::frozen));
  for (size_t i = 0; i < p1.entries.size(); ++i)
    if (p1.entries[i].group == ParamGroup::frozen && !p1.entries[i].buffer)
      CHECK(bits_equal(p1.entries[i].tensor, p2.entries[i].tensor));
}

TEST_CASE("low-rank trainable count is r*(d+k) per adapted matrix") {
  // one host matrix d = k = 8, rank 2 -> 2 * (8 + 8) = 32
  ParamSet<float> ps;
  Rng rng(2);
  auto pc = make_pointwise(ps, "h", 8, 8, rng, ParamGroup::frozen);
  attach_lora(ps, pc, "l", 2, 4.0, 0.0, rng);
  CHECK(ps.count(ParamGroup::lora) == 32);
}

TEST_CASE("lora rank exceeding the host dimension is a config error") {
  ParamSet<float> ps;
  Rng rng(3);
  auto pc = make_pointwise(ps, "h", 4, 16, rng, ParamGroup::frozen);
  CHECK_THROWS_AS(attach_lora(ps, pc, "l", 5, 10.0, 0.0, rng), ConfigError);

  BackboneConfig bad = desk_config();
  bad.lora_rank = 65;  // min adapted dimension on the desk config is 64
  ParamSet<float> ps2;
  Rng rng2(4);
  CHECK_THROWS_AS(Backbone<float>(bad, ps2, rng2), ConfigError);
}

TEST_CASE("fresh adapter is the exact identity") {
  ParamSet<float> ps;
  Rng rng(5);
  auto ad = make_adapter(ps, "a", 8, 4, rng);
  CHECK(ad.gate.ptr()[0] == 0.0f);
  auto x = rand_uniform<float>({2, 8, 4, 4}, rng, -2, 2);
  auto y = ad.forward(x);
  CHECK(bits_equal(x, y));
}

TEST_CASE("adapter with unit gate and zero projections is the identity") {
  ParamSet<float> ps;
  Rng rng(6);
  auto ad = make_adapter(ps, "a", 8, 4, rng);
  ad.gate.ptr()[0] = 1.0f;
  std::fill(ad.w_down.ptr(), ad.w_down.ptr() + ad.w_down.size(), 0.0f);
  std::fill(ad.w_up.ptr(), ad.w_up.ptr() + ad.w_up.size(), 0.0f);
  auto x = rand_uniform<float>({1, 8, 3, 3}, rng, -2, 2);
  auto y = ad.forward(x);
  for (long long i = 0; i < x.size(); ++i) CHECK(y.ptr()[i] == x.ptr()[i]);
}

TEST_CASE("fresh low-rank branch contributes exactly nothing") {
  ParamSet<float> ps;
  Rng rng(7);
  auto pc = make_pointwise(ps, "h", 6, 10, rng, ParamGroup::frozen);
  auto x = rand_uniform<float>({1, 6, 4, 4}, rng, -1, 1);
  auto host_only = pc.forward_host(x);
  attach_lora(ps, pc, "l", 3, 6.0, 0.1, rng);
  Rng fwd(0);
  auto with_branch = pc.forward(x, Mode::eval, fwd);
  CHECK(bits_equal(host_only, with_branch));
}

TEST_CASE("low-rank branch matches direct matrix evaluation and is linear in alpha") {
  const int d = 5, k = 4, r = 2;
  ParamSet<float> ps;
  Rng rng(8);
  auto pc = make_pointwise(ps, "h", k, d, rng, ParamGroup::frozen);
  attach_lora(ps, pc, "l", r, (double)r, 0.0, rng);  // alpha = r -> unit scale
  // identity-padded A (r x k) and B (d x r)
  std::fill(pc.lora_a.ptr(), pc.lora_a.ptr() + pc.lora_a.size(), 0.0f);
  std::fill(pc.lora_b.ptr(), pc.lora_b.ptr() + pc.lora_b.size(), 0.0f);
  for (int i = 0; i < r; ++i) {
    pc.lora_a.ptr()[i * k + i] = 1.0f;
    pc.lora_b.ptr()[i * r + i] = 1.0f;
  }
  // x = e1 at a single position
  Tensor<float> x({1, k, 1, 1}, 0.0f);
  x.ptr()[0] = 1.0f;
  Rng fwd(0);
  auto h = pc.forward(x, Mode::eval, fwd);
  // BA = identity padded to d x k, so (BA)e1 = e1 padded
  for (int i = 0; i < d; ++i) {
    const float host = pc.w.ptr()[i * k + 0] + pc.b.ptr()[i];
    const float want = host + (i == 0 ? 1.0f : 0.0f);
    CHECK(h.ptr()[i] == doctest::Approx(want).epsilon(1e-6));
  }

  // doubling alpha doubles the branch output for fixed A, B, x
  auto branch_at = [&](double alpha) {
    pc.lora_scale = (float)(alpha / r);
    Rng f(0);
    auto out = pc.forward(x, Mode::eval, f);
    std::vector<float> delta((size_t)d);
    auto host = pc.forward_host(x);
    for (int i = 0; i < d; ++i) delta[(size_t)i] = out.ptr()[i] - host.ptr()[i];
    return delta;
  };
  auto b1 = branch_at(4.0), b2 = branch_at(8.0);
  for (int i = 0; i < d; ++i) CHECK(b2[(size_t)i] == doctest::Approx(2.0f * b1[(size_t)i]).epsilon(1e-5));
}

TEST_CASE("zero prompt tokens leave features unchanged") {
  ParamSet<float> ps;
  Rng rng(9);
  auto pt = make_prompts(ps, "p", 4, 3, 5, 7, rng);
  std::array<Tensor<float>, 3> feats = {rand_uniform<float>({1, 3, 4, 4}, rng, -1, 1),
                                        rand_uniform<float>({1, 5, 2, 2}, rng, -1, 1),
                                        rand_uniform<float>({1, 7, 2, 2}, rng, -1, 1)};
  auto out = inject_prompts(feats, pt);
  for (int i = 0; i < 3; ++i) CHECK(bits_equal(out[(size_t)i], feats[(size_t)i]));
}

TEST_CASE("single prompt token through an identity projection shifts one channel") {
  ParamSet<float> ps;
  Rng rng(10);
  auto pt = make_prompts(ps, "p", 1, 3, 3, 3, rng);
  // identity first projection, token = c * e1
  std::fill(pt.proj[0].ptr(), pt.proj[0].ptr() + pt.proj[0].size(), 0.0f);
  for (int i = 0; i < 3; ++i) pt.proj[0].ptr()[i * 3 + i] = 1.0f;
  const float c = 0.7f;
  pt.tokens.ptr()[0] = c;

  auto feats0 = rand_uniform<float>({1, 3, 4, 4}, rng, -1, 1);
  std::array<Tensor<float>, 3> feats = {feats0, rand_uniform<float>({1, 3, 2, 2}, rng, -1, 1),
                                        rand_uniform<float>({1, 3, 2, 2}, rng, -1, 1)};
  auto out = inject_prompts(feats, pt);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(out[0].ptr()[0 * 16 + y * 4 + x] == doctest::Approx(feats0.ptr()[0 * 16 + y * 4 + x] + c));
      CHECK(out[0].ptr()[1 * 16 + y * 4 + x] == feats0.ptr()[1 * 16 + y * 4 + x]);
    }
}

TEST_CASE("stage shapes and divisibility error") {
  ParamSet<float> ps;
  Rng rng(11);
  Backbone<float> bb(desk_config(), ps, rng);
  Rng fwd(0);
  auto img = rand_uniform<float>({1, 3, 64, 64}, rng, 0, 1);
  auto f = bb.forward(img, Mode::eval, fwd);
  CHECK(f.c2.shape() == Shape{1, 32, 16, 16});
  CHECK(f.c3.shape() == Shape{1, 64, 8, 8});
  CHECK(f.c4.shape() == Shape{1, 128, 4, 4});
  CHECK(f.c5.shape() == Shape{1, 256, 2, 2});

  auto bad = rand_uniform<float>({1, 3, 48, 64}, rng, 0, 1);
  CHECK_THROWS_WITH_AS(bb.forward(bad, Mode::eval, fwd) /* 48 not divisible */,
                       doctest::Contains("divisible by 32"), TensorError);
}

TEST_CASE("fresh enhanced backbone equals the plain trunk bit-for-bit") {
  BackboneConfig cfg = desk_config();
  cfg.stage_channels = {8, 12, 16, 24};
  cfg.lora_rank = 2;
  cfg.lora_alpha = 4;
  ParamSet<float> ps;
  Rng rng(12);
  Backbone<float> bb(cfg, ps, rng);
  Rng data(55);
  for (int i = 0; i < 3; ++i) {
    auto img = rand_uniform<float>({1, 3, 64, 64}, data, 0, 1);
    Rng fwd(0);
    auto enhanced = bb.forward(img, Mode::eval, fwd);
    auto plain = bb.forward_trunk(img);
    CHECK(bits_equal(enhanced.c2, plain.c2));
    CHECK(bits_equal(enhanced.c3, plain.c3));
    CHECK(bits_equal(enhanced.c4, plain.c4));
    CHECK(bits_equal(enhanced.c5, plain.c5));
  }
}

TEST_CASE("siamese weight sharing gives bit-identical stage outputs") {
  ParamSet<float> ps;
  Rng rng(13);
  BackboneConfig cfg = desk_config();
  cfg.stage_channels = {8, 12, 16, 24};
  cfg.lora_rank = 2;
  Backbone<float> bb(cfg, ps, rng);
  auto img = rand_uniform<float>({1, 3, 64, 64}, rng, 0, 1);
  Rng f1(0), f2(0);
  auto a = bb.forward(img, Mode::eval, f1);
  auto b = bb.forward(img, Mode::eval, f2);
  CHECK(bits_equal(a.c2, b.c2));
  CHECK(bits_equal(a.c5, b.c5));
}

TEST_CASE("only the low-rank matrices receive gradients through a frozen host") {
  ParamSet<double> ps;
  Rng rng(14);
  auto pc = make_pointwise(ps, "h", 4, 6, rng, ParamGroup::frozen);
  attach_lora(ps, pc, "l", 2, 4.0, 0.0, rng);
  for (long long i = 0; i < pc.lora_b.size(); ++i) pc.lora_b.ptr()[i] = rng.uniform(-0.5, 0.5);
  auto x = rand_uniform<double>({1, 4, 3, 3}, rng, -1, 1);
  Tape<double> tape;
  Rng fwd(0);
  auto loss = sum_all(pc.forward(x, Mode::train, fwd));
  tape.backward(loss);
  CHECK(pc.lora_a.grad_materialized());
  CHECK(pc.lora_b.grad_materialized());
  CHECK_FALSE(pc.w.grad_materialized());
  CHECK_FALSE(pc.b.grad_materialized());
}
