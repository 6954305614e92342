#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/backbone.hpp"
#include "mcd/gradcheck.hpp"
#include "mcd/ops.hpp"

// Fast spot checks of analytic gradients against central finite differences.
// The exhaustive sweeps (20+ instances per op) run in the verify suite and
// the acceptance binary; these keep the unit loop quick.

using namespace mcd;
using D = double;

namespace {

GradCheckReport check_conv(uint64_t seed) {
  Rng rng(seed);
  auto x = rand_uniform<D>({2, 3, 6, 6}, rng, -1, 1);
  auto w = rand_uniform<D>({4, 3, 3, 3}, rng, -0.6, 0.6);
  auto b = rand_uniform<D>({4}, rng, -0.3, 0.3);
  auto sw = rand_uniform<D>({2, 4, 6, 6}, rng, -1, 1);
  return gradcheck([&]() { return sum_all(mul(conv2d(x, w, b, 1, 1), sw)); }, {x, w, b});
}

}  // namespace

TEST_CASE("conv2d analytic gradients match finite differences") {
  for (uint64_t s : {1, 2, 3}) CHECK(check_conv(s).pass(1e-4));
}

TEST_CASE("depthwise gradients match finite differences") {
  Rng rng(4);
  auto x = rand_uniform<D>({2, 4, 6, 6}, rng, -1, 1);
  auto w = rand_uniform<D>({4, 1, 3, 3}, rng, -0.6, 0.6);
  auto sw = rand_uniform<D>({2, 4, 6, 6}, rng, -1, 1);
  auto rep = gradcheck([&]() { return sum_all(mul(depthwise_conv2d(x, w, 1, 1), sw)); }, {x, w});
  INFO(rep.describe());
  CHECK(rep.pass(1e-4));
}

TEST_CASE("batchnorm train-mode gradients match finite differences") {
  Rng rng(5);
  auto x = rand_uniform<D>({2, 3, 4, 4}, rng, -2, 2);
  auto gamma = rand_uniform<D>({3}, rng, 0.5, 1.5);
  auto beta = rand_uniform<D>({3}, rng, -0.5, 0.5);
  BatchNormState<D> st;
  st.init(3);
  auto sw = rand_uniform<D>({2, 3, 4, 4}, rng, -1, 1);
  auto rep = gradcheck([&]() { return sum_all(mul(batchnorm2d(x, gamma, beta, st, Mode::train), sw)); },
                       {x, gamma, beta});
  INFO(rep.describe());
  CHECK(rep.pass(1e-4));
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(6);
  auto x = rand_uniform<D>({2, 3, 4, 4}, rng, -3, 3);
  auto sw = rand_uniform<D>({2, 3, 4, 4}, rng, -1, 1);
  CHECK(gradcheck([&]() { return sum_all(mul(gelu(x), sw)); }, {x}).pass(1e-4));
  CHECK(gradcheck([&]() { return sum_all(mul(sigmoid(x), sw)); }, {x}).pass(1e-4));
  CHECK(gradcheck([&]() { return sum_all(mul(softmax(x, 1), sw)); }, {x}).pass(1e-4));
}

TEST_CASE("elementwise gradients away from the abs kink") {
  Rng rng(7);
  Tensor<D> a({2, 2, 3, 3});
  for (long long i = 0; i < a.size(); ++i) a.ptr()[i] = (rng.coin() ? 1 : -1) * rng.uniform(0.1, 2.0);
  auto b = rand_uniform<D>({2, 2, 3, 3}, rng, 0.5, 1.5);
  auto sw = rand_uniform<D>({2, 2, 3, 3}, rng, -1, 1);
  CHECK(gradcheck([&]() { return sum_all(mul(abs(a), sw)); }, {a}).pass(1e-4));
  CHECK(gradcheck([&]() { return sum_all(mul(mul(a, b), sw)); }, {a, b}).pass(1e-4));
  CHECK(gradcheck([&]() { return sum_all(mul(div(a, b), sw)); }, {a, b}).pass(1e-4));
}

TEST_CASE("upsample, linear and dropout gradients") {
  Rng rng(8);
  auto x = rand_uniform<D>({1, 2, 3, 3}, rng, -1, 1);
  auto sw2 = rand_uniform<D>({1, 2, 6, 6}, rng, -1, 1);
  CHECK(gradcheck([&]() { return sum_all(mul(upsample_bilinear(x, 2), sw2)); }, {x}).pass(1e-4));

  auto xm = rand_uniform<D>({5, 4}, rng, -1, 1);
  auto wm = rand_uniform<D>({3, 4}, rng, -1, 1);
  auto bm = rand_uniform<D>({3}, rng, -0.5, 0.5);
  auto swm = rand_uniform<D>({5, 3}, rng, -1, 1);
  CHECK(gradcheck([&]() { return sum_all(mul(linear(xm, wm, bm), swm)); }, {xm, wm, bm}).pass(1e-4));

  const uint64_t mask_seed = 99;
  auto swd = rand_uniform<D>({1, 2, 3, 3}, rng, -1, 1);
  CHECK(gradcheck(
            [&]() {
              Rng mrng(mask_seed);
              return sum_all(mul(dropout(x, 0.4, Mode::train, mrng), swd));
            },
            {x})
            .pass(1e-4));
}

TEST_CASE("adapter gradients on gate and both projections") {
  Rng rng(9);
  ParamSet<D> ps;
  auto ad = make_adapter(ps, "a", 6, 2, rng);
  ad.gate.ptr()[0] = 0.4;
  auto x = rand_uniform<D>({1, 6, 4, 4}, rng, -1, 1);
  auto sw = rand_uniform<D>({1, 6, 4, 4}, rng, -1, 1);
  auto rep = gradcheck([&]() { return sum_all(mul(ad.forward(x), sw)); }, {x, ad.w_down, ad.w_up, ad.gate});
  INFO(rep.describe());
  CHECK(rep.pass(1e-4));
}

TEST_CASE("prompt token path gradients") {
  Rng rng(10);
  ParamSet<D> ps;
  auto pt = make_prompts(ps, "p", 3, 4, 5, 6, rng);
  for (long long i = 0; i < pt.tokens.size(); ++i) pt.tokens.ptr()[i] = rng.uniform(-1, 1);
  std::array<Tensor<D>, 3> feats = {rand_uniform<D>({1, 4, 4, 4}, rng, -1, 1),
                                    rand_uniform<D>({1, 5, 2, 2}, rng, -1, 1),
                                    rand_uniform<D>({1, 6, 2, 2}, rng, -1, 1)};
  auto sw = rand_uniform<D>({1, 6, 2, 2}, rng, -1, 1);
  auto rep = gradcheck(
      [&]() {
        auto out = inject_prompts(feats, pt);
        return sum_all(mul(out[2], sw));
      },
      {pt.tokens, pt.proj[0], pt.proj[1], pt.proj[2]});
  INFO(rep.describe());
  CHECK(rep.pass(1e-4));
}
