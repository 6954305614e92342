#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/gradcheck.hpp"
#include "mcd/losses.hpp"
#include "mcd/reference.hpp"

using namespace mcd;
using D = double;

namespace {

LabelMap random_target(Rng& rng, int n, int c, int h, int w) {
  LabelMap t(n, h, w);
  for (auto& v : t.v) v = (uint8_t)rng.uniform_int(c);
  return t;
}

// logits that softmax to (nearly) a given one-hot target
Tensor<D> confident_logits(const LabelMap& t, int c, double margin = 40.0) {
  Tensor<D> logits({t.n, c, t.h, t.w}, 0.0);
  const long long hw = (long long)t.h * t.w;
  for (int n = 0; n < t.n; ++n)
    for (long long i = 0; i < hw; ++i)
      logits.ptr()[((long long)n * c + t.v[(size_t)(n * hw + i)]) * hw + i] = margin;
  return logits;
}

}  // namespace

TEST_CASE("focal loss vanishes on perfect predictions") {
  Rng rng(1);
  LabelMap t = random_target(rng, 1, 3, 4, 4);
  auto logits = confident_logits(t, 3);
  LossConfig cfg;
  CHECK(focal_loss(logits, t, cfg).ptr()[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("focal single pixel at p=1/2 with gamma 3 equals ln(2)/8") {
  auto logits = Tensor<D>::from({1, 2, 1, 1}, {0.0, 0.0});
  LabelMap t(1, 1, 1);
  LossConfig cfg;  // gamma 3, unit alpha
  const double got = focal_loss(logits, t, cfg).ptr()[0];
  CHECK(got == doctest::Approx(0.125 * std::log(2.0)).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.086643).epsilon(1e-4));
}

TEST_CASE("focal with gamma 0 and unit alpha is exactly cross-entropy") {
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    auto logits = rand_uniform<D>({2, 4, 3, 3}, rng, -3, 3);
    LabelMap t = random_target(rng, 2, 4, 3, 3);
    LossConfig cfg;
    cfg.focal_gamma = 0.0;
    const double got = focal_loss(logits, t, cfg).ptr()[0];
    const double want =
        reference::cross_entropy(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()), {2, 4, 3, 3}, t);
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("focal rejects out-of-range targets") {
  Rng rng(3);
  auto logits = rand_uniform<D>({1, 3, 2, 2}, rng);
  LabelMap t(1, 2, 2);
  t.v[0] = 3;  // class count is 3, valid classes 0..2
  LossConfig cfg;
  CHECK_THROWS_AS(focal_loss(logits, t, cfg), TensorError);
}

TEST_CASE("dice loss is near zero on one-hot-perfect probabilities") {
  Rng rng(4);
  LabelMap t = random_target(rng, 1, 3, 4, 4);
  auto logits = confident_logits(t, 3);
  LossConfig cfg;
  CHECK(dice_loss(logits, t, cfg).ptr()[0] <= 1e-6);
}

TEST_CASE("dice positive-class term matches the worked 4-pixel instance") {
  // pixels: fg probabilities (0.5, 0.5, ~0, ~0), target (fg, bg, bg, bg)
  Tensor<D> logits({1, 2, 1, 4}, 0.0);
  // class order: index 0 = fg for this check
  logits.ptr()[0] = 0.0;
  logits.ptr()[4] = 0.0;  // pixel 0: (0,0) -> fg 0.5
  logits.ptr()[1] = 0.0;
  logits.ptr()[5] = 0.0;  // pixel 1: fg 0.5
  logits.ptr()[2] = -50.0;
  logits.ptr()[6] = 50.0;  // pixel 2: fg ~ 0
  logits.ptr()[3] = -50.0;
  logits.ptr()[7] = 50.0;  // pixel 3: fg ~ 0
  LabelMap t(1, 1, 4);
  t.v = {0, 1, 1, 1};
  LossConfig cfg;
  // per-class fg term: 1 - (2*0.5 + eps) / (1 + 0.5 + eps)
  const double eps = cfg.dice_eps;
  const double fg_term = 1.0 - (2 * 0.5 + eps) / (1.5 + eps);
  CHECK(fg_term == doctest::Approx(1.0 / 3).epsilon(1e-4));
  const double got = dice_loss(logits, t, cfg).ptr()[0];
  const double want = reference::dice(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()), {1, 2, 1, 4},
                                      t, eps);
  CHECK(std::abs(got - want) <= 1e-12);
}

TEST_CASE("dice stays within [0,1] on random inputs") {
  Rng rng(5);
  LossConfig cfg;
  for (int i = 0; i < 20; ++i) {
    auto logits = rand_uniform<D>({1, 4, 4, 4}, rng, -4, 4);
    LabelMap t = random_target(rng, 1, 4, 4, 4);
    const double v = dice_loss(logits, t, cfg).ptr()[0];
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("lovasz is zero on perfect one-hot predictions") {
  Rng rng(6);
  LabelMap t = random_target(rng, 1, 3, 4, 4);
  auto logits = confident_logits(t, 3);
  LossConfig cfg;
  CHECK(lovasz_softmax(logits, t, cfg).ptr()[0] <= 1e-12);
}

TEST_CASE("lovasz matches the brute-force extension on the 3-pixel instance") {
  // y = (fg, bg, bg); p_fg = (0.2, 0.9, 0.1) via log-probability logits
  Tensor<D> logits({1, 2, 1, 3}, 0.0);
  const double pf[3] = {0.2, 0.9, 0.1};
  for (int i = 0; i < 3; ++i) {
    logits.ptr()[3 + i] = std::log(pf[i]);      // class 1 = fg
    logits.ptr()[i] = std::log(1.0 - pf[i]);    // class 0 = bg
  }
  LabelMap t(1, 1, 3);
  t.v = {1, 0, 0};
  LossConfig cfg;
  const double got = lovasz_softmax(logits, t, cfg).ptr()[0];
  const double want = reference::lovasz_softmax(std::vector<double>(logits.ptr(), logits.ptr() + logits.size()),
                                                {1, 2, 1, 3}, t);
  CHECK(std::abs(got - want) <= 1e-9);
  // hand evaluation of the sorted-prefix form for these errors
  CHECK(got == doctest::Approx((0.85 + 0.6166666666666667) / 2).epsilon(1e-9));
}

TEST_CASE("lovasz per-class terms stay in [0,1] and absent classes are skipped") {
  Rng rng(7);
  LossConfig cfg;
  for (int i = 0; i < 20; ++i) {
    auto logits = rand_uniform<D>({1, 3, 3, 3}, rng, -4, 4);
    LabelMap t(1, 3, 3);
    for (auto& v : t.v) v = (uint8_t)(rng.uniform_int(2));  // class 2 never present
    const double v = lovasz_softmax(logits, t, cfg).ptr()[0];
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("composite equals the weighted sum and collapses to focal at (1,0,0)") {
  Rng rng(8);
  LabelMap t = random_target(rng, 1, 3, 4, 4);
  auto logits = rand_uniform<D>({1, 3, 4, 4}, rng, -2, 2);
  LossConfig cfg;
  const double comp = composite_loss(logits, t, cfg).ptr()[0];
  const double parts = 0.4 * focal_loss(logits, t, cfg).ptr()[0] + 0.3 * dice_loss(logits, t, cfg).ptr()[0] +
                       0.3 * lovasz_softmax(logits, t, cfg).ptr()[0];
  CHECK(std::abs(comp - parts) <= 1e-12);

  LossConfig only_focal;
  only_focal.w_focal = 1.0;
  only_focal.w_dice = 0.0;
  only_focal.w_lovasz = 0.0;
  CHECK(composite_loss(logits, t, only_focal).ptr()[0] ==
        doctest::Approx(focal_loss(logits, t, only_focal).ptr()[0]).epsilon(1e-15));

  // near-perfect prediction drives the composite to ~0
  auto perfect = confident_logits(t, 3);
  CHECK(composite_loss(perfect, t, cfg).ptr()[0] <= 1e-5);
}

TEST_CASE("losses are permutation-equivariant in pixels") {
  Rng rng(9);
  auto logits = rand_uniform<D>({1, 3, 2, 4}, rng, -2, 2);
  LabelMap t = random_target(rng, 1, 3, 2, 4);
  LossConfig cfg;

  // permute the 8 pixels of logits and target together
  std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
  Tensor<D> plog({1, 3, 2, 4}, 0.0);
  LabelMap pt(1, 2, 4);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i) plog.ptr()[c * 8 + i] = logits.ptr()[c * 8 + perm[(size_t)i]];
  for (int i = 0; i < 8; ++i) pt.v[(size_t)i] = t.v[(size_t)perm[(size_t)i]];

  CHECK(std::abs(focal_loss(logits, t, cfg).ptr()[0] - focal_loss(plog, pt, cfg).ptr()[0]) <= 1e-12);
  CHECK(std::abs(dice_loss(logits, t, cfg).ptr()[0] - dice_loss(plog, pt, cfg).ptr()[0]) <= 1e-12);
  CHECK(std::abs(lovasz_softmax(logits, t, cfg).ptr()[0] - lovasz_softmax(plog, pt, cfg).ptr()[0]) <= 1e-12);
}

TEST_CASE("raising the true-class logit never increases any loss") {
  Rng rng(10);
  LossConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    auto logits = rand_uniform<D>({1, 3, 2, 2}, rng, -2, 2);
    LabelMap t = random_target(rng, 1, 3, 2, 2);
    const int px = rng.uniform_int(4);
    const int cls = t.v[(size_t)px];
    const double f0 = focal_loss(logits, t, cfg).ptr()[0];
    const double d0 = dice_loss(logits, t, cfg).ptr()[0];
    const double l0 = lovasz_softmax(logits, t, cfg).ptr()[0];
    logits.ptr()[cls * 4 + px] += 0.5;
    CHECK(focal_loss(logits, t, cfg).ptr()[0] <= f0 + 1e-12);
    CHECK(dice_loss(logits, t, cfg).ptr()[0] <= d0 + 1e-12);
    CHECK(lovasz_softmax(logits, t, cfg).ptr()[0] <= l0 + 1e-12);
  }
}

TEST_CASE("all three losses pass 64-bit gradient checks") {
  Rng rng(11);
  LossConfig cfg;
  for (int i = 0; i < 3; ++i) {
    LabelMap t = random_target(rng, 1, 3, 4, 4);
    auto logits = rand_uniform<D>({1, 3, 4, 4}, rng, -2, 2);
    CHECK(gradcheck([&]() { return focal_loss(logits, t, cfg); }, {logits}).pass(1e-4));
    CHECK(gradcheck([&]() { return dice_loss(logits, t, cfg); }, {logits}).pass(1e-4));
    CHECK(gradcheck([&]() { return lovasz_softmax(logits, t, cfg); }, {logits}).pass(1e-4));
    CHECK(gradcheck([&]() { return composite_loss(logits, t, cfg); }, {logits}).pass(1e-4));
  }
}

TEST_CASE("per-class focal weights are honored") {
  Rng rng(12);
  auto logits = rand_uniform<D>({1, 2, 2, 2}, rng, -1, 1);
  LabelMap t = random_target(rng, 1, 2, 2, 2);
  LossConfig uniform;
  LossConfig doubled;
  doubled.focal_alpha = {2.0, 2.0};
  CHECK(focal_loss(logits, t, doubled).ptr()[0] ==
        doctest::Approx(2.0 * focal_loss(logits, t, uniform).ptr()[0]).epsilon(1e-12));
}
