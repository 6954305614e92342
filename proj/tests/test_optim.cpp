#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/optim.hpp"
#include "mcd/reference.hpp"

using namespace mcd;

TEST_CASE("schedule fixed points and restarts") {
  CHECK(lr_at(0, 3e-4, 30, 2, 1e-7) == 3e-4);
  // half cycle: eta + (base - eta)/2
  CHECK(lr_at(15, 3e-4, 30, 2, 1e-7) == doctest::Approx(1e-7 + 0.5 * (3e-4 - 1e-7)).epsilon(1e-15));
  CHECK(lr_at(15, 3e-4, 30, 2, 1e-7) == doctest::Approx(1.5005e-4).epsilon(1e-9));
  // restart at 30; the second cycle is 60 epochs long
  CHECK(lr_at(30, 3e-4, 30, 2, 1e-7) == 3e-4);
  CHECK(lr_at(60, 3e-4, 30, 2, 1e-7) == doctest::Approx(1e-7 + 0.5 * (3e-4 - 1e-7)).epsilon(1e-15));
  CHECK(lr_at(90, 3e-4, 30, 2, 1e-7) == 3e-4);
  CHECK(lr_at(210, 3e-4, 30, 2, 1e-7) == 3e-4);
}

TEST_CASE("schedule matches the closed form on a dense sample") {
  Rng rng(1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double e = rng.uniform(0, 400);
    worst = std::max(worst, std::abs(lr_at(e, 3e-4, 30, 2, 1e-7) - reference::lr_closed_form(e, 3e-4, 30, 2, 1e-7)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("schedule is continuous within a cycle and floored at eta_min") {
  double prev = lr_at(0, 3e-4, 30, 2, 1e-7);
  for (double e = 0.01; e < 29.999; e += 0.01) {
    const double v = lr_at(e, 3e-4, 30, 2, 1e-7);
    CHECK(v <= prev + 1e-12);  // monotone within the first cycle
    CHECK(v >= 1e-7);
    prev = v;
  }
  CHECK(lr_at(29.9999999, 3e-4, 30, 2, 1e-7) == doctest::Approx(1e-7).epsilon(1e-6));
}

TEST_CASE("zero gradients and zero decay leave parameters unchanged") {
  ParamSet<double> ps;
  Rng rng(2);
  auto p = ps.add("w", rand_uniform<double>({3, 3}, rng, -1, 1), ParamGroup::decoder);
  std::vector<double> before = p.data();
  AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
  GroupLr glr{};
  glr[(size_t)ParamGroup::decoder] = 1e-3;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    opt.step(ps, glr);
  }
  CHECK(p.data() == before);
}

TEST_CASE("single scalar step matches -lr/(1+eps) for unit gradient") {
  ParamSet<double> ps;
  auto p = ps.add("w", Tensor<double>({1}, 0.0), ParamGroup::decoder);
  AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
  p.zero_grad();
  p.grad()[0] = 1.0;
  GroupLr glr{};
  glr[(size_t)ParamGroup::decoder] = 3e-4;
  opt.step(ps, glr);
  CHECK(p.ptr()[0] == doctest::Approx(-3e-4 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("multi-step trajectory matches the scalar oracle with weight decay") {
  ParamSet<double> ps;
  auto p = ps.add("w", Tensor<double>({1}, 0.4), ParamGroup::mscad);
  AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.01);
  reference::AdamWScalar ref;
  double rp = 0.4;
  Rng rng(3);
  GroupLr glr{};
  glr[(size_t)ParamGroup::mscad] = 2e-3;
  for (int i = 0; i < 25; ++i) {
    const double g = rng.uniform(-1, 1);
    p.zero_grad();
    p.grad()[0] = g;
    opt.step(ps, glr);
    ref.step(rp, g, 2e-3, 0.9, 0.999, 1e-8, 0.01);
    CHECK(p.ptr()[0] == doctest::Approx(rp).epsilon(1e-14));
  }
}

TEST_CASE("frozen parameters are never touched, even after many steps") {
  ParamSet<float> ps;
  Rng rng(4);
  auto frozen = ps.add("f", rand_uniform<float>({4, 4}, rng, -1, 1), ParamGroup::frozen);
  auto live = ps.add("t", rand_uniform<float>({4, 4}, rng, -1, 1), ParamGroup::adapter);
  std::vector<float> before = frozen.data();
  AdamW<float> opt(ps, 0.9f, 0.999f, 1e-8f, 0.01f);
  GroupLr glr{};
  glr[(size_t)ParamGroup::adapter] = 1e-2;
  for (int i = 0; i < 100; ++i) {
    live.zero_grad();
    for (auto& g : live.grad()) g = (float)rng.uniform(-1, 1);
    opt.step(ps, glr);
  }
  CHECK(std::memcmp(frozen.ptr(), before.data(), before.size() * sizeof(float)) == 0);
  CHECK(frozen.data() == before);
}

TEST_CASE("a missing gradient on a trainable parameter is an error") {
  ParamSet<double> ps;
  ps.add("w", Tensor<double>({2}, 0.0), ParamGroup::decoder);
  AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
  GroupLr glr{};
  CHECK_THROWS_AS(opt.step(ps, glr), TensorError);
}

TEST_CASE("group multipliers scale the applied step") {
  ParamSet<double> ps;
  auto a = ps.add("a", Tensor<double>({1}, 0.0), ParamGroup::adapter);
  auto d = ps.add("d", Tensor<double>({1}, 0.0), ParamGroup::decoder);
  AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
  a.zero_grad();
  d.zero_grad();
  a.grad()[0] = 1.0;
  d.grad()[0] = 1.0;
  GroupLr glr{};
  glr[(size_t)ParamGroup::adapter] = 20 * 3e-4;
  glr[(size_t)ParamGroup::decoder] = 8 * 3e-4;
  opt.step(ps, glr);
  CHECK(a.ptr()[0] == doctest::Approx(-20 * 3e-4).epsilon(1e-7));
  CHECK(d.ptr()[0] == doctest::Approx(-8 * 3e-4).epsilon(1e-7));
}
