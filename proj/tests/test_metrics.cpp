#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/metrics.hpp"
#include "mcd/reference.hpp"
#include "mcd/rng.hpp"

using namespace mcd;

namespace {

LabelMap random_map(Rng& rng, int classes, int h, int w) {
  LabelMap m(1, h, w);
  for (auto& v : m.v) v = (uint8_t)rng.uniform_int(classes);
  return m;
}

}  // namespace

TEST_CASE("updates count diagonal for perfect predictions") {
  Rng rng(1);
  LabelMap gt = random_map(rng, 4, 8, 8);
  ConfusionMatrix cm(4);
  cm.update(gt, gt);
  long long diag = 0;
  for (int c = 0; c < 4; ++c) diag += cm.at(c, c);
  CHECK(diag == cm.total());
  CHECK(cm.total() == 64);
}

TEST_CASE("a single pixel lands in counts[pred][gt]") {
  ConfusionMatrix cm(4);
  LabelMap pred(1, 1, 1), gt(1, 1, 1);
  pred.v[0] = 1;
  gt.v[0] = 2;
  cm.update(pred, gt);
  CHECK(cm.at(1, 2) == 1);
  CHECK(cm.total() == 1);
}

TEST_CASE("out-of-range classes are rejected") {
  ConfusionMatrix cm(3);
  LabelMap pred(1, 1, 1), gt(1, 1, 1);
  pred.v[0] = 3;
  CHECK_THROWS_AS(cm.update(pred, gt), DataError);
}

TEST_CASE("random maps match the per-pixel counting oracle exactly") {
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    LabelMap pred = random_map(rng, 7, 16, 16);
    LabelMap gt = random_map(rng, 7, 16, 16);
    ConfusionMatrix cm(7);
    cm.update(pred, gt);
    auto ref = reference::confusion_counts(pred, gt, 7);
    for (int a = 0; a < 7; ++a)
      for (int b = 0; b < 7; ++b) CHECK(cm.at(a, b) == ref[(size_t)a * 7 + b]);
  }
}

TEST_CASE("perfect prediction yields unit metrics") {
  Rng rng(3);
  LabelMap gt = random_map(rng, 5, 8, 8);
  // make sure every class appears
  for (int c = 0; c < 5; ++c) gt.v[(size_t)c] = (uint8_t)c;
  ConfusionMatrix cm(5);
  cm.update(gt, gt);
  MetricReport rep = compute_metrics(cm);
  CHECK(rep.oa == 1.0);
  CHECK(rep.miou_all == 1.0);
  CHECK(rep.miou_changed == 1.0);
  CHECK(rep.macro_f1_all == 1.0);
}

TEST_CASE("hand-counted binary 2x2 matrix") {
  // counts[pred][gt]: [[2,1],[1,2]] over 6 pixels
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 2;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 1;
  cm.at(1, 1) = 2;
  MetricReport rep = compute_metrics(cm);
  CHECK(rep.oa == doctest::Approx(4.0 / 6).epsilon(1e-12));
  CHECK(rep.per_class[1].precision == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(rep.per_class[1].recall == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(rep.per_class[1].f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(rep.per_class[1].iou == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("accumulation is associative: two updates equal the concatenation") {
  Rng rng(4);
  LabelMap p1 = random_map(rng, 4, 6, 6), g1 = random_map(rng, 4, 6, 6);
  LabelMap p2 = random_map(rng, 4, 6, 6), g2 = random_map(rng, 4, 6, 6);

  ConfusionMatrix two_steps(4);
  two_steps.update(p1, g1);
  two_steps.update(p2, g2);

  LabelMap pc(2, 6, 6), gc(2, 6, 6);
  std::copy(p1.v.begin(), p1.v.end(), pc.v.begin());
  std::copy(p2.v.begin(), p2.v.end(), pc.v.begin() + 36);
  std::copy(g1.v.begin(), g1.v.end(), gc.v.begin());
  std::copy(g2.v.begin(), g2.v.end(), gc.v.begin() + 36);
  ConfusionMatrix once(4);
  once.update(pc, gc);

  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK(two_steps.at(a, b) == once.at(a, b));

  // merge behaves the same way
  ConfusionMatrix m1(4), m2(4);
  m1.update(p1, g1);
  m2.update(p2, g2);
  m1.merge(m2);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK(m1.at(a, b) == once.at(a, b));
}

TEST_CASE("binary F1 equals the dice coefficient of the hard masks") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    LabelMap pred = random_map(rng, 2, 8, 8), gt = random_map(rng, 2, 8, 8);
    ConfusionMatrix cm(2);
    cm.update(pred, gt);
    MetricReport rep = compute_metrics(cm);
    long long tp = 0, fp = 0, fn = 0;
    for (long long j = 0; j < pred.size(); ++j) {
      tp += pred.v[(size_t)j] == 1 && gt.v[(size_t)j] == 1;
      fp += pred.v[(size_t)j] == 1 && gt.v[(size_t)j] == 0;
      fn += pred.v[(size_t)j] == 0 && gt.v[(size_t)j] == 1;
    }
    if (2 * tp + fp + fn == 0) continue;
    CHECK(std::abs(rep.per_class[1].f1 - 2.0 * tp / (2.0 * tp + fp + fn)) <= 1e-12);
  }
}

TEST_CASE("overall accuracy is invariant under joint relabeling") {
  Rng rng(6);
  LabelMap pred = random_map(rng, 4, 8, 8), gt = random_map(rng, 4, 8, 8);
  ConfusionMatrix cm(4);
  cm.update(pred, gt);
  const double oa = compute_metrics(cm).oa;

  const uint8_t perm[4] = {2, 0, 3, 1};
  LabelMap pp = pred, gp = gt;
  for (auto& v : pp.v) v = perm[v];
  for (auto& v : gp.v) v = perm[v];
  ConfusionMatrix cm2(4);
  cm2.update(pp, gp);
  CHECK(compute_metrics(cm2).oa == doctest::Approx(oa).epsilon(1e-15));
}

TEST_CASE("zero-support classes are excluded from macro means") {
  ConfusionMatrix cm(3);
  cm.at(1, 1) = 10;  // class 2 never touched
  MetricReport rep = compute_metrics(cm);
  CHECK_FALSE(rep.per_class[2].counted);
  CHECK(rep.miou_changed == 1.0);  // only class 1 counts
  CHECK(rep.per_class[2].precision == 0.0);
}

TEST_CASE("empty matrix is an error") {
  ConfusionMatrix cm(3);
  CHECK_THROWS_AS(compute_metrics(cm), DataError);
}

TEST_CASE("report emits the table and key=value block") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 3;
  cm.at(1, 0) = 2;
  MetricReport rep = compute_metrics(cm);
  const std::string table = rep.table({"no_change", "changed"});
  CHECK(table.find("no_change") != std::string::npos);
  CHECK(table.find("overall accuracy") != std::string::npos);
  const std::string kv = rep.key_values();
  CHECK(kv.find("miou_changed=") != std::string::npos);
  CHECK(kv.find("class1_f1=") != std::string::npos);
}
