#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mcd/data.hpp"
#include "mcd/train.hpp"

using namespace mcd;
namespace fs = std::filesystem;

namespace {

Config tiny_train_config(int k) {
  Config cfg;
  cfg.stage_channels = {4, 6, 8, 12};
  cfg.blocks_per_stage = {1, 1, 1, 1};
  cfg.lora_r = 2;
  cfg.lora_alpha = 4;
  cfg.prompt_count = 2;
  cfg.common_dim = 6;
  cfg.num_classes = k + 1;
  cfg.epochs = 2;
  cfg.batch = 2;
  return cfg;
}

DatasetManifest tiny_data(const std::string& tag, int count = 2, int k = 2, uint64_t seed = 5) {
  fs::path root = fs::temp_directory_path() / ("mcd_train_test_" + tag);
  fs::remove_all(root);
  SynthSpec spec;
  spec.count = count;
  spec.size = 32;
  spec.k = k;
  spec.seed = seed;
  return synth_generate(spec, root);
}

}  // namespace

TEST_CASE("zero epochs returns the initial model and empty history") {
  DatasetManifest data = tiny_data("zero");
  Config cfg = tiny_train_config(2);
  cfg.epochs = 0;
  ChangeModel<float> model(cfg.model_config());
  std::vector<float> before = model.params().entries.front().tensor.data();
  TrainResult r = train_model(model, data, cfg, "");
  CHECK(r.history.empty());
  CHECK(r.steps == 0);
  CHECK(model.params().entries.front().tensor.data() == before);
}

TEST_CASE("identical seeds give bit-identical loss curves and history files") {
  DatasetManifest data = tiny_data("det");
  fs::path out1 = fs::temp_directory_path() / "mcd_train_test_det_out1";
  fs::path out2 = fs::temp_directory_path() / "mcd_train_test_det_out2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  Config cfg = tiny_train_config(2);

  ChangeModel<float> m1(cfg.model_config());
  TrainResult r1 = train_model(m1, data, cfg, out1);
  ChangeModel<float> m2(cfg.model_config());
  TrainResult r2 = train_model(m2, data, cfg, out2);

  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_miou == r2.history[i].val_miou);
  }
  std::ifstream f1(out1 / "history.csv", std::ios::binary), f2(out2 / "history.csv", std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(!b1.empty());
  CHECK(b1 == b2);
}

TEST_CASE("a diverging run aborts with a diagnostic naming the batch") {
  DatasetManifest data = tiny_data("nan");
  Config cfg = tiny_train_config(2);
  cfg.base_lr = 1e8;  // drive the parameters to overflow
  cfg.eta_min = 0;
  cfg.epochs = 40;
  ChangeModel<float> model(cfg.model_config());
  CHECK_THROWS_WITH_AS(train_model(model, data, cfg, ""), doctest::Contains("non-finite loss"), TensorError);
}

TEST_CASE("evaluate on an empty split is an error") {
  DatasetManifest data = tiny_data("empty", 0);
  Config cfg = tiny_train_config(2);
  ChangeModel<float> model(cfg.model_config());
  CHECK_THROWS_WITH_AS(evaluate_model(model, data, "train"), doctest::Contains("empty dataset"), DataError);
}

TEST_CASE("class-count mismatch between model and dataset is an error") {
  DatasetManifest data = tiny_data("mismatch", 2, 3);
  Config cfg = tiny_train_config(2);  // expects k = 2
  ChangeModel<float> model(cfg.model_config());
  CHECK_THROWS_AS(train_model(model, data, cfg, ""), DataError);
  CHECK_THROWS_AS(evaluate_model(model, data, "train"), DataError);
}

TEST_CASE("an all-background predictor scores exactly what label statistics dictate") {
  DatasetManifest data = tiny_data("zero_pred", 3, 2);
  auto samples = load_split(data, "train");
  REQUIRE(!samples.empty());

  long long counts[3] = {0, 0, 0};
  long long total = 0;
  ConfusionMatrix cm(3);
  for (const auto& s : samples) {
    LabelMap gt(1, s.label.h, s.label.w);
    std::memcpy(gt.v.data(), s.label.pixels.data(), s.label.pixels.size());
    LabelMap zeros(1, s.label.h, s.label.w, 0);
    cm.update(zeros, gt);
    for (auto v : s.label.pixels) counts[v]++;
    total += s.label.pixels.size();
  }
  MetricReport rep = compute_metrics(cm);
  CHECK(rep.oa == doctest::Approx((double)counts[0] / total).epsilon(1e-15));
  for (int c = 1; c <= 2; ++c) {
    CHECK(rep.per_class[(size_t)c].recall == 0.0);
    CHECK(rep.per_class[(size_t)c].precision == 0.0);
    CHECK(rep.per_class[(size_t)c].iou == 0.0);
    CHECK(rep.per_class[(size_t)c].fn == counts[c]);
  }
  CHECK(rep.miou_changed == 0.0);
  // class 0: everything predicted, so recall 1 and precision = share of background
  CHECK(rep.per_class[0].recall == 1.0);
  CHECK(rep.per_class[0].precision == doctest::Approx((double)counts[0] / total).epsilon(1e-15));
}

TEST_CASE("best checkpoint tracks validation miou over changed classes") {
  DatasetManifest data = tiny_data("best", 2);
  fs::path out = fs::temp_directory_path() / "mcd_train_test_best_out";
  fs::remove_all(out);
  Config cfg = tiny_train_config(2);
  cfg.epochs = 3;
  ChangeModel<float> model(cfg.model_config());
  TrainResult r = train_model(model, data, cfg, out);
  REQUIRE(r.best_epoch >= 0);
  double best = -1;
  int best_epoch = -1;
  for (const auto& h : r.history)
    if (h.val_miou > best) {
      best = h.val_miou;
      best_epoch = h.epoch;
    }
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.best_val_miou == best);
  CHECK(fs::exists(r.best_checkpoint));
}

TEST_CASE("inverse-frequency class weights average the dataset statistics") {
  DatasetManifest data = tiny_data("alpha", 2);
  auto samples = load_split(data, "train");
  auto alpha = inverse_frequency_alpha(samples, 3);
  REQUIRE(alpha.size() == 3);
  long long counts[3] = {0, 0, 0};
  long long total = 0;
  for (const auto& s : samples)
    for (auto v : s.label.pixels) {
      counts[v]++;
      ++total;
    }
  for (int c = 0; c < 3; ++c)
    if (counts[c] > 0) CHECK(alpha[(size_t)c] == doctest::Approx((double)total / (3.0 * counts[c])).epsilon(1e-12));
}
