#pragma once
// Training and evaluation driver (32-bit compute). Fully deterministic under
// a fixed config seed: seeded shuffling, seeded augmentation, seeded dropout,
// single-threaded forward/backward.

#include <filesystem>
#include <string>
#include <vector>

#include "mcd/config.hpp"
#include "mcd/data.hpp"
#include "mcd/metrics.hpp"
#include "mcd/model.hpp"
#include "mcd/optim.hpp"

namespace mcd {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_miou = 0;  // changed classes
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  long long steps = 0;
  int best_epoch = -1;
  double best_val_miou = -1.0;
  std::filesystem::path best_checkpoint;  // empty when out_dir was empty
};

// Builds (N,3,H,W) float tensors in [0,1] plus the stacked label map.
// All samples in a batch must share dimensions.
void batch_to_tensors(const std::vector<BiTemporalSample>& samples, Tensor<float>& t1, Tensor<float>& t2,
                      LabelMap& labels);

// Per-class inverse-frequency focal weights from a sample list (mean 1).
std::vector<double> inverse_frequency_alpha(const std::vector<BiTemporalSample>& samples, int num_classes);

GroupLr group_lr_at(double epoch, const Config& cfg);

LabelMap predict_labels(ChangeModel<float>& model, const BiTemporalSample& sample);

MetricReport evaluate_model(ChangeModel<float>& model, const DatasetManifest& data, const std::string& split);
MetricReport evaluate_model(ChangeModel<float>& model, const std::vector<BiTemporalSample>& samples, int num_classes);

// Runs the full loop: seeded epoch shuffling, augmentation, composite loss,
// optimizer step, per-epoch validation, best-checkpoint retention. When
// out_dir is nonempty, writes history.csv, best.ckpt and config.cfg there.
TrainResult train_model(ChangeModel<float>& model, const DatasetManifest& data, const Config& cfg,
                        const std::filesystem::path& out_dir);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);

}  // namespace mcd
