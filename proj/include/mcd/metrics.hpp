#pragma once
// Confusion-matrix evaluation: overall accuracy, per-class precision /
// recall / F1 / IoU, and macro means in two variants (all classes, and
// changed classes only, i.e. class 0 excluded).

#include <cstdint>
#include <string>
#include <vector>

#include "mcd/label.hpp"

namespace mcd {

// counts[pred][gt]: pixels predicted class `pred` with ground truth `gt`
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes) : nc_(num_classes), counts_((size_t)num_classes * num_classes, 0) {}

  int num_classes() const { return nc_; }
  long long at(int pred, int gt) const { return counts_[(size_t)pred * nc_ + gt]; }
  long long& at(int pred, int gt) { return counts_[(size_t)pred * nc_ + gt]; }
  long long total() const;

  void update(const LabelMap& pred, const LabelMap& gt);
  void merge(const ConfusionMatrix& other);

 private:
  int nc_ = 0;
  std::vector<long long> counts_;
};

struct ClassMetrics {
  long long tp = 0, fp = 0, fn = 0;
  double accuracy = 0;  // one-vs-rest
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double iou = 0;
  bool counted = false;  // TP+FP+FN > 0; otherwise excluded from macro means
};

struct MetricReport {
  double oa = 0;
  std::vector<ClassMetrics> per_class;
  // macro means over classes with support, including class 0
  double macro_precision_all = 0, macro_recall_all = 0, macro_f1_all = 0, miou_all = 0;
  // macro means over changed classes only (class 0 excluded)
  double macro_precision_changed = 0, macro_recall_changed = 0, macro_f1_changed = 0, miou_changed = 0;

  std::string table(const std::vector<std::string>& class_names = {}) const;
  std::string key_values() const;
};

MetricReport compute_metrics(const ConfusionMatrix& cm);

}  // namespace mcd
