#include "mcd/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace mcd {

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long c : counts_) t += c;
  return t;
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& gt) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w)
    throw DataError("confusion: prediction and ground truth sizes differ");
  for (long long i = 0; i < pred.size(); ++i) {
    const int p = pred.v[(size_t)i];
    const int g = gt.v[(size_t)i];
    if (p >= nc_ || g >= nc_)
      throw DataError("confusion: class index " + std::to_string(p >= nc_ ? p : g) + " out of range for " +
                      std::to_string(nc_) + " classes");
    counts_[(size_t)p * nc_ + g]++;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.nc_ != nc_) throw DataError("confusion: merging matrices of different class counts");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricReport compute_metrics(const ConfusionMatrix& cm) {
  const int nc = cm.num_classes();
  const long long total = cm.total();
  if (total == 0) throw DataError("metrics: empty confusion matrix");

  MetricReport rep;
  rep.per_class.resize((size_t)nc);

  long long diag = 0;
  for (int c = 0; c < nc; ++c) diag += cm.at(c, c);
  rep.oa = (double)diag / (double)total;

  for (int c = 0; c < nc; ++c) {
    ClassMetrics& m = rep.per_class[(size_t)c];
    m.tp = cm.at(c, c);
    for (int j = 0; j < nc; ++j) {
      if (j == c) continue;
      m.fp += cm.at(c, j);
      m.fn += cm.at(j, c);
    }
    m.counted = (m.tp + m.fp + m.fn) > 0;
    m.precision = (m.tp + m.fp) > 0 ? (double)m.tp / (double)(m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) > 0 ? (double)m.tp / (double)(m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.iou = m.counted ? (double)m.tp / (double)(m.tp + m.fp + m.fn) : 0.0;
    m.accuracy = (double)(total - m.fp - m.fn) / (double)total;
  }

  auto macro = [&](int first_class, double& p, double& r, double& f1, double& iou) {
    int n = 0;
    p = r = f1 = iou = 0.0;
    for (int c = first_class; c < nc; ++c) {
      const ClassMetrics& m = rep.per_class[(size_t)c];
      if (!m.counted) continue;
      p += m.precision;
      r += m.recall;
      f1 += m.f1;
      iou += m.iou;
      ++n;
    }
    if (n > 0) {
      p /= n;
      r /= n;
      f1 /= n;
      iou /= n;
    }
  };
  macro(0, rep.macro_precision_all, rep.macro_recall_all, rep.macro_f1_all, rep.miou_all);
  macro(1, rep.macro_precision_changed, rep.macro_recall_changed, rep.macro_f1_changed, rep.miou_changed);
  return rep;
}

std::string MetricReport::table(const std::vector<std::string>& class_names) const {
  std::ostringstream o;
  char line[256];
  o << "class                    OA        P        R       F1      IoU\n";
  for (size_t c = 0; c < per_class.size(); ++c) {
    const ClassMetrics& m = per_class[c];
    std::string name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    if (name.size() > 20) name.resize(20);
    std::snprintf(line, sizeof(line), "%-20s %8.4f %8.4f %8.4f %8.4f %8.4f%s\n", name.c_str(), m.accuracy,
                  m.precision, m.recall, m.f1, m.iou, m.counted ? "" : "  (no support)");
    o << line;
  }
  std::snprintf(line, sizeof(line), "overall accuracy      %.6f\n", oa);
  o << line;
  std::snprintf(line, sizeof(line), "macro (all classes)    P=%.4f R=%.4f F1=%.4f mIoU=%.4f\n", macro_precision_all,
                macro_recall_all, macro_f1_all, miou_all);
  o << line;
  std::snprintf(line, sizeof(line), "macro (changed only)   P=%.4f R=%.4f F1=%.4f mIoU=%.4f\n",
                macro_precision_changed, macro_recall_changed, macro_f1_changed, miou_changed);
  o << line;
  return o.str();
}

std::string MetricReport::key_values() const {
  std::ostringstream o;
  char line[128];
  auto kv = [&](const char* k, double v) {
    std::snprintf(line, sizeof(line), "%s=%.12g\n", k, v);
    o << line;
  };
  kv("oa", oa);
  kv("macro_precision_all", macro_precision_all);
  kv("macro_recall_all", macro_recall_all);
  kv("macro_f1_all", macro_f1_all);
  kv("miou_all", miou_all);
  kv("macro_precision_changed", macro_precision_changed);
  kv("macro_recall_changed", macro_recall_changed);
  kv("macro_f1_changed", macro_f1_changed);
  kv("miou_changed", miou_changed);
  for (size_t c = 0; c < per_class.size(); ++c) {
    const ClassMetrics& m = per_class[c];
    std::string p = "class" + std::to_string(c);
    kv((p + "_oa").c_str(), m.accuracy);
    kv((p + "_precision").c_str(), m.precision);
    kv((p + "_recall").c_str(), m.recall);
    kv((p + "_f1").c_str(), m.f1);
    kv((p + "_iou").c_str(), m.iou);
  }
  return o.str();
}

}  // namespace mcd
