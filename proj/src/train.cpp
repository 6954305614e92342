#include "mcd/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mcd/checkpoint.hpp"
#include "mcd/losses.hpp"

namespace mcd {

void batch_to_tensors(const std::vector<BiTemporalSample>& samples, Tensor<float>& t1, Tensor<float>& t2,
                      LabelMap& labels) {
  tcheck(!samples.empty(), "batch: empty sample list");
  const int H = samples[0].t1.h, W = samples[0].t1.w;
  const int N = (int)samples.size();
  for (const auto& s : samples)
    if (s.t1.h != H || s.t1.w != W)
      throw DataError("batch: sample '" + s.id + "' size differs from the rest of the batch");

  t1 = Tensor<float>(Shape{N, 3, H, W});
  t2 = Tensor<float>(Shape{N, 3, H, W});
  labels = LabelMap(N, H, W);
  const float inv = 1.0f / 255.0f;
  for (int n = 0; n < N; ++n) {
    const BiTemporalSample& s = samples[(size_t)n];
    float* p1 = t1.ptr() + (long long)n * 3 * H * W;
    float* p2 = t2.ptr() + (long long)n * 3 * H * W;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          p1[((long long)c * H + y) * W + x] = s.t1.at(y, x, c) * inv;
          p2[((long long)c * H + y) * W + x] = s.t2.at(y, x, c) * inv;
        }
    std::memcpy(labels.v.data() + (size_t)n * H * W, s.label.pixels.data(), (size_t)H * W);
  }
}

std::vector<double> inverse_frequency_alpha(const std::vector<BiTemporalSample>& samples, int num_classes) {
  std::vector<long long> counts((size_t)num_classes, 0);
  long long total = 0;
  for (const auto& s : samples)
    for (uint8_t v : s.label.pixels) {
      counts[(size_t)v]++;
      ++total;
    }
  std::vector<double> alpha((size_t)num_classes, 1.0);
  if (total == 0) return alpha;
  for (int c = 0; c < num_classes; ++c)
    alpha[(size_t)c] = counts[(size_t)c] > 0 ? (double)total / ((double)num_classes * counts[(size_t)c]) : 1.0;
  return alpha;
}

GroupLr group_lr_at(double epoch, const Config& cfg) {
  const double lr = lr_at(epoch, cfg.base_lr, cfg.sched_t0, cfg.sched_tmult, cfg.eta_min);
  GroupLr g{};
  g[(size_t)ParamGroup::frozen] = lr * cfg.lr_mult_frozen;
  g[(size_t)ParamGroup::adapter] = lr * cfg.lr_mult_adapter;
  g[(size_t)ParamGroup::prompt] = lr * cfg.lr_mult_prompt;
  g[(size_t)ParamGroup::lora] = lr * cfg.lr_mult_lora;
  g[(size_t)ParamGroup::mscad] = lr * cfg.lr_mult_mscad;
  g[(size_t)ParamGroup::decoder] = lr * cfg.lr_mult_decoder;
  return g;
}

LabelMap predict_labels(ChangeModel<float>& model, const BiTemporalSample& sample) {
  Tensor<float> t1, t2;
  LabelMap unused;
  batch_to_tensors({sample}, t1, t2, unused);
  Rng rng(0);  // eval mode consumes no randomness
  Tensor<float> logits = model.forward(t1, t2, Mode::eval, rng);
  const int C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  LabelMap pred(1, H, W);
  const float* p = logits.ptr();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int best = 0;
      float bv = p[(long long)y * W + x];
      for (int c = 1; c < C; ++c) {
        const float v = p[((long long)c * H + y) * W + x];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      pred.at(0, y, x) = (uint8_t)best;
    }
  return pred;
}

MetricReport evaluate_model(ChangeModel<float>& model, const std::vector<BiTemporalSample>& samples,
                            int num_classes) {
  if (samples.empty()) throw DataError("evaluate: empty dataset");
  ConfusionMatrix cm(num_classes);
  for (const auto& s : samples) {
    LabelMap pred = predict_labels(model, s);
    LabelMap gt(1, s.label.h, s.label.w);
    std::memcpy(gt.v.data(), s.label.pixels.data(), s.label.pixels.size());
    cm.update(pred, gt);
  }
  return compute_metrics(cm);
}

MetricReport evaluate_model(ChangeModel<float>& model, const DatasetManifest& data, const std::string& split) {
  if (model.config().num_classes != data.k + 1)
    throw DataError("evaluate: model expects " + std::to_string(model.config().num_classes) +
                    " classes but dataset has k+1 = " + std::to_string(data.k + 1));
  std::vector<BiTemporalSample> samples = load_split(data, split);
  return evaluate_model(model, samples, model.config().num_classes);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("history: cannot write " + path.string());
  f << "epoch,train_loss,val_miou,lr\n";
  char line[160];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_miou, h.lr);
    f << line;
  }
  if (!f) throw IoError("history: write failed: " + path.string());
}

TrainResult train_model(ChangeModel<float>& model, const DatasetManifest& data, const Config& cfg,
                        const std::filesystem::path& out_dir) {
  if (model.config().num_classes != data.k + 1)
    throw DataError("train: model expects " + std::to_string(model.config().num_classes) +
                    " classes but dataset has k+1 = " + std::to_string(data.k + 1));

  std::vector<BiTemporalSample> train_set = load_split(data, "train");
  std::vector<BiTemporalSample> val_set = load_split(data, "val");
  if (train_set.empty() && cfg.epochs > 0) throw DataError("train: empty training split");

  LossConfig loss_cfg = cfg.loss_config();
  if (cfg.focal_alpha == AlphaMode::inv_freq)
    loss_cfg.focal_alpha = inverse_frequency_alpha(train_set, cfg.num_classes);

  AdamW<float> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  AugmentationConfig aug{cfg.aug_flip, cfg.aug_rotate};
  Rng run_rng(cfg.seed);

  TrainResult result;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const GroupLr glr = group_lr_at(epoch, cfg);
    Rng erng = run_rng.fork((uint64_t)epoch);
    erng.shuffle(order);

    double loss_sum = 0;
    int batches = 0;
    for (size_t pos = 0; pos < order.size() && !stop; pos += (size_t)cfg.batch) {
      std::vector<BiTemporalSample> batch;
      for (size_t i = pos; i < std::min(order.size(), pos + (size_t)cfg.batch); ++i)
        batch.push_back(augment(train_set[order[i]], aug, erng));
      Tensor<float> t1, t2;
      LabelMap labels;
      batch_to_tensors(batch, t1, t2, labels);

      model.params().zero_grad();
      float loss_value;
      {
        Tape<float> tape;
        Tensor<float> logits = model.forward(t1, t2, Mode::train, erng);
        Tensor<float> loss = composite_loss(logits, labels, loss_cfg);
        loss_value = loss.ptr()[0];
        if (!std::isfinite(loss_value))
          throw TensorError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (first sample '" + batch.front().id + "')");
        tape.backward(loss);
      }
      opt.step(model.params(), glr);
      loss_sum += loss_value;
      ++batches;
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    es.lr = lr_at(epoch, cfg.base_lr, cfg.sched_t0, cfg.sched_tmult, cfg.eta_min);
    if (!val_set.empty()) {
      MetricReport rep = evaluate_model(model, val_set, cfg.num_classes);
      es.val_miou = rep.miou_changed;
      if (es.val_miou > result.best_val_miou) {
        result.best_val_miou = es.val_miou;
        result.best_epoch = epoch;
        if (!out_dir.empty()) {
          result.best_checkpoint = out_dir / "best.ckpt";
          save_checkpoint(result.best_checkpoint, model.params(), &opt, epoch, config_hash(cfg));
        }
      }
    } else {
      es.val_miou = 0.0;  // no validation split
      result.best_epoch = epoch;
      if (!out_dir.empty()) {
        result.best_checkpoint = out_dir / "best.ckpt";
        save_checkpoint(result.best_checkpoint, model.params(), &opt, epoch, config_hash(cfg));
      }
    }
    result.history.push_back(es);
  }

  if (!out_dir.empty()) {
    write_history_csv(out_dir / "history.csv", result.history);
    save_config(cfg, out_dir / "config.cfg");
  }
  return result;
}

}  // namespace mcd
