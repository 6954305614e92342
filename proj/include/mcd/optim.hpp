#pragma once
// AdamW with decoupled weight decay and per-group learning rates, plus the
// cosine-annealing-with-warm-restarts schedule (epoch granularity; cycle i
// has length t0 * tmult^i, so restarts fall at 30, 90, 210, ... for the
// defaults t0=30, tmult=2).

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mcd/params.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

inline double lr_at(double epoch, double base_lr, double t0, double tmult, double eta_min) {
  tcheck(epoch >= 0, "lr_at: epoch must be >= 0");
  double t = epoch;
  double cycle = t0;
  while (t >= cycle) {
    t -= cycle;
    cycle *= tmult;
  }
  return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + std::cos(3.14159265358979323846 * t / cycle));
}

// effective learning rate per parameter group, indexed by ParamGroup
using GroupLr = std::array<double, 6>;

template <typename T>
class AdamW {
 public:
  struct Slot {
    std::string name;
    Tensor<T> m, v;
  };

  AdamW() = default;

  AdamW(const ParamSet<T>& params, double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (const auto& e : params.entries) {
      if (e.buffer || e.group == ParamGroup::frozen) continue;
      slots_.push_back(Slot{e.name, Tensor<T>(e.tensor.shape(), T(0)), Tensor<T>(e.tensor.shape(), T(0))});
    }
  }

  long long step_count() const { return step_; }
  long long& step_count_ref() { return step_; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

  // Frozen entries are never touched; trainable entries must carry gradients.
  void step(const ParamSet<T>& params, const GroupLr& lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, (double)step_);
    const double bc2 = 1.0 - std::pow(beta2_, (double)step_);
    size_t si = 0;
    for (const auto& e : params.entries) {
      if (e.buffer || e.group == ParamGroup::frozen) continue;
      tcheck(si < slots_.size() && slots_[si].name == e.name, "adamw: state does not match parameter set");
      Slot& slot = slots_[si++];
      tcheck(e.tensor.grad_materialized(), "adamw: missing gradient for trainable parameter " + e.name);
      const double group_lr = lr[(size_t)e.group];
      const T* g = e.tensor.grad_ptr();
      T* p = e.tensor.ptr();
      T* m = slot.m.ptr();
      T* v = slot.v.ptr();
      const long long n = e.tensor.size();
      for (long long i = 0; i < n; ++i) {
        m[i] = (T)(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        v[i] = (T)(beta2_ * v[i] + (1.0 - beta2_) * (double)g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] = (T)(p[i] - group_lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[i]));
      }
    }
  }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0.0;
  long long step_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace mcd
