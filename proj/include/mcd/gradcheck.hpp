#pragma once
// Central finite-difference gradient checking at 64-bit. The forward callback
// is invoked once under a tape for analytic gradients, then twice per element
// for the numeric estimate (no tape active, so nothing is recorded).

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mcd/tensor.hpp"

namespace mcd {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int worst_input = -1;
  long long worst_index = -1;
  long long checked = 0;

  bool pass(double tol = 1e-4) const { return checked > 0 && max_rel_err <= tol; }

  std::string describe() const {
    std::ostringstream o;
    o << "max_rel_err=" << max_rel_err << " at input " << worst_input << "[" << worst_index
      << "] analytic=" << worst_analytic << " numeric=" << worst_numeric << " (" << checked << " elements)";
    return o.str();
  }
};

// rel = |a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients
// from amplifying finite-difference noise into false alarms.
inline double grad_rel_err(double analytic, double numeric, double floor_val = 1e-3) {
  double den = std::max(std::max(std::abs(analytic), std::abs(numeric)), floor_val);
  return std::abs(analytic - numeric) / den;
}

inline GradCheckReport gradcheck(const std::function<Tensor<double>()>& forward,
                                 const std::vector<Tensor<double>>& inputs, double h = 1e-5) {
  for (const auto& t : inputs) {
    const_cast<Tensor<double>&>(t).set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = forward();
    tcheck(loss.size() == 1, "gradcheck: forward must return a scalar");
    tape.backward(loss);
  }
  for (const auto& t : inputs) analytic.push_back(t.grad());

  GradCheckReport rep;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].data();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double save = vals[j];
      vals[j] = save + h;
      const double fp = forward().data()[0];
      vals[j] = save - h;
      const double fm = forward().data()[0];
      vals[j] = save;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[ti][j];
      const double rel = grad_rel_err(ana, num);
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_analytic = ana;
        rep.worst_numeric = num;
        rep.worst_input = (int)ti;
        rep.worst_index = (long long)j;
      }
    }
  }
  return rep;
}

// Scalarizes a non-scalar output with fixed random weights so every output
// element influences the checked loss.
template <typename T>
Tensor<T> scalarize(const Tensor<T>& out, Rng& rng) {
  Tensor<T> w = rand_uniform<T>(out.shape(), rng, -1.0, 1.0);
  return sum_all(mul(out, w));
}

}  // namespace mcd
