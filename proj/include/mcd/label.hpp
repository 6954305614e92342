#pragma once
// Dense integer class maps (N,H,W), values 0..K with 0 = no change.

#include <cstdint>
#include <vector>

#include "mcd/errors.hpp"

namespace mcd {

struct LabelMap {
  int n = 1, h = 0, w = 0;
  std::vector<uint8_t> v;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, uint8_t fill = 0) : n(n_), h(h_), w(w_), v((size_t)n_ * h_ * w_, fill) {}

  long long size() const { return (long long)n * h * w; }
  uint8_t& at(int ni, int y, int x) { return v[((size_t)ni * h + y) * w + x]; }
  uint8_t at(int ni, int y, int x) const { return v[((size_t)ni * h + y) * w + x]; }
};

}  // namespace mcd
