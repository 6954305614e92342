#pragma once
// Named, shaped parameter collection partitioned into groups. Entries share
// storage with the layers that use them; buffers (running statistics) are
// serialized but never touched by the optimizer.

#include <cmath>
#include <string>
#include <vector>

#include "mcd/errors.hpp"
#include "mcd/rng.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

enum class ParamGroup { frozen, adapter, prompt, lora, mscad, decoder };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::frozen: return "frozen";
    case ParamGroup::adapter: return "adapter";
    case ParamGroup::prompt: return "prompt";
    case ParamGroup::lora: return "lora";
    case ParamGroup::mscad: return "mscad";
    case ParamGroup::decoder: return "decoder";
  }
  return "?";
}

template <typename T>
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    ParamGroup group;
    bool buffer;  // state, not a parameter: excluded from optimization and counts
  };
  std::vector<Entry> entries;

  // returns a handle sharing storage with the registered entry
  Tensor<T> add(const std::string& name, Tensor<T> t, ParamGroup group) {
    t.set_requires_grad(group != ParamGroup::frozen);
    entries.push_back(Entry{name, t, group, false});
    return t;
  }

  Tensor<T> add_buffer(const std::string& name, Tensor<T> t, ParamGroup group) {
    t.set_requires_grad(false);
    entries.push_back(Entry{name, t, group, true});
    return t;
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  long long count(ParamGroup group) const {
    long long n = 0;
    for (const auto& e : entries)
      if (!e.buffer && e.group == group) n += e.tensor.size();
    return n;
  }

  long long count_total() const {
    long long n = 0;
    for (const auto& e : entries)
      if (!e.buffer) n += e.tensor.size();
    return n;
  }

  long long count_trainable() const {
    long long n = 0;
    for (const auto& e : entries)
      if (!e.buffer && e.group != ParamGroup::frozen) n += e.tensor.size();
    return n;
  }

  void zero_grad() const {
    for (const auto& e : entries)
      if (!e.buffer && e.group != ParamGroup::frozen) e.tensor.zero_grad();
  }
};

namespace init {

template <typename T>
Tensor<T> conv_weight(ParamSet<T>& ps, const std::string& name, int cout, int cin, int k, Rng& rng, ParamGroup g) {
  const double stddev = std::sqrt(2.0 / ((double)cin * k * k));
  return ps.add(name, randn<T>(Shape{cout, cin, k, k}, rng, stddev), g);
}

template <typename T>
Tensor<T> zeros_param(ParamSet<T>& ps, const std::string& name, Shape shape, ParamGroup g) {
  return ps.add(name, Tensor<T>(std::move(shape), T(0)), g);
}

}  // namespace init

}  // namespace mcd
