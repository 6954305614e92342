#pragma once
// Binary checkpoint container (little-endian):
//   magic "MCDS1"
//   u32 record count
//   per record: u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64),
//               u8 ndim, ndim x u32 dims, raw little-endian element data
//   trailing u64 config hash
// Model parameters and buffers are stored under their registry names,
// optimizer state under "opt.<name>.m" / "opt.<name>.v" plus "opt.step",
// and the epoch under "meta.epoch". Round-trips are bit-exact.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "mcd/errors.hpp"
#include "mcd/optim.hpp"
#include "mcd/params.hpp"

namespace mcd {

struct TensorRecord {
  std::string name;
  int dtype = 0;  // 0 = f32, 1 = f64
  Shape dims;
  std::vector<uint8_t> raw;
};

void write_checkpoint_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records,
                              uint64_t config_hash);
std::vector<TensorRecord> read_checkpoint_records(const std::filesystem::path& path, uint64_t& config_hash_out);

namespace detail {

template <typename T>
constexpr int dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
TensorRecord to_record(const std::string& name, const Tensor<T>& t) {
  TensorRecord r;
  r.name = name;
  r.dtype = dtype_code<T>();
  r.dims = t.shape();
  r.raw.resize((size_t)t.size() * sizeof(T));
  const T* p = t.ptr();
  uint8_t* out = r.raw.data();
  for (long long i = 0; i < t.size(); ++i) {
    // element bytes in little-endian order
    uint64_t bits = 0;
    if constexpr (std::is_same_v<T, float>) {
      uint32_t b;
      std::memcpy(&b, &p[i], 4);
      bits = b;
      for (int k = 0; k < 4; ++k) out[(size_t)i * 4 + k] = (uint8_t)(bits >> (8 * k));
    } else {
      std::memcpy(&bits, &p[i], 8);
      for (int k = 0; k < 8; ++k) out[(size_t)i * 8 + k] = (uint8_t)(bits >> (8 * k));
    }
  }
  return r;
}

template <typename T>
void record_into(const TensorRecord& r, const Tensor<T>& dst) {
  if (r.dtype != dtype_code<T>()) throw IoError("checkpoint: dtype mismatch for " + r.name);
  if (r.dims != dst.shape())
    throw IoError("checkpoint: shape mismatch for " + r.name + ", file has " + shape_str(r.dims) +
                  " but model expects " + shape_str(dst.shape()));
  T* p = dst.ptr();
  const uint8_t* in = r.raw.data();
  for (long long i = 0; i < dst.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= (uint32_t)in[(size_t)i * 4 + k] << (8 * k);
      std::memcpy(&p[i], &bits, 4);
    } else {
      uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= (uint64_t)in[(size_t)i * 8 + k] << (8 * k);
      std::memcpy(&p[i], &bits, 8);
    }
  }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params, const AdamW<T>* opt, int epoch,
                     uint64_t config_hash) {
  std::vector<TensorRecord> records;
  for (const auto& e : params.entries) records.push_back(detail::to_record(e.name, e.tensor));
  if (opt) {
    for (const auto& slot : opt->slots()) {
      records.push_back(detail::to_record("opt." + slot.name + ".m", slot.m));
      records.push_back(detail::to_record("opt." + slot.name + ".v", slot.v));
    }
    Tensor<T> step(Shape{1}, (T)opt->step_count());
    records.push_back(detail::to_record("opt.step", step));
  }
  Tensor<T> ep(Shape{1}, (T)epoch);
  records.push_back(detail::to_record("meta.epoch", ep));
  write_checkpoint_records(path, records, config_hash);
}

// Loads by name into the existing tensors; every registry entry (and, when an
// optimizer is supplied, every optimizer slot) must be present in the file.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParamSet<T>& params, AdamW<T>* opt, int* epoch_out,
                     uint64_t* config_hash_out) {
  uint64_t hash = 0;
  std::vector<TensorRecord> records = read_checkpoint_records(path, hash);
  if (config_hash_out) *config_hash_out = hash;
  auto find = [&records](const std::string& name) -> const TensorRecord* {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  };
  for (auto& e : params.entries) {
    const TensorRecord* r = find(e.name);
    if (!r) throw IoError("checkpoint: missing record '" + e.name + "' in " + path.string());
    detail::record_into(*r, e.tensor);
  }
  if (opt) {
    for (auto& slot : opt->slots()) {
      const TensorRecord* rm = find("opt." + slot.name + ".m");
      const TensorRecord* rv = find("opt." + slot.name + ".v");
      if (!rm || !rv) throw IoError("checkpoint: missing optimizer state for '" + slot.name + "'");
      detail::record_into(*rm, slot.m);
      detail::record_into(*rv, slot.v);
    }
    const TensorRecord* rs = find("opt.step");
    if (!rs) throw IoError("checkpoint: missing record 'opt.step'");
    Tensor<T> step(Shape{1}, T(0));
    detail::record_into(*rs, step);
    opt->step_count_ref() = (long long)step.ptr()[0];
  }
  if (epoch_out) {
    const TensorRecord* re = find("meta.epoch");
    if (!re) throw IoError("checkpoint: missing record 'meta.epoch'");
    Tensor<T> ep(Shape{1}, T(0));
    detail::record_into(*re, ep);
    *epoch_out = (int)ep.ptr()[0];
  }
}

}  // namespace mcd
