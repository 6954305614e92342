#include "mcd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mcd {

namespace {

const char kMagic[5] = {'M', 'C', 'D', 'S', '1'};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back((uint8_t)v);
  out.push_back((uint8_t)(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back((uint8_t)(v >> (8 * k)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back((uint8_t)(v >> (8 * k)));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint: truncated file: " + path);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = (uint16_t)(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= (uint32_t)buf[pos + k] << (8 * k);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= (uint64_t)buf[pos + k] << (8 * k);
    pos += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
};

}  // namespace

void write_checkpoint_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records,
                              uint64_t config_hash) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 5);
  put_u32(out, (uint32_t)records.size());
  for (const auto& r : records) {
    if (r.name.size() > 0xffff) throw IoError("checkpoint: record name too long: " + r.name);
    put_u16(out, (uint16_t)r.name.size());
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back((uint8_t)r.dtype);
    out.push_back((uint8_t)r.dims.size());
    for (int d : r.dims) put_u32(out, (uint32_t)d);
    out.insert(out.end(), r.raw.begin(), r.raw.end());
  }
  put_u64(out, config_hash);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path.string());
  f.write((const char*)out.data(), (std::streamsize)out.size());
  if (!f) throw IoError("checkpoint: write failed: " + path.string());
}

std::vector<TensorRecord> read_checkpoint_records(const std::filesystem::path& path, uint64_t& config_hash_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string ps = path.string();
  Reader rd{buf, 0, ps};

  rd.need(5);
  if (std::memcmp(buf.data(), kMagic, 5) != 0) throw IoError("checkpoint: bad magic in " + ps);
  rd.pos = 5;
  const uint32_t count = rd.u32();

  std::vector<TensorRecord> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const uint16_t name_len = rd.u16();
    rd.need(name_len);
    r.name.assign((const char*)buf.data() + rd.pos, name_len);
    rd.pos += name_len;
    r.dtype = rd.u8();
    if (r.dtype != 0 && r.dtype != 1) throw IoError("checkpoint: bad dtype code for " + r.name);
    const uint8_t ndim = rd.u8();
    long long numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      const uint32_t ext = rd.u32();
      r.dims.push_back((int)ext);
      numel *= ext;
    }
    const size_t bytes = (size_t)numel * (r.dtype == 0 ? 4 : 8);
    rd.need(bytes);
    r.raw.assign(buf.data() + rd.pos, buf.data() + rd.pos + bytes);
    rd.pos += bytes;
    records.push_back(std::move(r));
  }
  config_hash_out = rd.u64();
  if (rd.pos != buf.size()) throw IoError("checkpoint: trailing bytes in " + ps);
  return records;
}

}  // namespace mcd
