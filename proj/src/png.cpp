#include "mcd/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace mcd {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back((uint8_t)(v >> 24));
  out.push_back((uint8_t)(v >> 16));
  out.push_back((uint8_t)(v >> 8));
  out.push_back((uint8_t)v);
}

uint32_t get_u32(const uint8_t* p) {
  return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | (uint32_t)p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
  put_u32(out, (uint32_t)len);
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  uint32_t crc = (uint32_t)crc32(0L, out.data() + start, (uInt)(4 + len));
  put_u32(out, crc);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.c != 1 && img.c != 3) throw IoError("png: only 1-channel or 3-channel images are written");
  if (img.w <= 0 || img.h <= 0 || img.pixels.size() != (size_t)img.w * img.h * img.c)
    throw IoError("png: inconsistent image buffer for " + path.string());

  std::vector<uint8_t> out;
  out.insert(out.end(), kSignature, kSignature + 8);

  uint8_t ihdr[13];
  ihdr[0] = (uint8_t)(img.w >> 24);
  ihdr[1] = (uint8_t)(img.w >> 16);
  ihdr[2] = (uint8_t)(img.w >> 8);
  ihdr[3] = (uint8_t)img.w;
  ihdr[4] = (uint8_t)(img.h >> 24);
  ihdr[5] = (uint8_t)(img.h >> 16);
  ihdr[6] = (uint8_t)(img.h >> 8);
  ihdr[7] = (uint8_t)img.h;
  ihdr[8] = 8;                              // bit depth
  ihdr[9] = img.c == 1 ? 0 : 2;             // gray / truecolor
  ihdr[10] = 0;                             // compression
  ihdr[11] = 0;                             // filter method
  ihdr[12] = 0;                             // no interlace
  append_chunk(out, "IHDR", ihdr, 13);

  const size_t stride = (size_t)img.w * img.c;
  std::vector<uint8_t> raw((stride + 1) * img.h);
  for (int y = 0; y < img.h; ++y) {
    raw[(stride + 1) * y] = 0;  // filter None
    std::memcpy(raw.data() + (stride + 1) * y + 1, img.pixels.data() + stride * y, stride);
  }

  uLongf bound = compressBound((uLong)raw.size());
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
    throw IoError("png: deflate failed for " + path.string());
  comp.resize(bound);
  append_chunk(out, "IDAT", comp.data(), comp.size());
  append_chunk(out, "IEND", nullptr, 0);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("png: cannot open for writing: " + path.string());
  f.write((const char*)out.data(), (std::streamsize)out.size());
  if (!f) throw IoError("png: write failed: " + path.string());
}

Image8 read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("png: cannot open: " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0)
    throw IoError("png: bad signature: " + path.string());

  int w = 0, h = 0, depth = 0, color = 0, interlace = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= buf.size()) {
    const uint32_t len = get_u32(buf.data() + pos);
    if (pos + 12 + len > buf.size()) throw IoError("png: truncated chunk in " + path.string());
    char type[5] = {0};
    std::memcpy(type, buf.data() + pos + 4, 4);
    const uint8_t* data = buf.data() + pos + 8;
    const uint32_t want_crc = get_u32(data + len);
    const uint32_t got_crc = (uint32_t)crc32(0L, buf.data() + pos + 4, (uInt)(4 + len));
    if (want_crc != got_crc) throw IoError("png: chunk crc mismatch in " + path.string());

    if (std::strcmp(type, "IHDR") == 0) {
      if (len != 13) throw IoError("png: bad IHDR in " + path.string());
      w = (int)get_u32(data);
      h = (int)get_u32(data + 4);
      depth = data[8];
      color = data[9];
      interlace = data[12];
      saw_ihdr = true;
    } else if (std::strcmp(type, "IDAT") == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::strcmp(type, "IEND") == 0) {
      saw_iend = true;
      break;
    }
    // ancillary chunks are skipped
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend) throw IoError("png: missing IHDR or IEND in " + path.string());
  if (depth != 8) throw IoError("png: only 8-bit depth supported: " + path.string());
  if (interlace != 0) throw IoError("png: interlaced files not supported: " + path.string());
  int channels;
  if (color == 0)
    channels = 1;
  else if (color == 2)
    channels = 3;
  else
    throw IoError("png: unsupported color type " + std::to_string(color) + " in " + path.string() +
                  " (expect 8-bit gray or RGB)");
  if (w <= 0 || h <= 0) throw IoError("png: bad dimensions in " + path.string());

  const size_t stride = (size_t)w * channels;
  std::vector<uint8_t> raw((stride + 1) * h);
  uLongf raw_len = (uLongf)raw.size();
  int zrc = uncompress(raw.data(), &raw_len, idat.data(), (uLong)idat.size());
  if (zrc != Z_OK || raw_len != raw.size()) throw IoError("png: inflate failed for " + path.string());

  Image8 img(w, h, channels);
  std::vector<uint8_t> prev(stride, 0);
  const int bpp = channels;  // bytes per pixel at 8-bit depth
  for (int y = 0; y < h; ++y) {
    const uint8_t filter = raw[(stride + 1) * y];
    const uint8_t* src = raw.data() + (stride + 1) * y + 1;
    uint8_t* dst = img.pixels.data() + stride * y;
    switch (filter) {
      case 0:
        std::memcpy(dst, src, stride);
        break;
      case 1:
        for (size_t i = 0; i < stride; ++i)
          dst[i] = (uint8_t)(src[i] + (i >= (size_t)bpp ? dst[i - bpp] : 0));
        break;
      case 2:
        for (size_t i = 0; i < stride; ++i) dst[i] = (uint8_t)(src[i] + prev[i]);
        break;
      case 3:
        for (size_t i = 0; i < stride; ++i) {
          const int left = i >= (size_t)bpp ? dst[i - bpp] : 0;
          dst[i] = (uint8_t)(src[i] + ((left + prev[i]) >> 1));
        }
        break;
      case 4:
        for (size_t i = 0; i < stride; ++i) {
          const int left = i >= (size_t)bpp ? dst[i - bpp] : 0;
          const int upleft = i >= (size_t)bpp ? prev[i - bpp] : 0;
          dst[i] = (uint8_t)(src[i] + paeth(left, prev[i], upleft));
        }
        break;
      default:
        throw IoError("png: unknown row filter " + std::to_string(filter) + " in " + path.string());
    }
    std::memcpy(prev.data(), dst, stride);
  }
  return img;
}

}  // namespace mcd
