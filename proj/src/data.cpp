#include "mcd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mcd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// manifest

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace((unsigned char)ch)) {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_csv(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += v[i];
  }
  return out;
}

}  // namespace

std::vector<std::array<uint8_t, 3>> default_palette(int k) {
  static const std::array<uint8_t, 3> base[] = {
      {0, 0, 0},        // no change
      {255, 0, 0},      // red
      {0, 255, 0},      // green
      {0, 0, 255},      // blue
      {255, 255, 0},    // yellow
      {128, 0, 128},    // purple
      {0, 255, 255},    // cyan
  };
  std::vector<std::array<uint8_t, 3>> p;
  for (int c = 0; c <= k; ++c) {
    if (c < 7) {
      p.push_back(base[c]);
    } else {
      // deterministic fallback colors for k > 6
      uint8_t r = (uint8_t)(37 * c % 200 + 55);
      uint8_t g = (uint8_t)(83 * c % 200 + 55);
      uint8_t b = (uint8_t)(151 * c % 200 + 55);
      p.push_back({r, g, b});
    }
  }
  return p;
}

const std::vector<std::string>& DatasetManifest::split_ids(const std::string& split) const {
  if (split == "train") return train_ids;
  if (split == "val") return val_ids;
  if (split == "test") return test_ids;
  throw DataError("dataset: unknown split '" + split + "' (want train, val or test)");
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.txt";
  std::ifstream f(p);
  if (!f) throw DataError("dataset: cannot open manifest: " + p.string());

  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("dataset: malformed manifest line " + std::to_string(lineno) + " in " + p.string());
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  DatasetManifest m;
  m.root = root;
  if (!kv.count("k")) throw DataError("dataset: manifest missing key 'k': " + p.string());
  m.k = std::stoi(kv.at("k"));
  if (m.k < 1 || m.k > 255) throw DataError("dataset: k out of range in " + p.string());

  for (int c = 0; c <= m.k; ++c) {
    const std::string nk = "class_name_" + std::to_string(c);
    const std::string pk = "palette_" + std::to_string(c);
    m.class_names.push_back(kv.count(nk) ? kv.at(nk) : (c == 0 ? "no_change" : "class_" + std::to_string(c)));
    if (!kv.count(pk)) throw DataError("dataset: manifest missing " + pk + " (palette must cover 0..k)");
    auto rgb = split_csv(kv.at(pk));
    if (rgb.size() != 3) throw DataError("dataset: bad palette entry " + pk);
    m.palette.push_back({(uint8_t)std::stoi(rgb[0]), (uint8_t)std::stoi(rgb[1]), (uint8_t)std::stoi(rgb[2])});
  }
  m.train_ids = split_csv(kv.count("train") ? kv.at("train") : "");
  m.val_ids = split_csv(kv.count("val") ? kv.at("val") : "");
  m.test_ids = split_csv(kv.count("test") ? kv.at("test") : "");
  return m;
}

void write_manifest(const DatasetManifest& m) {
  fs::create_directories(m.root);
  const fs::path p = m.root / "manifest.txt";
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("dataset: cannot write manifest: " + p.string());
  f << "k=" << m.k << "\n";
  for (int c = 0; c <= m.k; ++c) {
    f << "class_name_" << c << "=" << m.class_names[(size_t)c] << "\n";
    f << "palette_" << c << "=" << (int)m.palette[(size_t)c][0] << "," << (int)m.palette[(size_t)c][1] << ","
      << (int)m.palette[(size_t)c][2] << "\n";
  }
  f << "train=" << join_csv(m.train_ids) << "\n";
  f << "val=" << join_csv(m.val_ids) << "\n";
  f << "test=" << join_csv(m.test_ids) << "\n";
  if (!f) throw DataError("dataset: manifest write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// samples

BiTemporalSample load_sample(const DatasetManifest& m, const std::string& split, const std::string& id) {
  const fs::path dir = m.root / split / id;
  BiTemporalSample s;
  s.id = id;
  for (const char* name : {"t1.png", "t2.png", "label.png"}) {
    if (!fs::exists(dir / name)) throw DataError("dataset: sample '" + id + "' is missing " + name);
  }
  s.t1 = read_png(dir / "t1.png");
  s.t2 = read_png(dir / "t2.png");
  s.label = read_png(dir / "label.png");
  if (s.t1.c != 3 || s.t2.c != 3) throw DataError("dataset: sample '" + id + "' images must be RGB");
  if (s.label.c != 1) throw DataError("dataset: sample '" + id + "' label must be single-channel");
  if (s.t1.w != s.t2.w || s.t1.h != s.t2.h || s.t1.w != s.label.w || s.t1.h != s.label.h)
    throw DataError("dataset: sample '" + id + "' rasters disagree in size");
  for (size_t i = 0; i < s.label.pixels.size(); ++i)
    if (s.label.pixels[i] > m.k)
      throw DataError("dataset: sample '" + id + "' label value " + std::to_string((int)s.label.pixels[i]) +
                      " exceeds k=" + std::to_string(m.k));
  return s;
}

void write_sample(const DatasetManifest& m, const std::string& split, const BiTemporalSample& s) {
  const fs::path dir = m.root / split / s.id;
  fs::create_directories(dir);
  write_png(dir / "t1.png", s.t1);
  write_png(dir / "t2.png", s.t2);
  write_png(dir / "label.png", s.label);
}

SampleStream::SampleStream(const DatasetManifest& m, std::string split) : m_(m), split_(std::move(split)) {
  ids_ = m.split_ids(split_);
  std::sort(ids_.begin(), ids_.end());
}

std::optional<BiTemporalSample> SampleStream::next() {
  if (pos_ >= ids_.size()) return std::nullopt;
  return load_sample(m_, split_, ids_[pos_++]);
}

std::vector<BiTemporalSample> load_split(const DatasetManifest& m, const std::string& split) {
  SampleStream stream(m, split);
  std::vector<BiTemporalSample> out;
  while (auto s = stream.next()) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// semantic-pair conversion: keep the post-change class on changed pixels

LabelMap scd_to_mcd(const LabelMap& a, const LabelMap& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw DataError("scd_to_mcd: label shapes differ");
  LabelMap out(a.n, a.h, a.w, 0);
  for (long long i = 0; i < a.size(); ++i) {
    const uint8_t t1 = a.v[(size_t)i], t2 = b.v[(size_t)i];
    out.v[(size_t)i] = (t1 != t2 && t2 > 0) ? t2 : 0;
  }
  return out;
}

Image8 scd_to_mcd(const Image8& a, const Image8& b) {
  if (a.c != 1 || b.c != 1) throw DataError("scd_to_mcd: labels must be single-channel");
  if (a.w != b.w || a.h != b.h) throw DataError("scd_to_mcd: label sizes differ");
  Image8 out(a.w, a.h, 1);
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const uint8_t t1 = a.pixels[i], t2 = b.pixels[i];
    out.pixels[i] = (t1 != t2 && t2 > 0) ? t2 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

Image8 flip_h(const Image8& img) {
  Image8 out(img.w, img.h, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y, img.w - 1 - x, ch);
  return out;
}

Image8 flip_v(const Image8& img) {
  Image8 out(img.w, img.h, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(img.h - 1 - y, x, ch);
  return out;
}

// 90 degrees clockwise
Image8 rot90(const Image8& img) {
  Image8 out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) out.at(x, img.h - 1 - y, ch) = img.at(y, x, ch);
  return out;
}

}  // namespace

BiTemporalSample augment(const BiTemporalSample& s, const AugmentationConfig& cfg, Rng& rng) {
  bool do_h = false, do_v = false;
  int quarter_turns = 0;
  if (cfg.flips) {
    do_h = rng.coin();
    do_v = rng.coin();
  }
  if (cfg.rotation) quarter_turns = rng.uniform_int(4);

  BiTemporalSample out = s;
  auto apply = [&](Image8& img) {
    if (do_h) img = flip_h(img);
    if (do_v) img = flip_v(img);
    for (int i = 0; i < quarter_turns; ++i) img = rot90(img);
  };
  apply(out.t1);
  apply(out.t2);
  apply(out.label);
  return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

namespace {

// smooth value-noise background on a coarse lattice, bilinearly interpolated
Image8 synth_background(int size, Rng& rng) {
  const int grid = 9;
  std::vector<std::array<double, 3>> lattice((size_t)grid * grid);
  for (auto& cell : lattice)
    for (int ch = 0; ch < 3; ++ch) cell[(size_t)ch] = rng.uniform(70.0, 160.0);
  Image8 img(size, size, 3);
  const double step = (double)(grid - 1) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double gy = y * step, gx = x * step;
      const int y0 = (int)gy, x0 = (int)gx;
      const int y1 = std::min(y0 + 1, grid - 1), x1 = std::min(x0 + 1, grid - 1);
      const double fy = gy - y0, fx = gx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = lattice[(size_t)y0 * grid + x0][(size_t)ch] * (1 - fx) +
                           lattice[(size_t)y0 * grid + x1][(size_t)ch] * fx;
        const double bot = lattice[(size_t)y1 * grid + x0][(size_t)ch] * (1 - fx) +
                           lattice[(size_t)y1 * grid + x1][(size_t)ch] * fx;
        img.at(y, x, ch) = (uint8_t)(top * (1 - fy) + bot * fy);
      }
    }
  return img;
}

BiTemporalSample synth_sample(const SynthSpec& spec, const std::vector<std::array<uint8_t, 3>>& palette,
                              const std::string& id, Rng rng) {
  BiTemporalSample s;
  s.id = id;
  s.t1 = synth_background(spec.size, rng);
  s.t2 = s.t1;                       // shared background; only shapes differ
  std::vector<uint8_t> cls((size_t)spec.size * spec.size, 0);

  // Scene policy for the desk-scale fixture: shapes are kept apart (clean
  // class boundaries) and their bounding boxes sit on a 4-pixel lattice so
  // stride-4 heads can represent every edge exactly. Sub-cell boundary
  // interpolation is exercised by the gradient and oracle suites instead.
  const int quant = 4;
  const int n_shapes = 1 + rng.uniform_int(4);
  std::vector<std::array<int, 4>> placed;
  for (int sh = 0; sh < n_shapes; ++sh) {
    const int c = 1 + rng.uniform_int(spec.k);
    const bool removal = rng.coin();   // removal draws into t1, addition into t2
    const bool ellipse = rng.coin() && rng.coin();  // one in four
    const int min_dim = std::max(16, spec.size / 4);
    const int max_dim = std::max(min_dim + 1, (7 * spec.size) / 16);
    auto snap = [quant](int v) { return (v / quant) * quant; };
    int sw = 0, shp = 0, x0 = 0, y0 = 0;
    bool found = false;
    for (int attempt = 0; attempt < 40 && !found; ++attempt) {
      sw = std::max(min_dim, snap(min_dim + rng.uniform_int(max_dim - min_dim)));
      shp = std::max(min_dim, snap(min_dim + rng.uniform_int(max_dim - min_dim)));
      x0 = snap(rng.uniform_int(std::max(1, spec.size - sw)));
      y0 = snap(rng.uniform_int(std::max(1, spec.size - shp)));
      found = true;
      for (const auto& pbox : placed)
        if (x0 < pbox[0] + pbox[2] + 2 && pbox[0] < x0 + sw + 2 && y0 < pbox[1] + pbox[3] + 2 &&
            pbox[1] < y0 + shp + 2)
          found = false;
    }
    if (!found) continue;  // canvas is crowded; a sample may carry fewer shapes
    placed.push_back({x0, y0, sw, shp});

    // class color with a per-shape brightness wobble
    const double shade = rng.uniform(0.85, 1.0);
    uint8_t fill[3];
    for (int ch = 0; ch < 3; ++ch) fill[ch] = (uint8_t)(palette[(size_t)c][(size_t)ch] * shade);

    Image8& dst = removal ? s.t1 : s.t2;
    const double cy = y0 + shp / 2.0, cx = x0 + sw / 2.0;
    const double ry = shp / 2.0, rx = sw / 2.0;
    for (int y = y0; y < y0 + shp && y < spec.size; ++y)
      for (int x = x0; x < x0 + sw && x < spec.size; ++x) {
        if (ellipse) {
          const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        for (int ch = 0; ch < 3; ++ch) dst.at(y, x, ch) = fill[ch];
        cls[(size_t)y * spec.size + x] = (uint8_t)c;
      }
  }

  // label marks exactly the altered pixels
  s.label = Image8(spec.size, spec.size, 1);
  for (int y = 0; y < spec.size; ++y)
    for (int x = 0; x < spec.size; ++x) {
      bool differs = false;
      for (int ch = 0; ch < 3 && !differs; ++ch) differs = s.t1.at(y, x, ch) != s.t2.at(y, x, ch);
      s.label.at(y, x) = differs ? cls[(size_t)y * spec.size + x] : 0;
    }
  return s;
}

}  // namespace

DatasetManifest synth_generate(const SynthSpec& spec, const fs::path& root) {
  if (spec.size < 32 || spec.size % 32 != 0)
    throw DataError("synth: size must be a positive multiple of 32, got " + std::to_string(spec.size));
  if (spec.k < 1 || spec.k > 255) throw DataError("synth: k must be in 1..255");
  if (spec.count < 0) throw DataError("synth: count must be >= 0");

  DatasetManifest m;
  m.root = root;
  m.k = spec.k;
  m.palette = default_palette(spec.k);
  m.class_names.push_back("no_change");
  for (int c = 1; c <= spec.k; ++c) m.class_names.push_back("class_" + std::to_string(c));

  Rng rng(spec.seed);
  const int n_side = spec.count == 0 ? 0 : (spec.count + 3) / 4;
  struct SplitPlan {
    const char* name;
    int count;
    std::vector<std::string>* ids;
  };
  SplitPlan plans[] = {{"train", spec.count, &m.train_ids}, {"val", n_side, &m.val_ids}, {"test", n_side, &m.test_ids}};

  fs::create_directories(root);
  uint64_t sample_counter = 0;
  for (const auto& plan : plans) {
    fs::create_directories(root / plan.name);
    for (int i = 0; i < plan.count; ++i, ++sample_counter) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "s%04d", i);
      BiTemporalSample s = synth_sample(spec, m.palette, buf, rng.fork(sample_counter));
      write_sample(m, plan.name, s);
      plan.ids->push_back(s.id);
    }
  }
  write_manifest(m);
  return m;
}

}  // namespace mcd
