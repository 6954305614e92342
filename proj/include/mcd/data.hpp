#pragma once
// Dataset I/O for co-registered image pairs with single-channel change-class
// labels (0 = no change, 1..K = change class), conversion from bi-temporal
// semantic maps, seeded augmentation, and a synthetic scene generator.
//
// On-disk layout:
//   root/manifest.txt                key=value (k, class_name_i, palette_i,
//                                    train/val/test id lists)
//   root/{split}/{id}/t1.png         RGB
//   root/{split}/{id}/t2.png         RGB
//   root/{split}/{id}/label.png      8-bit gray class indices

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcd/label.hpp"
#include "mcd/png.hpp"
#include "mcd/rng.hpp"

namespace mcd {

struct BiTemporalSample {
  std::string id;
  Image8 t1, t2;   // RGB
  Image8 label;    // single channel, values 0..K
};

struct DatasetManifest {
  std::filesystem::path root;
  int k = 0;  // number of change classes; labels run 0..k
  std::vector<std::string> class_names;             // size k+1, index 0 = no_change
  std::vector<std::array<uint8_t, 3>> palette;      // size k+1, index 0 = black
  std::vector<std::string> train_ids, val_ids, test_ids;

  const std::vector<std::string>& split_ids(const std::string& split) const;
};

// default palette: black background then red, green, blue, yellow, purple,
// cyan; further classes get deterministic generated colors
std::vector<std::array<uint8_t, 3>> default_palette(int k);

DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const DatasetManifest& m);

// Validated single-sample load; errors name the sample id.
BiTemporalSample load_sample(const DatasetManifest& m, const std::string& split, const std::string& id);
void write_sample(const DatasetManifest& m, const std::string& split, const BiTemporalSample& s);

// Deterministic stream over a split in lexicographic id order.
class SampleStream {
 public:
  SampleStream(const DatasetManifest& m, std::string split);
  std::optional<BiTemporalSample> next();
  size_t count() const { return ids_.size(); }
  void reset() { pos_ = 0; }

 private:
  const DatasetManifest& m_;
  std::string split_;
  std::vector<std::string> ids_;
  size_t pos_ = 0;
};

std::vector<BiTemporalSample> load_split(const DatasetManifest& m, const std::string& split);

// Bi-temporal semantic maps -> change-class map: where the semantics differ
// and the later map is labeled, keep the later (post-change) class; keep 0
// elsewhere.
LabelMap scd_to_mcd(const LabelMap& label_t1, const LabelMap& label_t2);
Image8 scd_to_mcd(const Image8& label_t1, const Image8& label_t2);

struct AugmentationConfig {
  bool flips = true;
  bool rotation = true;  // right angles only
};

// Same draw applied to t1, t2 and label; labels move as pure index maps.
BiTemporalSample augment(const BiTemporalSample& s, const AugmentationConfig& cfg, Rng& rng);

struct SynthSpec {
  int count = 8;         // training samples; val and test get ceil(count/4) each
  int size = 64;         // square, must be divisible by 32
  int k = 3;             // change classes
  uint64_t seed = 7;
};

// Writes a full dataset tree; every labeled pixel is exactly a pixel where
// t1 and t2 differ. Byte-identical output for identical specs.
DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& root);

}  // namespace mcd
