#pragma once
// Flat key=value run configuration. Unknown keys are rejected; every key has
// a documented default (see key_docs). The canonical serialization drives a
// 64-bit hash stored in checkpoints.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcd/backbone.hpp"
#include "mcd/decoder.hpp"
#include "mcd/losses.hpp"
#include "mcd/model.hpp"
#include "mcd/mscad.hpp"

namespace mcd {

enum class AlphaMode { ones, inv_freq };

struct Config {
  // backbone
  std::array<int, 4> stage_channels{32, 64, 128, 256};
  std::array<int, 4> blocks_per_stage{1, 1, 2, 1};
  int lora_r = 24;
  double lora_alpha = 48.0;
  double lora_dropout = 0.1;
  int adapter_reduction = 4;
  int prompt_count = 20;
  uint64_t init_seed = 1;
  // fusion
  int common_dim = 64;
  // classes (K+1 including no-change)
  int num_classes = 7;
  // loss
  double w_focal = 0.4;
  double w_dice = 0.3;
  double w_lovasz = 0.3;
  double focal_gamma = 3.0;
  AlphaMode focal_alpha = AlphaMode::ones;
  double dice_eps = 1e-5;
  // optimizer and schedule
  double base_lr = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  int batch = 4;
  double sched_t0 = 30;
  double sched_tmult = 2;
  double eta_min = 1e-7;
  double lr_mult_frozen = 0.0;
  double lr_mult_adapter = 20.0;
  double lr_mult_prompt = 20.0;
  double lr_mult_lora = 1.0;
  double lr_mult_mscad = 8.0;
  double lr_mult_decoder = 8.0;
  long long max_steps = 0;  // 0 = no cap
  // data
  bool aug_flip = true;
  bool aug_rotate = true;
  uint64_t seed = 42;
  // ablation toggles
  bool ablate_ms_att = false;
  bool ablate_diff_ada = false;
  bool ablate_diff_agg = false;
  bool ablate_dec_att = false;

  ModelConfig model_config() const;
  LossConfig loss_config() const;  // focal_alpha left empty (all ones)
  void validate() const;
};

struct ConfigKeyDoc {
  const char* key;
  const char* def;
  const char* help;
};

const std::vector<ConfigKeyDoc>& config_key_docs();

Config parse_config_text(const std::string& text);
Config load_config(const std::filesystem::path& path);
std::string serialize_config(const Config& c);  // canonical key order
void save_config(const Config& c, const std::filesystem::path& path);
uint64_t config_hash(const Config& c);  // FNV-1a over the canonical text

}  // namespace mcd
