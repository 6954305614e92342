#include "mcd/config.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mcd {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_channels(const std::array<int, 4>& a) {
  std::ostringstream o;
  o << a[0] << "," << a[1] << "," << a[2] << "," << a[3];
  return o.str();
}

std::array<int, 4> parse_four_ints(const std::string& key, const std::string& s) {
  std::array<int, 4> out{};
  int idx = 0;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) throw ConfigError("config: empty element in " + key);
    if (idx >= 4) throw ConfigError("config: " + key + " takes exactly 4 comma-separated values");
    out[(size_t)idx++] = std::stoi(cur);
    cur.clear();
  };
  for (char ch : s) {
    if (ch == ',')
      flush();
    else if (!std::isspace((unsigned char)ch))
      cur.push_back(ch);
  }
  flush();
  if (idx != 4) throw ConfigError("config: " + key + " takes exactly 4 comma-separated values");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " must be true or false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

}  // namespace

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = {
      {"stage_channels", "32,64,128,256", "encoder stage widths C2..C5"},
      {"blocks_per_stage", "1,1,2,1", "encoder blocks per stage"},
      {"lora_r", "24", "low-rank branch rank"},
      {"lora_alpha", "48", "low-rank branch scale numerator (effective scale alpha/r)"},
      {"lora_dropout", "0.1", "dropout on the low-rank branch input (train mode)"},
      {"adapter_reduction", "4", "bottleneck adapter reduction ratio"},
      {"prompt_count", "20", "number of learnable prompt tokens (0 disables)"},
      {"init_seed", "1", "seed for all parameter initialization"},
      {"common_dim", "64", "shared fusion width of the difference module"},
      {"num_classes", "7", "class count K+1 including no-change"},
      {"w_focal", "0.4", "composite loss weight of the focal term"},
      {"w_dice", "0.3", "composite loss weight of the dice term"},
      {"w_lovasz", "0.3", "composite loss weight of the lovasz term"},
      {"focal_gamma", "3", "focal focusing factor"},
      {"focal_alpha", "ones", "per-class focal weights: ones | inv_freq"},
      {"dice_eps", "1e-05", "dice numerical stabilizer"},
      {"base_lr", "0.0003", "base learning rate"},
      {"weight_decay", "0.01", "decoupled weight decay"},
      {"beta1", "0.9", "first-moment decay"},
      {"beta2", "0.999", "second-moment decay"},
      {"adam_eps", "1e-08", "optimizer denominator epsilon"},
      {"epochs", "200", "training epochs"},
      {"batch", "4", "batch size"},
      {"sched_t0", "30", "first cosine cycle length in epochs"},
      {"sched_tmult", "2", "cycle length multiplier at each restart"},
      {"eta_min", "1e-07", "cosine floor learning rate"},
      {"lr_mult_frozen", "0", "learning-rate multiplier, frozen trunk (must be 0)"},
      {"lr_mult_adapter", "20", "learning-rate multiplier, adapters"},
      {"lr_mult_prompt", "20", "learning-rate multiplier, prompt tokens"},
      {"lr_mult_lora", "1", "learning-rate multiplier, low-rank branches"},
      {"lr_mult_mscad", "8", "learning-rate multiplier, difference module"},
      {"lr_mult_decoder", "8", "learning-rate multiplier, decoder head"},
      {"max_steps", "0", "optimizer step cap, 0 = unlimited"},
      {"aug_flip", "true", "random horizontal/vertical flips"},
      {"aug_rotate", "true", "random right-angle rotation"},
      {"seed", "42", "run seed (shuffling, augmentation, dropout)"},
      {"ablate_ms_att", "false", "replace scale attention by uniform 1/3 weights"},
      {"ablate_diff_ada", "false", "drop the learned temporal-difference path"},
      {"ablate_diff_agg", "false", "replace the aggregator by pass-through + projection"},
      {"ablate_dec_att", "false", "drop the decoder self-gate"},
  };
  return docs;
}

Config parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    std::string trimmed;
    for (char ch : line)
      if (!std::isspace((unsigned char)ch) || !trimmed.empty()) trimmed.push_back(ch);
    while (!trimmed.empty() && std::isspace((unsigned char)trimmed.back())) trimmed.pop_back();
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
    std::string key = trimmed.substr(0, eq);
    std::string val = trimmed.substr(eq + 1);
    if (kv.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    kv[key] = val;
  }

  Config c;
  for (const auto& [key, val] : kv) {
    if (key == "stage_channels") c.stage_channels = parse_four_ints(key, val);
    else if (key == "blocks_per_stage") c.blocks_per_stage = parse_four_ints(key, val);
    else if (key == "lora_r") c.lora_r = (int)parse_int(key, val);
    else if (key == "lora_alpha") c.lora_alpha = parse_double(key, val);
    else if (key == "lora_dropout") c.lora_dropout = parse_double(key, val);
    else if (key == "adapter_reduction") c.adapter_reduction = (int)parse_int(key, val);
    else if (key == "prompt_count") c.prompt_count = (int)parse_int(key, val);
    else if (key == "init_seed") c.init_seed = (uint64_t)parse_int(key, val);
    else if (key == "common_dim") c.common_dim = (int)parse_int(key, val);
    else if (key == "num_classes") c.num_classes = (int)parse_int(key, val);
    else if (key == "w_focal") c.w_focal = parse_double(key, val);
    else if (key == "w_dice") c.w_dice = parse_double(key, val);
    else if (key == "w_lovasz") c.w_lovasz = parse_double(key, val);
    else if (key == "focal_gamma") c.focal_gamma = parse_double(key, val);
    else if (key == "focal_alpha") {
      if (val == "ones") c.focal_alpha = AlphaMode::ones;
      else if (val == "inv_freq") c.focal_alpha = AlphaMode::inv_freq;
      else throw ConfigError("config: focal_alpha must be 'ones' or 'inv_freq'");
    }
    else if (key == "dice_eps") c.dice_eps = parse_double(key, val);
    else if (key == "base_lr") c.base_lr = parse_double(key, val);
    else if (key == "weight_decay") c.weight_decay = parse_double(key, val);
    else if (key == "beta1") c.beta1 = parse_double(key, val);
    else if (key == "beta2") c.beta2 = parse_double(key, val);
    else if (key == "adam_eps") c.adam_eps = parse_double(key, val);
    else if (key == "epochs") c.epochs = (int)parse_int(key, val);
    else if (key == "batch") c.batch = (int)parse_int(key, val);
    else if (key == "sched_t0") c.sched_t0 = parse_double(key, val);
    else if (key == "sched_tmult") c.sched_tmult = parse_double(key, val);
    else if (key == "eta_min") c.eta_min = parse_double(key, val);
    else if (key == "lr_mult_frozen") c.lr_mult_frozen = parse_double(key, val);
    else if (key == "lr_mult_adapter") c.lr_mult_adapter = parse_double(key, val);
    else if (key == "lr_mult_prompt") c.lr_mult_prompt = parse_double(key, val);
    else if (key == "lr_mult_lora") c.lr_mult_lora = parse_double(key, val);
    else if (key == "lr_mult_mscad") c.lr_mult_mscad = parse_double(key, val);
    else if (key == "lr_mult_decoder") c.lr_mult_decoder = parse_double(key, val);
    else if (key == "max_steps") c.max_steps = parse_int(key, val);
    else if (key == "aug_flip") c.aug_flip = parse_bool(key, val);
    else if (key == "aug_rotate") c.aug_rotate = parse_bool(key, val);
    else if (key == "seed") c.seed = (uint64_t)parse_int(key, val);
    else if (key == "ablate_ms_att") c.ablate_ms_att = parse_bool(key, val);
    else if (key == "ablate_diff_ada") c.ablate_diff_ada = parse_bool(key, val);
    else if (key == "ablate_diff_agg") c.ablate_diff_agg = parse_bool(key, val);
    else if (key == "ablate_dec_att") c.ablate_dec_att = parse_bool(key, val);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const Config& c) {
  std::ostringstream o;
  o << "stage_channels=" << fmt_channels(c.stage_channels) << "\n";
  o << "blocks_per_stage=" << fmt_channels(c.blocks_per_stage) << "\n";
  o << "lora_r=" << c.lora_r << "\n";
  o << "lora_alpha=" << fmt_double(c.lora_alpha) << "\n";
  o << "lora_dropout=" << fmt_double(c.lora_dropout) << "\n";
  o << "adapter_reduction=" << c.adapter_reduction << "\n";
  o << "prompt_count=" << c.prompt_count << "\n";
  o << "init_seed=" << c.init_seed << "\n";
  o << "common_dim=" << c.common_dim << "\n";
  o << "num_classes=" << c.num_classes << "\n";
  o << "w_focal=" << fmt_double(c.w_focal) << "\n";
  o << "w_dice=" << fmt_double(c.w_dice) << "\n";
  o << "w_lovasz=" << fmt_double(c.w_lovasz) << "\n";
  o << "focal_gamma=" << fmt_double(c.focal_gamma) << "\n";
  o << "focal_alpha=" << (c.focal_alpha == AlphaMode::ones ? "ones" : "inv_freq") << "\n";
  o << "dice_eps=" << fmt_double(c.dice_eps) << "\n";
  o << "base_lr=" << fmt_double(c.base_lr) << "\n";
  o << "weight_decay=" << fmt_double(c.weight_decay) << "\n";
  o << "beta1=" << fmt_double(c.beta1) << "\n";
  o << "beta2=" << fmt_double(c.beta2) << "\n";
  o << "adam_eps=" << fmt_double(c.adam_eps) << "\n";
  o << "epochs=" << c.epochs << "\n";
  o << "batch=" << c.batch << "\n";
  o << "sched_t0=" << fmt_double(c.sched_t0) << "\n";
  o << "sched_tmult=" << fmt_double(c.sched_tmult) << "\n";
  o << "eta_min=" << fmt_double(c.eta_min) << "\n";
  o << "lr_mult_frozen=" << fmt_double(c.lr_mult_frozen) << "\n";
  o << "lr_mult_adapter=" << fmt_double(c.lr_mult_adapter) << "\n";
  o << "lr_mult_prompt=" << fmt_double(c.lr_mult_prompt) << "\n";
  o << "lr_mult_lora=" << fmt_double(c.lr_mult_lora) << "\n";
  o << "lr_mult_mscad=" << fmt_double(c.lr_mult_mscad) << "\n";
  o << "lr_mult_decoder=" << fmt_double(c.lr_mult_decoder) << "\n";
  o << "max_steps=" << c.max_steps << "\n";
  o << "aug_flip=" << (c.aug_flip ? "true" : "false") << "\n";
  o << "aug_rotate=" << (c.aug_rotate ? "true" : "false") << "\n";
  o << "seed=" << c.seed << "\n";
  o << "ablate_ms_att=" << (c.ablate_ms_att ? "true" : "false") << "\n";
  o << "ablate_diff_ada=" << (c.ablate_diff_ada ? "true" : "false") << "\n";
  o << "ablate_diff_agg=" << (c.ablate_diff_agg ? "true" : "false") << "\n";
  o << "ablate_dec_att=" << (c.ablate_dec_att ? "true" : "false") << "\n";
  return o.str();
}

void save_config(const Config& c, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("config: cannot write " + path.string());
  f << serialize_config(c);
  if (!f) throw ConfigError("config: write failed: " + path.string());
}

uint64_t config_hash(const Config& c) {
  const std::string text = serialize_config(c);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelConfig Config::model_config() const {
  ModelConfig mc;
  mc.backbone.stage_channels = stage_channels;
  mc.backbone.blocks_per_stage = blocks_per_stage;
  mc.backbone.lora_rank = lora_r;
  mc.backbone.lora_alpha = lora_alpha;
  mc.backbone.lora_dropout = lora_dropout;
  mc.backbone.adapter_reduction = adapter_reduction;
  mc.backbone.prompt_count = prompt_count;
  mc.backbone.init_seed = init_seed;
  mc.mscad.common_dim = common_dim;
  mc.mscad.ablate_ms_att = ablate_ms_att;
  mc.mscad.ablate_diff_ada = ablate_diff_ada;
  mc.mscad.ablate_diff_agg = ablate_diff_agg;
  mc.num_classes = num_classes;
  mc.ablate_dec_att = ablate_dec_att;
  return mc;
}

LossConfig Config::loss_config() const {
  LossConfig lc;
  lc.w_focal = w_focal;
  lc.w_dice = w_dice;
  lc.w_lovasz = w_lovasz;
  lc.focal_gamma = focal_gamma;
  lc.dice_eps = dice_eps;
  return lc;
}

void Config::validate() const {
  for (int i = 0; i < 4; ++i)
    if (stage_channels[(size_t)i] < 1 || blocks_per_stage[(size_t)i] < 1)
      throw ConfigError("config: stage_channels and blocks_per_stage entries must be >= 1");
  if (lora_r < 1) throw ConfigError("config: lora_r must be >= 1");
  if (lora_alpha <= 0) throw ConfigError("config: lora_alpha must be > 0");
  if (lora_dropout < 0 || lora_dropout >= 1) throw ConfigError("config: lora_dropout must be in [0,1)");
  if (adapter_reduction < 1) throw ConfigError("config: adapter_reduction must be >= 1");
  if (prompt_count < 0) throw ConfigError("config: prompt_count must be >= 0");
  if (common_dim < 1) throw ConfigError("config: common_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
  if (focal_gamma < 0) throw ConfigError("config: focal_gamma must be >= 0");
  if (dice_eps <= 0) throw ConfigError("config: dice_eps must be > 0");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (sched_t0 <= 0 || sched_tmult < 1) throw ConfigError("config: schedule needs t0 > 0 and tmult >= 1");
  if (eta_min < 0 || eta_min > base_lr) throw ConfigError("config: eta_min must be in [0, base_lr]");
  if (lr_mult_frozen != 0.0) throw ConfigError("config: lr_mult_frozen must be exactly 0");
  for (double mlt : {lr_mult_adapter, lr_mult_prompt, lr_mult_lora, lr_mult_mscad, lr_mult_decoder})
    if (mlt < 0) throw ConfigError("config: learning-rate multipliers must be nonnegative");
  if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
}

}  // namespace mcd
