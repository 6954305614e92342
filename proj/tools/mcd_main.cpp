// Command-line driver: train / eval / predict / convert / synth / verify /
// params. Exit codes: 0 ok, 1 verification or runtime failure, 2 usage or
// input error.

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcd/checkpoint.hpp"
#include "mcd/config.hpp"
#include "mcd/data.hpp"
#include "mcd/metrics.hpp"
#include "mcd/model.hpp"
#include "mcd/train.hpp"
#include "mcd/verify.hpp"

namespace fs = std::filesystem;
using namespace mcd;

namespace {

struct Args {
  std::map<std::string, std::string> named;
  std::vector<std::string> flags;

  bool has(const std::string& k) const { return named.count(k) || std::count(flags.begin(), flags.end(), k); }
  std::string get(const std::string& k, const std::string& def = "") const {
    auto it = named.find(k);
    return it == named.end() ? def : it->second;
  }
  std::string require(const std::string& k) const {
    auto it = named.find(k);
    if (it == named.end()) throw ConfigError("missing required flag --" + k);
    return it->second;
  }
};

Args parse_args(int argc, char** argv, int start, const std::vector<std::string>& bool_flags) {
  Args a;
  for (int i = start; i < argc; ++i) {
    std::string tok = argv[i];
    if (tok.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + tok + "'");
    tok = tok.substr(2);
    if (std::count(bool_flags.begin(), bool_flags.end(), tok)) {
      a.flags.push_back(tok);
    } else {
      if (i + 1 >= argc) throw ConfigError("flag --" + tok + " needs a value");
      a.named[tok] = argv[++i];
    }
  }
  return a;
}

uint64_t resolve_seed(const Args& a, uint64_t config_seed) {
  if (a.has("seed")) return (uint64_t)std::stoull(a.get("seed"));
  if (const char* env = std::getenv("MCDS_SEED")) return (uint64_t)std::stoull(env);
  return config_seed;
}

Config config_for_run(const Args& a) {
  Config cfg;
  if (a.has("config")) cfg = load_config(a.get("config"));
  return cfg;
}

// num_classes comes from the dataset at train time; an explicit conflicting
// config value is rejected
void adopt_dataset_classes(Config& cfg, const DatasetManifest& m) {
  const int want = m.k + 1;
  if (cfg.num_classes == want) return;
  Config defaults;
  if (cfg.num_classes == defaults.num_classes) {
    cfg.num_classes = want;
    return;
  }
  throw ConfigError("config num_classes=" + std::to_string(cfg.num_classes) + " does not match dataset k+1=" +
                    std::to_string(want));
}

std::pair<Config, fs::path> config_for_checkpoint(const Args& a) {
  const fs::path ckpt = a.require("checkpoint");
  fs::path cfg_path;
  if (a.has("config")) {
    cfg_path = a.get("config");
  } else {
    cfg_path = ckpt.parent_path() / "config.cfg";
    if (!fs::exists(cfg_path))
      throw ConfigError("no --config given and " + cfg_path.string() + " not found next to the checkpoint");
  }
  return {load_config(cfg_path), ckpt};
}

void check_hash(const Config& cfg, uint64_t stored) {
  if (config_hash(cfg) != stored)
    throw ConfigError("config does not match the checkpoint (hash mismatch); pass the config the model was trained "
                      "with via --config");
}

int cmd_train(const Args& a) {
  Config cfg = config_for_run(a);
  const fs::path data_dir = a.require("data");
  const fs::path out_dir = a.require("out");
  if (!fs::exists(data_dir)) throw DataError("data directory does not exist: " + data_dir.string());
  DatasetManifest manifest = read_manifest(data_dir);
  adopt_dataset_classes(cfg, manifest);
  cfg.seed = resolve_seed(a, cfg.seed);
  cfg.validate();

  ChangeModel<float> model(cfg.model_config());
  std::printf("training: %lld parameters, %lld trainable, %d epochs, batch %d, seed %llu\n",
              model.params().count_total(), model.params().count_trainable(), cfg.epochs, cfg.batch,
              (unsigned long long)cfg.seed);
  TrainResult result = train_model(model, manifest, cfg, out_dir);

  std::printf("steps: %lld   best epoch: %d   best val mIoU (changed): %.4f\n", result.steps, result.best_epoch,
              result.best_val_miou);
  const std::string eval_split = manifest.val_ids.empty() ? "train" : "val";
  MetricReport rep = evaluate_model(model, manifest, eval_split);
  std::printf("final metrics on '%s':\n%s", eval_split.c_str(), rep.table(manifest.class_names).c_str());
  std::ofstream mf(out_dir / "metrics.txt");
  mf << rep.table(manifest.class_names) << "\n" << rep.key_values();
  std::printf("wrote %s, %s, %s\n", (out_dir / "history.csv").c_str(), (out_dir / "best.ckpt").c_str(),
              (out_dir / "metrics.txt").c_str());
  return 0;
}

int cmd_eval(const Args& a) {
  auto [cfg, ckpt_path] = config_for_checkpoint(a);
  const fs::path data_dir = a.require("data");
  const std::string split = a.get("split", "test");
  DatasetManifest manifest = read_manifest(data_dir);
  adopt_dataset_classes(cfg, manifest);

  ChangeModel<float> model(cfg.model_config());
  int epoch = 0;
  uint64_t stored_hash = 0;
  load_checkpoint<float>(ckpt_path, model.params(), nullptr, &epoch, &stored_hash);
  check_hash(cfg, stored_hash);

  MetricReport rep = evaluate_model(model, manifest, split);
  std::printf("checkpoint: %s (epoch %d)\nsplit: %s\n%s\n%s", ckpt_path.c_str(), epoch, split.c_str(),
              rep.table(manifest.class_names).c_str(), rep.key_values().c_str());
  return 0;
}

int cmd_predict(const Args& a) {
  auto [cfg, ckpt_path] = config_for_checkpoint(a);
  const fs::path data_dir = a.require("data");
  const fs::path out_dir = a.require("out");
  const std::string split = a.get("split", "test");
  const bool compare = a.has("compare");
  DatasetManifest manifest = read_manifest(data_dir);
  adopt_dataset_classes(cfg, manifest);
  if ((int)manifest.palette.size() != manifest.k + 1)
    throw DataError("manifest palette does not cover classes 0.." + std::to_string(manifest.k));

  ChangeModel<float> model(cfg.model_config());
  uint64_t stored_hash = 0;
  load_checkpoint<float>(ckpt_path, model.params(), nullptr, nullptr, &stored_hash);
  check_hash(cfg, stored_hash);

  fs::create_directories(out_dir);
  SampleStream stream(manifest, split);
  int written = 0;
  while (auto sample = stream.next()) {
    LabelMap pred = predict_labels(model, *sample);
    Image8 color(sample->label.w, sample->label.h, 3);
    for (int y = 0; y < color.h; ++y)
      for (int x = 0; x < color.w; ++x) {
        const auto& rgb = manifest.palette[(size_t)pred.at(0, y, x)];
        for (int c = 0; c < 3; ++c) color.at(y, x, c) = rgb[(size_t)c];
      }
    write_png(out_dir / (sample->id + "_pred.png"), color);
    if (compare) {
      // change-vs-no-change agreement: TP white, TN black, FP red, FN green
      Image8 cmp(sample->label.w, sample->label.h, 3);
      for (int y = 0; y < cmp.h; ++y)
        for (int x = 0; x < cmp.w; ++x) {
          const bool p = pred.at(0, y, x) > 0;
          const bool g = sample->label.at(y, x) > 0;
          uint8_t r = 0, gg = 0, b = 0;
          if (p && g) r = gg = b = 255;
          else if (p && !g) r = 255;
          else if (!p && g) gg = 255;
          cmp.at(y, x, 0) = r;
          cmp.at(y, x, 1) = gg;
          cmp.at(y, x, 2) = b;
        }
      write_png(out_dir / (sample->id + "_compare.png"), cmp);
    }
    ++written;
  }
  if (written == 0) throw DataError("predict: split '" + split + "' is empty");
  std::printf("wrote predictions for %d samples to %s\n", written, out_dir.c_str());
  return 0;
}

int cmd_convert(const Args& a) {
  const fs::path t1 = a.require("t1"), t2 = a.require("t2"), out = a.require("out");
  Image8 a1 = read_png(t1), a2 = read_png(t2);
  if (a1.c != 1 || a2.c != 1) throw DataError("convert: inputs must be single-channel semantic label maps");
  Image8 mcd_map = scd_to_mcd(a1, a2);
  write_png(out, mcd_map);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_synth(const Args& a) {
  SynthSpec spec;
  spec.count = std::stoi(a.get("count", "8"));
  spec.size = std::stoi(a.get("size", "64"));
  spec.k = std::stoi(a.get("k", "3"));
  spec.seed = resolve_seed(a, spec.seed);
  const fs::path out = a.require("out");
  DatasetManifest m = synth_generate(spec, out);
  std::printf("generated %zu train / %zu val / %zu test samples (size %d, k %d, seed %llu) under %s\n",
              m.train_ids.size(), m.val_ids.size(), m.test_ids.size(), spec.size, spec.k,
              (unsigned long long)spec.seed, out.c_str());
  return 0;
}

int cmd_verify(const Args& a) {
  const std::string suite = a.get("suite", "all");
  const int instances = std::stoi(a.get("instances", "20"));
  std::vector<verify::CheckResult> results;
  auto extend = [&results](std::vector<verify::CheckResult> more) {
    results.insert(results.end(), more.begin(), more.end());
  };
  if (suite == "gradcheck" || suite == "all") extend(verify::run_gradcheck_suite(instances));
  if (suite == "oracles" || suite == "all") {
    extend(verify::run_oracle_suite());
    extend(verify::run_model_suite());
    extend(verify::run_format_suite(fs::temp_directory_path() / "mcd_verify"));
  }
  if (results.empty()) throw ConfigError("unknown suite '" + suite + "' (want gradcheck, oracles or all)");
  const int failures = verify::report(results);
  std::printf("%zu checks, %d failed\n", results.size(), failures);
  return failures == 0 ? 0 : 1;
}

int cmd_params(const Args& a) {
  Config cfg = config_for_run(a);
  ChangeModel<float> model(cfg.model_config());
  const ParamSet<float>& ps = model.params();

  std::printf("parameter report (stage channels %d/%d/%d/%d, blocks %d/%d/%d/%d, fusion width %d, classes %d)\n",
              cfg.stage_channels[0], cfg.stage_channels[1], cfg.stage_channels[2], cfg.stage_channels[3],
              cfg.blocks_per_stage[0], cfg.blocks_per_stage[1], cfg.blocks_per_stage[2], cfg.blocks_per_stage[3],
              cfg.common_dim, cfg.num_classes);
  std::printf("%-10s %14s %10s\n", "group", "parameters", "trainable");
  const ParamGroup groups[] = {ParamGroup::frozen, ParamGroup::adapter, ParamGroup::prompt,
                               ParamGroup::lora,   ParamGroup::mscad,   ParamGroup::decoder};
  for (ParamGroup g : groups)
    std::printf("%-10s %14lld %10s\n", group_name(g), ps.count(g), g == ParamGroup::frozen ? "no" : "yes");
  const long long total = ps.count_total();
  const long long trainable = ps.count_trainable();
  std::printf("%-10s %14lld\n", "total", total);
  std::printf("trainable  %14lld   (%.2f%% of total)\n", trainable, 100.0 * trainable / total);

  std::printf("\nlow-rank sweep (alpha = 2r)\n");
  std::printf("%6s %14s %16s\n", "r", "lora_params", "total_trainable");
  for (int r : {4, 8, 16, 24, 32}) {
    Config c2 = cfg;
    c2.lora_r = r;
    c2.lora_alpha = 2.0 * r;
    ChangeModel<float> m2(c2.model_config());
    std::printf("%6d %14lld %16lld\n", r, m2.params().count(ParamGroup::lora), m2.params().count_trainable());
  }
  return 0;
}

void print_config_keys() {
  std::printf("config keys (flat key=value file):\n");
  for (const auto& d : config_key_docs()) std::printf("  %-18s default %-14s %s\n", d.key, d.def, d.help);
}

int cmd_help(const char* topic) {
  if (topic && std::strcmp(topic, "config") == 0) {
    print_config_keys();
    return 0;
  }
  std::printf(
      "usage: mcd <command> [flags]\n"
      "\n"
      "commands:\n"
      "  train    --data DIR --out DIR [--config PATH] [--seed N]\n"
      "           run training; writes history.csv, best.ckpt, config.cfg, metrics.txt\n"
      "  eval     --checkpoint PATH --data DIR [--split NAME] [--config PATH]\n"
      "           print the metric table and key=value block for a split (default test)\n"
      "  predict  --checkpoint PATH --data DIR --out DIR [--split NAME] [--compare]\n"
      "           write color-coded prediction maps; --compare adds change-agreement maps\n"
      "           (hit white, correct-reject black, false alarm red, miss green)\n"
      "  convert  --t1 PATH --t2 PATH --out PATH\n"
      "           turn two single-channel semantic maps into a change-class map\n"
      "  synth    --out DIR [--count N] [--size N] [--k N] [--seed N]\n"
      "           generate a synthetic dataset tree\n"
      "  verify   [--suite gradcheck|oracles|all] [--instances N]\n"
      "           run the verification suites; nonzero exit on any failure\n"
      "  params   [--config PATH]\n"
      "           print per-group parameter counts and the low-rank sweep table\n"
      "  help     [config]\n"
      "           this text; 'help config' documents every config key and default\n"
      "\n"
      "seeds: --seed beats the MCDS_SEED environment variable, which beats the config file.\n"
      "exit codes: 0 ok, 1 verification/runtime failure, 2 usage or input error.\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    cmd_help(nullptr);
    return 2;
  }
  const std::string cmd = argv[1];
  try {
    if (cmd == "help" || cmd == "--help" || cmd == "-h") return cmd_help(argc > 2 ? argv[2] : nullptr);
    const std::vector<std::string> bool_flags = {"compare"};
    Args a = parse_args(argc, argv, 2, bool_flags);
    if (cmd == "train") return cmd_train(a);
    if (cmd == "eval") return cmd_eval(a);
    if (cmd == "predict") return cmd_predict(a);
    if (cmd == "convert") return cmd_convert(a);
    if (cmd == "synth") return cmd_synth(a);
    if (cmd == "verify") return cmd_verify(a);
    if (cmd == "params") return cmd_params(a);
    std::fprintf(stderr, "unknown command '%s'\n", cmd.c_str());
    cmd_help(nullptr);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const TensorError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
