#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wavefuse/checkpoint.hpp"
#include "wavefuse/data/splits.hpp"
#include "wavefuse/data/synth.hpp"
#include "wavefuse/detector/model.hpp"
#include "wavefuse/optim.hpp"

namespace wavefuse {

// ---------------------------------------------------------------------------
// Experiment configuration: one JSON document drives synth, train, eval,
// sweep and the audio pipeline. Validation is strict; unknown keys are
// rejected by name so ablation grids cannot silently typo an option.
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  AdamConfig adam;
  SchedulerKind scheduler = SchedulerKind::kPlateau;
  int patience = 5;
  double factor = 0.5;
  int epochs = 60;
  int batch_size = 8;
  int threads = 0;  // 0 = hardware concurrency
  double grad_clip = 0.5;
  std::vector<double> dropout_grid = {0.0, 0.1, 0.2, 0.3};
};

struct DataConfig {
  std::optional<std::string> root;      // existing dataset directory
  std::optional<SynthConfig> synth;     // generator parameters
  std::size_t synth_count = 768;
  SplitSpec split;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";
  DetectorConfig model;
  std::optional<std::string> model_init_checkpoint;  // local-init detector warm start
  AudioEncoderConfig audio;
  std::optional<std::string> audio_init_checkpoint;  // fine-tuned classifier weights
  OptimizerConfig optimizer;
  DataConfig data;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for key '") + key + "'");
  }
}

inline const std::set<double> kBackboneLrGrid = {0.0, 1e-4, 1e-5, 1e-6};

}  // namespace detail

inline FusionConfig parse_fusion_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"mode", "dropout_rate", "per_level_weights", "heads"},
                              "fusion");
  FusionConfig cfg;
  cfg.mode = parse_fusion_mode(detail::get_or<std::string>(j, "mode", "gated"));
  cfg.dropout_rate = detail::get_or<double>(j, "dropout_rate", 0.0);
  cfg.per_level_weights = detail::get_or<bool>(j, "per_level_weights", true);
  cfg.heads = detail::get_or<std::size_t>(j, "heads", 1);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"seed", "out_dir", "model", "audio", "optimizer", "data"}, "document");
  ExperimentConfig cfg;
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  cfg.out_dir = detail::get_or<std::string>(j, "out_dir", "runs/out");

  if (j.contains("model") && !j["model"].is_null()) {
    const auto& m = j["model"];
    detail::reject_unknown_keys(
        m,
        {"d", "levels", "encoder_layers", "decoder_layers", "queries", "heads", "points",
         "lambda_cls", "lambda_l1", "lambda_giou", "fusion", "init_checkpoint"},
        "model");
    cfg.model.d = detail::get_or<std::size_t>(m, "d", 64);
    cfg.model.levels = detail::get_or<std::size_t>(m, "levels", 4);
    cfg.model.encoder_layers = detail::get_or<std::size_t>(m, "encoder_layers", 2);
    cfg.model.decoder_layers = detail::get_or<std::size_t>(m, "decoder_layers", 2);
    cfg.model.queries = detail::get_or<std::size_t>(m, "queries", 20);
    cfg.model.heads = detail::get_or<std::size_t>(m, "heads", 4);
    cfg.model.points = detail::get_or<std::size_t>(m, "points", 4);
    cfg.model.lambda_cls = detail::get_or<double>(m, "lambda_cls", 2.0);
    cfg.model.lambda_l1 = detail::get_or<double>(m, "lambda_l1", 5.0);
    cfg.model.lambda_giou = detail::get_or<double>(m, "lambda_giou", 2.0);
    if (m.contains("fusion") && !m["fusion"].is_null())
      cfg.model.fusion = parse_fusion_config(m["fusion"]);
    if (m.contains("init_checkpoint") && !m["init_checkpoint"].is_null())
      cfg.model_init_checkpoint = m["init_checkpoint"].get<std::string>();
  }
  cfg.model.validate();

  if (j.contains("audio") && !j["audio"].is_null()) {
    const auto& a = j["audio"];
    detail::reject_unknown_keys(a, {"kernels", "strides", "channels", "init_checkpoint"},
                                "audio");
    cfg.audio.kernels = detail::get_or<std::vector<std::size_t>>(a, "kernels", cfg.audio.kernels);
    cfg.audio.strides = detail::get_or<std::vector<std::size_t>>(a, "strides", cfg.audio.strides);
    cfg.audio.channels =
        detail::get_or<std::vector<std::size_t>>(a, "channels", cfg.audio.channels);
    if (a.contains("init_checkpoint") && !a["init_checkpoint"].is_null())
      cfg.audio_init_checkpoint = a["init_checkpoint"].get<std::string>();
  }
  cfg.audio.validate();

  if (j.contains("optimizer") && !j["optimizer"].is_null()) {
    const auto& o = j["optimizer"];
    detail::reject_unknown_keys(
        o,
        {"lr", "backbone_lr", "beta1", "beta2", "eps", "scheduler", "patience", "factor",
         "epochs", "batch_size", "threads", "grad_clip", "dropout_grid"},
        "optimizer");
    auto& opt = cfg.optimizer;
    opt.adam.lr = detail::get_or<double>(o, "lr", 1e-3);
    opt.adam.backbone_lr = detail::get_or<double>(o, "backbone_lr", 1e-4);
    opt.adam.beta1 = detail::get_or<double>(o, "beta1", 0.9);
    opt.adam.beta2 = detail::get_or<double>(o, "beta2", 0.999);
    opt.adam.eps = detail::get_or<double>(o, "eps", 1e-8);
    opt.scheduler = parse_scheduler(detail::get_or<std::string>(o, "scheduler", "plateau"));
    opt.patience = detail::get_or<int>(o, "patience", 5);
    opt.factor = detail::get_or<double>(o, "factor", 0.5);
    opt.epochs = detail::get_or<int>(o, "epochs", 60);
    opt.batch_size = detail::get_or<int>(o, "batch_size", 8);
    opt.threads = detail::get_or<int>(o, "threads", 0);
    opt.grad_clip = detail::get_or<double>(o, "grad_clip", 0.5);
    opt.dropout_grid = detail::get_or<std::vector<double>>(o, "dropout_grid",
                                                           {0.0, 0.1, 0.2, 0.3});
  }
  if (!detail::kBackboneLrGrid.count(cfg.optimizer.adam.backbone_lr))
    throw ConfigError("config: backbone_lr must be one of {0, 1e-4, 1e-5, 1e-6}");
  if (cfg.optimizer.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (cfg.optimizer.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  for (double r : cfg.optimizer.dropout_grid)
    if (r < 0.0 || r >= 1.0) throw ConfigError("config: dropout_grid entries must lie in [0,1)");

  if (j.contains("data") && !j["data"].is_null()) {
    const auto& d = j["data"];
    detail::reject_unknown_keys(d, {"root", "synth", "split"}, "data");
    if (d.contains("root") && !d["root"].is_null())
      cfg.data.root = d["root"].get<std::string>();
    if (d.contains("synth") && !d["synth"].is_null()) {
      const auto& s = d["synth"];
      detail::reject_unknown_keys(
          s,
          {"n", "image_size", "fps", "drone_count_probs", "distractor_count_probs",
           "bucket_probs", "hum_min_hz", "hum_max_hz", "noise_level"},
          "data.synth");
      SynthConfig sc;
      cfg.data.synth_count = detail::get_or<std::size_t>(s, "n", 768);
      sc.image_size = detail::get_or<std::size_t>(s, "image_size", 128);
      sc.fps = detail::get_or<double>(s, "fps", 60.0);
      sc.hum_min_hz = detail::get_or<double>(s, "hum_min_hz", 600.0);
      sc.hum_max_hz = detail::get_or<double>(s, "hum_max_hz", 1800.0);
      sc.noise_level = detail::get_or<double>(s, "noise_level", 0.05);
      auto probs3 = [&](const char* key, std::array<double, 3> fallback) {
        if (!s.contains(key) || s[key].is_null()) return fallback;
        const auto v = s[key].get<std::vector<double>>();
        if (v.size() != 3)
          throw ConfigError(std::string("config: ") + key + " needs exactly 3 entries");
        return std::array<double, 3>{v[0], v[1], v[2]};
      };
      sc.drone_count_probs = probs3("drone_count_probs", sc.drone_count_probs);
      sc.distractor_count_probs = probs3("distractor_count_probs", sc.distractor_count_probs);
      sc.bucket_probs = probs3("bucket_probs", sc.bucket_probs);
      sc.validate();
      cfg.data.synth = sc;
    }
    if (d.contains("split") && !d["split"].is_null()) {
      const auto& sp = d["split"];
      detail::reject_unknown_keys(
          sp, {"kind", "train_ratio", "val_ratio", "holdout_tags", "seed"}, "data.split");
      cfg.data.split.kind =
          parse_split_kind(detail::get_or<std::string>(sp, "kind", "in_distribution"));
      cfg.data.split.train_ratio = detail::get_or<double>(sp, "train_ratio", 0.6);
      cfg.data.split.val_ratio = detail::get_or<double>(sp, "val_ratio", 0.2);
      cfg.data.split.holdout_tags =
          detail::get_or<std::vector<std::string>>(sp, "holdout_tags", {});
      cfg.data.split.seed = detail::get_or<std::uint64_t>(sp, "seed", cfg.seed);
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// Stable hash of the parsed config (key-order independent via nlohmann's
// sorted dump).
inline std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

// Run naming following the ablation convention: init tag + fusion mode,
// e.g. "scratch-init-rgb", "local-init-gated".
inline std::string method_name(const ExperimentConfig& cfg) {
  const std::string init = cfg.model_init_checkpoint ? "local-init" : "scratch-init";
  const std::string arch =
      cfg.model.fusion ? fusion_mode_name(cfg.model.fusion->mode) : "rgb";
  return init + "-" + arch;
}

}  // namespace wavefuse
