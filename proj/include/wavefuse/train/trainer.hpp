#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "wavefuse/config.hpp"
#include "wavefuse/data/dataset.hpp"
#include "wavefuse/detector/model.hpp"
#include "wavefuse/optim.hpp"

namespace wavefuse {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

// Runs fn(worker, index) over indices with `threads` workers on strided
// slices. Worker w handles indices w, w+T, ... so the assignment is fixed
// regardless of scheduling. Exceptions propagate to the caller.
inline void strided_parallel(const std::vector<std::size_t>& indices, int threads,
                             const std::function<void(int, std::size_t)>& fn) {
  const int t_count = std::max(1, std::min<int>(threads, static_cast<int>(indices.size())));
  if (t_count == 1) {
    for (std::size_t i : indices) fn(0, i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(t_count));
  std::vector<std::thread> pool;
  for (int w = 0; w < t_count; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = static_cast<std::size_t>(w); k < indices.size();
             k += static_cast<std::size_t>(t_count))
          fn(w, indices[k]);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Detector training
// ---------------------------------------------------------------------------

struct TrainResult {
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  std::filesystem::path checkpoint_path;
  double wall_sec = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

inline void null_log(const std::string&) {}

// Data-parallel training: each worker owns a full model replica; per-image
// gradients accumulate in the replica stores and are reduced into the master
// in worker order, so results are bit-stable for a fixed (config, seed).
inline TrainResult train_detector(DetrModel<float>& master, const Dataset& ds,
                                  const OptimizerConfig& opt, std::uint64_t seed,
                                  const std::filesystem::path& out_dir,
                                  const LogFn& log = null_log) {
  const auto t_start = std::chrono::steady_clock::now();
  const int threads = std::min(resolve_threads(opt.threads), opt.batch_size);

  std::vector<std::unique_ptr<DetrModel<float>>> replicas;
  for (int w = 0; w < threads; ++w) {
    replicas.push_back(
        std::make_unique<DetrModel<float>>(master.cfg, master.audio_cfg, /*seed=*/0));
    replicas.back()->params.copy_matching_from(master.params);
  }
  auto sync_replicas = [&] {
    for (auto& r : replicas) r->params.copy_matching_from(master.params);
  };
  sync_replicas();

  Adam<float> adam(master.params, opt.adam);
  LrScheduler scheduler(opt.scheduler, opt.epochs, opt.patience, opt.factor);
  TrainResult result;
  result.checkpoint_path = out_dir / "model.ckpt";
  std::filesystem::create_directories(out_dir);

  std::vector<double> item_losses(ds.items.size(), 0.0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<std::size_t> order = ds.train;
    RngState shuffle_rng(derive_seed(seed, "shuffle-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    while (batch_start < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(opt.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(batch_start),
                                     order.begin() + static_cast<std::ptrdiff_t>(batch_end));
      for (auto& r : replicas) r->params.zero_grad();

      detail::strided_parallel(batch, threads, [&](int w, std::size_t idx) {
        const DataItem& item = ds.items[idx];
        RngState fwd_rng(derive_seed(seed, "fwd-" + std::to_string(epoch) + "-" +
                                               std::to_string(idx)));
        auto& model = *replicas[static_cast<std::size_t>(w)];
        auto out = model.forward(item.image, master.fused() ? &item.clip : nullptr,
                                 DropoutMode::kTrain, fwd_rng);
        Tensor<float> loss = model.loss(out, item.gts);
        const double lv = loss.item();
        if (!std::isfinite(lv))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             ", item " + std::to_string(idx));
        item_losses[idx] = lv;
        loss.backward();
      });
      for (std::size_t k = 0; k < batch.size(); ++k) epoch_loss += item_losses[batch[k]];

      // reduce into master in fixed worker order, then scale and clip
      const float inv_batch = 1.0f / static_cast<float>(batch.size());
      double norm_sq = 0.0;
      for (std::size_t pi = 0; pi < master.params.size(); ++pi) {
        auto& mg = master.params.at(pi).value.mutable_grad();
        for (auto& r : replicas) {
          const auto& rg = r->params.at(pi).value.grad();
          if (rg.empty()) continue;
          for (std::size_t j = 0; j < mg.size(); ++j) mg[j] += rg[j];
        }
        for (auto& g : mg) {
          g *= inv_batch;
          norm_sq += static_cast<double>(g) * g;
        }
      }
      if (opt.grad_clip > 0.0 && norm_sq > opt.grad_clip * opt.grad_clip) {
        const float scale = static_cast<float>(opt.grad_clip / std::sqrt(norm_sq));
        for (std::size_t pi = 0; pi < master.params.size(); ++pi)
          for (auto& g : master.params.at(pi).value.mutable_grad()) g *= scale;
      }
      adam.step();
      adam.zero_grad();
      sync_replicas();
      batch_start = batch_end;
    }
    epoch_loss /= static_cast<double>(order.size());
    result.train_losses.push_back(epoch_loss);

    // validation loss, eval mode
    double val_loss = 0.0;
    detail::strided_parallel(ds.val, threads, [&](int w, std::size_t idx) {
      const DataItem& item = ds.items[idx];
      NoGradGuard ng;
      RngState r0(0);
      auto& model = *replicas[static_cast<std::size_t>(w)];
      auto out = model.forward(item.image, master.fused() ? &item.clip : nullptr,
                               DropoutMode::kEval, r0);
      item_losses[idx] = model.loss(out, item.gts).item();
    });
    for (std::size_t idx : ds.val) val_loss += item_losses[idx];
    val_loss /= static_cast<double>(std::max<std::size_t>(1, ds.val.size()));
    result.val_losses.push_back(val_loss);

    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      save_checkpoint(master.params, result.checkpoint_path);
    }
    adam.set_lr_scale(scheduler.on_epoch(epoch, val_loss));
    log("epoch " + std::to_string(epoch) + " train " + std::to_string(epoch_loss) +
        " val " + std::to_string(val_loss));
  }

  // leave the caller holding the best-validation weights
  load_checkpoint(master.params, result.checkpoint_path);
  result.wall_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Detection evaluation
// ---------------------------------------------------------------------------

struct DetectionEval {
  std::vector<Detection> detections;
  std::vector<GroundTruthBox> ground_truths;
  EvalReport report;
};

inline DetectionEval evaluate_detector(const DetrModel<float>& model, const Dataset& ds,
                                       const std::vector<std::size_t>& indices,
                                       int threads) {
  std::vector<std::unique_ptr<DetrModel<float>>> replicas;
  const int t_count = std::min(resolve_threads(threads), static_cast<int>(indices.size()));
  for (int w = 0; w < std::max(1, t_count); ++w) {
    replicas.push_back(
        std::make_unique<DetrModel<float>>(model.cfg, model.audio_cfg, /*seed=*/0));
    replicas.back()->params.copy_matching_from(model.params);
  }

  std::vector<DetectionSet> per_item(ds.items.size());
  detail::strided_parallel(indices, t_count, [&](int w, std::size_t idx) {
    const DataItem& item = ds.items[idx];
    NoGradGuard ng;
    RngState r0(0);
    auto out = replicas[static_cast<std::size_t>(w)]->forward(
        item.image, model.fused() ? &item.clip : nullptr, DropoutMode::kEval, r0);
    per_item[idx] = out.detections();
  });

  DetectionEval eval;
  for (std::size_t idx : indices) {
    const DataItem& item = ds.items[idx];
    const DetectionSet& det = per_item[idx];
    for (std::size_t q = 0; q < det.size(); ++q)
      eval.detections.push_back({item.image_id, det.boxes[q], det.drone_prob[q]});
    eval.ground_truths.insert(eval.ground_truths.end(), item.eval_gts.begin(),
                              item.eval_gts.end());
  }
  eval.report = map_report(eval.detections, eval.ground_truths);
  return eval;
}

// ---------------------------------------------------------------------------
// Audio classifier training / evaluation
// ---------------------------------------------------------------------------

struct AudioTrainResult {
  std::vector<double> train_losses;
  std::filesystem::path checkpoint_path;
  double wall_sec = 0.0;
};

struct AudioModel {
  AudioEncoderConfig cfg;
  ParameterStore<float> params;
  AudioClassifier<float> classifier;

  AudioModel(AudioEncoderConfig cfg_, std::uint64_t seed) : cfg(std::move(cfg_)) {
    RngState rng(derive_seed(seed, "audio-init"));
    classifier = AudioClassifier<float>(params, cfg, rng);
  }
};

inline AudioTrainResult train_audio_classifier(AudioModel& model, const Dataset& ds,
                                               const OptimizerConfig& opt,
                                               std::uint64_t seed,
                                               const std::filesystem::path& out_dir,
                                               const LogFn& log = null_log) {
  const auto t_start = std::chrono::steady_clock::now();
  // both labels must occur in the training split
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t idx : ds.train) (ds.items[idx].has_drone ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("audio training set must contain both drone and background clips");

  const int threads = std::min(resolve_threads(opt.threads), opt.batch_size);
  std::vector<std::unique_ptr<AudioModel>> replicas;
  for (int w = 0; w < threads; ++w) {
    replicas.push_back(std::make_unique<AudioModel>(model.cfg, /*seed=*/0));
    replicas.back()->params.copy_matching_from(model.params);
  }

  Adam<float> adam(model.params, opt.adam);
  AudioTrainResult result;
  std::filesystem::create_directories(out_dir);
  result.checkpoint_path = out_dir / "audio.ckpt";
  std::vector<double> item_losses(ds.items.size(), 0.0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<std::size_t> order = ds.train;
    RngState shuffle_rng(derive_seed(seed, "audio-shuffle-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    while (batch_start < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(opt.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(batch_start),
                                     order.begin() + static_cast<std::ptrdiff_t>(batch_end));
      for (auto& r : replicas) r->params.zero_grad();

      detail::strided_parallel(batch, threads, [&](int w, std::size_t idx) {
        const DataItem& item = ds.items[idx];
        auto& m = *replicas[static_cast<std::size_t>(w)];
        auto emb = m.classifier.encoder.forward(item.clip);
        auto logits = m.classifier.logits_from_embedding(emb);
        // class order (drone, background)
        const std::vector<int> target{item.has_drone ? 0 : 1};
        Tensor<float> loss = cross_entropy_logits(logits, target, {1.0f, 1.0f});
        const double lv = loss.item();
        if (!std::isfinite(lv))
          throw NumericError("non-finite audio loss at epoch " + std::to_string(epoch));
        item_losses[idx] = lv;
        loss.backward();
      });
      for (std::size_t k = 0; k < batch.size(); ++k) epoch_loss += item_losses[batch[k]];

      const float inv_batch = 1.0f / static_cast<float>(batch.size());
      for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
        auto& mg = model.params.at(pi).value.mutable_grad();
        for (auto& r : replicas) {
          const auto& rg = r->params.at(pi).value.grad();
          if (rg.empty()) continue;
          for (std::size_t j = 0; j < mg.size(); ++j) mg[j] += rg[j];
        }
        for (auto& g : mg) g *= inv_batch;
      }
      adam.step();
      adam.zero_grad();
      for (auto& r : replicas) r->params.copy_matching_from(model.params);
      batch_start = batch_end;
    }
    epoch_loss /= static_cast<double>(order.size());
    result.train_losses.push_back(epoch_loss);
    log("audio epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss));
  }
  save_checkpoint(model.params, result.checkpoint_path);
  result.wall_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

struct AudioEvalResult {
  ConfusionCounts counts;
  std::map<std::string, double> metrics;
};

inline AudioEvalResult evaluate_audio_classifier(const AudioModel& model, const Dataset& ds,
                                                 const std::vector<std::size_t>& indices,
                                                 int threads) {
  const int t_count = std::max(1, std::min(resolve_threads(threads),
                                           static_cast<int>(indices.size())));
  std::vector<std::unique_ptr<AudioModel>> replicas;
  for (int w = 0; w < t_count; ++w) {
    replicas.push_back(std::make_unique<AudioModel>(model.cfg, /*seed=*/0));
    replicas.back()->params.copy_matching_from(model.params);
  }
  std::vector<double> scores(ds.items.size(), 0.0);
  detail::strided_parallel(indices, t_count, [&](int w, std::size_t idx) {
    const DataItem& item = ds.items[idx];
    NoGradGuard ng;
    auto& m = *replicas[static_cast<std::size_t>(w)];
    auto emb = m.classifier.encoder.forward(item.clip);
    scores[idx] = m.classifier.classify_from_embedding(emb).first;
  });

  AudioEvalResult result;
  std::vector<ScoredLabel> scored;
  for (std::size_t idx : indices) {
    const bool positive = ds.items[idx].has_drone;
    const bool predicted = scores[idx] >= 0.5;
    if (positive && predicted) ++result.counts.tp;
    if (!positive && predicted) ++result.counts.fp;
    if (positive && !predicted) ++result.counts.fn;
    if (!positive && !predicted) ++result.counts.tn;
    scored.push_back({scores[idx], positive});
  }
  result.metrics = classification_metrics(result.counts, scored);
  return result;
}

// ---------------------------------------------------------------------------
// Reports and run manifests
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["iou_thresholds"] = rep.thresholds;
  for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
    const std::string name = bucket_name(kAllBuckets[bi]);
    nlohmann::ordered_json per_thr = nlohmann::json::array();
    for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti) {
      if (rep.ap[ti][bi])
        per_thr.push_back(*rep.ap[ti][bi]);
      else
        per_thr.push_back(nullptr);
    }
    j["ap"][name] = per_thr;
    if (rep.map[bi])
      j["map"][name] = *rep.map[bi];
    else
      j["map"][name] = nullptr;
    j["gt_counts"][name] = rep.gt_counts[bi];
  }
  return j;
}

inline std::string report_to_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "iou_threshold,all,small,medium,large\n";
  os.precision(10);
  auto cell = [&](const std::optional<double>& v) {
    if (v)
      os << *v;
    else
      os << "--";
  };
  for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti) {
    os << rep.thresholds[ti];
    for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
      os << ",";
      cell(rep.ap[ti][bi]);
    }
    os << "\n";
  }
  os << "mAP";
  for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
    os << ",";
    cell(rep.map[bi]);
  }
  os << "\n";
  return os.str();
}

inline void write_run_manifest(const std::filesystem::path& path,
                               const nlohmann::json& config_json, std::uint64_t seed,
                               const TrainResult& train,
                               const std::vector<std::string>& report_paths) {
  nlohmann::ordered_json j;
  j["version"] = "wavefuse 0.1.0";
  j["config_hash"] = config_hash(config_json);
  j["seed"] = seed;
  j["train_losses"] = train.train_losses;
  j["val_losses"] = train.val_losses;
  j["best_epoch"] = train.best_epoch;
  j["checkpoint"] = train.checkpoint_path.filename().string();
  j["checkpoint_hash"] = file_hash_hex(train.checkpoint_path);
  j["eval_reports"] = report_paths;
  j["wall_clock_sec"] = train.wall_sec;
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace wavefuse
