#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wavefuse/audio/encoder.hpp"
#include "wavefuse/checkpoint.hpp"
#include "wavefuse/data/coco.hpp"
#include "wavefuse/data/splits.hpp"
#include "wavefuse/data/synth.hpp"

namespace wavefuse {

// One synchronized pair loaded into tensors, ready for the trainer.
struct DataItem {
  int image_id = 0;
  Tensor<float> image;  // [3, H, W] in [0, 1]
  Tensor<float> clip;   // [32000], standardized
  bool has_drone = false;
  std::vector<BoundingBox> gts;           // normalized cxcywh
  std::vector<GroundTruthBox> eval_gts;   // with pixel areas for bucketing
  std::vector<std::string> tags;
};

struct Dataset {
  std::vector<DataItem> items;
  std::vector<std::size_t> train, val, test;
  std::size_t image_size = 0;
};

namespace detail {

inline Tensor<float> image_to_tensor(const ImageU8& img) {
  std::vector<float> v(3 * img.width * img.height);
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      v[c * plane + i] = static_cast<float>(img.rgb[3 * i + c]) / 255.0f;
  return Tensor<float>({3, img.height, img.width}, std::move(v));
}

inline DataItem item_from_scene(int image_id, const SynthScene& scene,
                                std::size_t image_size) {
  DataItem item;
  item.image_id = image_id;
  item.image = image_to_tensor(scene.image);
  item.clip = clip_to_tensor<float>(make_clip(scene.audio, 0));
  item.has_drone = scene.has_drone;
  item.tags = scene.tags;
  const double s = static_cast<double>(image_size);
  for (const auto& an : scene.annotations) {
    BoundingBox box{(an.x + an.w / 2) / s, (an.y + an.h / 2) / s, an.w / s, an.h / s};
    item.gts.push_back(box);
    item.eval_gts.push_back({image_id, box, an.area});
  }
  return item;
}

}  // namespace detail

// In-memory synthetic dataset with exact split sizes: items are generated in
// index order, the first n_train are the training set and so on. Scene seeds
// derive from (seed, index), so the same seed always builds the same data.
inline Dataset make_synthetic_dataset(std::uint64_t seed, const SynthConfig& cfg,
                                      std::size_t n_train, std::size_t n_val,
                                      std::size_t n_test) {
  Dataset ds;
  ds.image_size = cfg.image_size;
  const std::size_t n = n_train + n_val + n_test;
  ds.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SynthScene scene = synth_scene(derive_seed(seed, "scene-" + std::to_string(i)), cfg);
    ds.items.push_back(detail::item_from_scene(static_cast<int>(i), scene, cfg.image_size));
    if (i < n_train)
      ds.train.push_back(i);
    else if (i < n_train + n_val)
      ds.val.push_back(i);
    else
      ds.test.push_back(i);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk dataset layout:
//   images/img_NNNNNN.png  audio/clip_NNNNNN.wav
//   manifest.jsonl  annotations.json  splits.json  stats.csv
// ---------------------------------------------------------------------------

inline void write_synth_dataset(const std::filesystem::path& dir, std::uint64_t seed,
                                const SynthConfig& cfg, std::size_t n,
                                const SplitSpec& split_spec, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw StateError("output directory " + dir.string() +
                     " is not empty (use --force to overwrite)");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "audio");

  AnnotationSet ann_set;
  ann_set.categories = default_categories();
  std::vector<SyncPair> pairs;
  std::string manifest;
  int next_ann_id = 1;
  char name[64];

  for (std::size_t i = 0; i < n; ++i) {
    const SynthScene scene = synth_scene(derive_seed(seed, "scene-" + std::to_string(i)), cfg);
    std::snprintf(name, sizeof(name), "images/img_%06zu.png", i);
    const std::string image_path = name;
    std::snprintf(name, sizeof(name), "audio/clip_%06zu.wav", i);
    const std::string wav_path = name;
    write_file_atomic(dir / image_path, encode_png(scene.image));
    write_file_atomic(dir / wav_path, encode_wav(scene.audio));

    CocoImage im;
    im.id = static_cast<int>(i);
    im.file_name = image_path;
    im.width = static_cast<int>(cfg.image_size);
    im.height = static_cast<int>(cfg.image_size);
    ann_set.images.push_back(im);
    for (CocoAnnotation an : scene.annotations) {
      an.id = next_ann_id++;
      an.image_id = static_cast<int>(i);
      ann_set.annotations.push_back(an);
    }

    SyncPair pair;
    pair.segment_index = static_cast<int>(i);
    pair.frame_index = midpoint_frame(static_cast<int>(i), cfg.fps);
    pair.image_path = image_path;
    pair.wav_path = wav_path;
    pair.image_id = static_cast<int>(i);
    pair.tags = scene.tags;
    pairs.push_back(pair);

    nlohmann::ordered_json line;
    line["image_id"] = pair.image_id;
    line["image_path"] = image_path;
    line["wav_path"] = wav_path;
    line["segment_index"] = pair.segment_index;
    line["frame_index"] = pair.frame_index;
    line["tags"] = scene.tags;
    line["label"] = scene.has_drone ? "drone" : "background";
    manifest += line.dump() + "\n";
  }

  write_file_atomic(dir / "manifest.jsonl", manifest);
  write_file_atomic(dir / "annotations.json", write_annotations(ann_set));
  write_file_atomic(dir / "stats.csv", dataset_stats(ann_set));

  const SplitResult splits = make_splits(pairs, split_spec);
  nlohmann::ordered_json sj;
  sj["train"] = splits.train;
  sj["val"] = splits.val;
  sj["test"] = splits.test;
  write_file_atomic(dir / "splits.json", sj.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "manifest.jsonl"))
    throw FormatError("dataset: missing manifest.jsonl in " + dir.string());

  const AnnotationSet ann_set = read_annotations(read_file(dir / "annotations.json"));
  std::map<int, std::vector<CocoAnnotation>> by_image;
  for (const auto& an : ann_set.annotations) by_image[an.image_id].push_back(an);
  std::map<int, std::pair<int, int>> image_dims;
  for (const auto& im : ann_set.images) image_dims[im.id] = {im.width, im.height};

  Dataset ds;
  std::istringstream manifest(read_file(dir / "manifest.jsonl"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("dataset: bad manifest line: " + std::string(e.what()));
    }
    DataItem item;
    item.image_id = j.at("image_id").get<int>();
    const ImageU8 img = decode_png(read_file(dir / j.at("image_path").get<std::string>()));
    ds.image_size = img.width;
    item.image = detail::image_to_tensor(img);
    Waveform w = decode_wav(read_file(dir / j.at("wav_path").get<std::string>()));
    if (w.sample_rate != kClipSampleRate) w = resample(w, kClipSampleRate);
    item.clip = clip_to_tensor<float>(make_clip(w, 0));
    item.tags = j.at("tags").get<std::vector<std::string>>();
    item.has_drone = j.at("label").get<std::string>() == "drone";

    const auto dims = image_dims.at(item.image_id);
    const double sw = dims.first, sh = dims.second;
    for (const auto& an : by_image[item.image_id]) {
      BoundingBox box{(an.x + an.w / 2) / sw, (an.y + an.h / 2) / sh, an.w / sw, an.h / sh};
      item.gts.push_back(box);
      item.eval_gts.push_back({item.image_id, box, an.area});
    }
    ds.items.push_back(std::move(item));
  }

  const auto sj = nlohmann::json::parse(read_file(dir / "splits.json"));
  ds.train = sj.at("train").get<std::vector<std::size_t>>();
  ds.val = sj.at("val").get<std::vector<std::size_t>>();
  ds.test = sj.at("test").get<std::vector<std::size_t>>();
  return ds;
}

}  // namespace wavefuse
