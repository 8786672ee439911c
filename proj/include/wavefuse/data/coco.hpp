#pragma once

#include <json.hpp>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wavefuse/eval/metrics.hpp"

namespace wavefuse {

// COCO-style annotation with absolute-pixel xywh box and the dataset's
// distance metadata. Unknown fields survive a read/write round trip via
// `extra`.
struct CocoAnnotation {
  int id = 0;
  int image_id = 0;
  double x = 0, y = 0, w = 0, h = 0;
  double area = 0;
  std::optional<double> distance_m;
  nlohmann::json extra = nlohmann::json::object();
};

struct CocoImage {
  int id = 0;
  std::string file_name;
  int width = 0, height = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct AnnotationSet {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  nlohmann::json categories = nlohmann::json::array();
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> warnings;  // populated by read_annotations validation
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj, const char* key,
                                         const char* where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw FormatError(std::string("coco: missing key '") + key + "' in " + where);
  return *it;
}

}  // namespace detail

inline AnnotationSet read_annotations(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("coco: malformed JSON: ") + e.what());
  }
  AnnotationSet set;
  const auto& images = detail::require_key(j, "images", "document");
  const auto& annotations = detail::require_key(j, "annotations", "document");
  set.categories = detail::require_key(j, "categories", "document");

  for (const auto& im : images) {
    CocoImage ci;
    ci.id = detail::require_key(im, "id", "image").get<int>();
    ci.file_name = detail::require_key(im, "file_name", "image").get<std::string>();
    ci.width = detail::require_key(im, "width", "image").get<int>();
    ci.height = detail::require_key(im, "height", "image").get<int>();
    for (auto it = im.begin(); it != im.end(); ++it)
      if (it.key() != "id" && it.key() != "file_name" && it.key() != "width" &&
          it.key() != "height")
        ci.extra[it.key()] = it.value();
    set.images.push_back(std::move(ci));
  }

  for (const auto& an : annotations) {
    CocoAnnotation ca;
    ca.id = detail::require_key(an, "id", "annotation").get<int>();
    ca.image_id = detail::require_key(an, "image_id", "annotation").get<int>();
    const auto& bbox = detail::require_key(an, "bbox", "annotation");
    if (!bbox.is_array() || bbox.size() != 4)
      throw FormatError("coco: 'bbox' must be [x, y, w, h]");
    ca.x = bbox[0].get<double>();
    ca.y = bbox[1].get<double>();
    ca.w = bbox[2].get<double>();
    ca.h = bbox[3].get<double>();
    ca.area = detail::require_key(an, "area", "annotation").get<double>();
    if (an.contains("distance_m")) ca.distance_m = an["distance_m"].get<double>();
    for (auto it = an.begin(); it != an.end(); ++it)
      if (it.key() != "id" && it.key() != "image_id" && it.key() != "bbox" &&
          it.key() != "area" && it.key() != "distance_m")
        ca.extra[it.key()] = it.value();

    if (std::abs(ca.area - ca.w * ca.h) > 0.5)
      set.warnings.push_back("annotation " + std::to_string(ca.id) + ": stored area " +
                             std::to_string(ca.area) + " differs from w*h " +
                             std::to_string(ca.w * ca.h));
    set.annotations.push_back(std::move(ca));
  }

  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "images" && it.key() != "annotations" && it.key() != "categories")
      set.extra[it.key()] = it.value();

  // Boxes must stay inside their image extents.
  for (const auto& ca : set.annotations) {
    for (const auto& im : set.images) {
      if (im.id != ca.image_id) continue;
      if (ca.x < 0 || ca.y < 0 || ca.x + ca.w > im.width || ca.y + ca.h > im.height)
        set.warnings.push_back("annotation " + std::to_string(ca.id) +
                               ": box extends outside image " + std::to_string(im.id));
      break;
    }
  }
  return set;
}

inline std::string write_annotations(const AnnotationSet& set) {
  nlohmann::ordered_json j;
  j["images"] = nlohmann::json::array();
  for (const auto& im : set.images) {
    nlohmann::ordered_json o;
    o["id"] = im.id;
    o["file_name"] = im.file_name;
    o["width"] = im.width;
    o["height"] = im.height;
    for (auto it = im.extra.begin(); it != im.extra.end(); ++it) o[it.key()] = it.value();
    j["images"].push_back(o);
  }
  j["annotations"] = nlohmann::json::array();
  for (const auto& an : set.annotations) {
    nlohmann::ordered_json o;
    o["id"] = an.id;
    o["image_id"] = an.image_id;
    o["bbox"] = {an.x, an.y, an.w, an.h};
    o["area"] = an.area;
    if (an.distance_m) o["distance_m"] = *an.distance_m;
    for (auto it = an.extra.begin(); it != an.extra.end(); ++it) o[it.key()] = it.value();
    j["annotations"].push_back(o);
  }
  j["categories"] = set.categories;
  for (auto it = set.extra.begin(); it != set.extra.end(); ++it) j[it.key()] = it.value();
  return j.dump(2) + "\n";
}

inline nlohmann::json default_categories() {
  return nlohmann::json::array({{{"id", 1}, {"name", "drone"}}});
}

// Per-bucket counts plus a log-spaced area histogram, emitted as CSV rows
// `bucket,<name>,<count>` and `hist,<lo_px2>,<hi_px2>,<count>`.
inline std::string dataset_stats(const AnnotationSet& set, int hist_bins = 20) {
  std::array<std::size_t, 4> counts = {0, 0, 0, 0};
  for (const auto& an : set.annotations) {
    ++counts[EvalReport::bucket_index(SizeBucket::kAll)];
    ++counts[EvalReport::bucket_index(bucket_of(an.area))];
  }
  std::ostringstream os;
  os << "kind,key_or_lo,hi,count\n";
  for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi)
    os << "bucket," << bucket_name(kAllBuckets[bi]) << ",," << counts[bi] << "\n";

  const double lo_log = 0.0, hi_log = 6.0;  // 1 px^2 .. 1e6 px^2
  std::vector<std::size_t> hist(static_cast<std::size_t>(hist_bins), 0);
  for (const auto& an : set.annotations) {
    const double l = std::log10(std::max(1.0, an.area));
    auto bin = static_cast<std::size_t>((l - lo_log) / (hi_log - lo_log) * hist_bins);
    if (bin >= hist.size()) bin = hist.size() - 1;
    ++hist[bin];
  }
  for (int b = 0; b < hist_bins; ++b) {
    const double lo = std::pow(10.0, lo_log + (hi_log - lo_log) * b / hist_bins);
    const double hi = std::pow(10.0, lo_log + (hi_log - lo_log) * (b + 1) / hist_bins);
    os << "hist," << lo << "," << hi << "," << hist[static_cast<std::size_t>(b)] << "\n";
  }
  return os.str();
}

}  // namespace wavefuse
