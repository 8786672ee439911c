#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wavefuse/boxes.hpp"

namespace wavefuse {

// ---------------------------------------------------------------------------
// Size buckets (areas in squared pixels)
// ---------------------------------------------------------------------------

enum class SizeBucket { kAll, kSmall, kMedium, kLarge };

inline constexpr double kSmallAreaMax = 32.0 * 32.0;   // 1024
inline constexpr double kMediumAreaMax = 96.0 * 96.0;  // 9216

inline constexpr std::array<SizeBucket, 4> kAllBuckets = {
    SizeBucket::kAll, SizeBucket::kSmall, SizeBucket::kMedium, SizeBucket::kLarge};

inline std::string bucket_name(SizeBucket b) {
  switch (b) {
    case SizeBucket::kAll:
      return "all";
    case SizeBucket::kSmall:
      return "small";
    case SizeBucket::kMedium:
      return "medium";
    case SizeBucket::kLarge:
      return "large";
  }
  return "?";
}

// small: area < 32^2; medium: 32^2 <= area < 96^2; large: area >= 96^2.
inline SizeBucket bucket_of(double gt_area_px) {
  if (gt_area_px < 0) throw ShapeError("bucket_of: negative area");
  if (gt_area_px < kSmallAreaMax) return SizeBucket::kSmall;
  if (gt_area_px < kMediumAreaMax) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

inline bool bucket_contains(SizeBucket b, double gt_area_px) {
  return b == SizeBucket::kAll || bucket_of(gt_area_px) == b;
}

// The 9 IoU thresholds 0.50 .. 0.90 in 0.05 steps.
inline std::vector<double> map_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 8; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

// ---------------------------------------------------------------------------
// Detection-level inputs
// ---------------------------------------------------------------------------

struct Detection {
  int image_id = 0;
  BoundingBox box;
  double score = 0.0;  // p(drone)
};

struct GroundTruthBox {
  int image_id = 0;
  BoundingBox box;
  double area_px = 0.0;  // bucket membership uses annotated pixel area
};

// Average precision at one IoU threshold for one bucket, COCO-style:
//   - detections in descending confidence greedily match the unmatched
//     in-bucket ground truth of highest IoU >= thr;
//   - detections whose only IoU >= thr overlaps are with out-of-bucket
//     ground truths are ignored (neither TP nor FP);
//   - 101-point interpolated area under the precision-recall curve.
// Returns nullopt when the bucket holds no ground truths.
inline std::optional<double> average_precision(const std::vector<Detection>& dets,
                                               const std::vector<GroundTruthBox>& gts,
                                               double iou_thr, SizeBucket bucket) {
  std::size_t n_pos = 0;
  for (const auto& g : gts)
    if (bucket_contains(bucket, g.area_px)) ++n_pos;
  if (n_pos == 0) return std::nullopt;

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<bool> gt_used(gts.size(), false);
  std::vector<int> flags;  // 1 = TP, 0 = FP; ignored detections are skipped
  flags.reserve(dets.size());
  for (std::size_t oi : order) {
    const auto& d = dets[oi];
    std::ptrdiff_t best_gt = -1;
    double best_iou = iou_thr;
    bool overlaps_ignored = false;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].image_id != d.image_id) continue;
      const double v = iou(d.box, gts[gi].box);
      if (v < iou_thr) continue;
      if (!bucket_contains(bucket, gts[gi].area_px)) {
        overlaps_ignored = true;
        continue;
      }
      if (gt_used[gi]) continue;
      if (v > best_iou || (v == best_iou && best_gt < 0)) {
        best_iou = v;
        best_gt = static_cast<std::ptrdiff_t>(gi);
      }
    }
    if (best_gt >= 0) {
      gt_used[static_cast<std::size_t>(best_gt)] = true;
      flags.push_back(1);
    } else if (overlaps_ignored) {
      continue;  // matched only out-of-bucket ground truth
    } else {
      flags.push_back(0);
    }
  }

  // Precision envelope sampled at recalls 0.00, 0.01, ..., 1.00.
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (int f : flags) {
    if (f)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
  }
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double want = static_cast<double>(r) / 100.0;
    double p = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= want) {
        p = precision[i];
        break;
      }
    }
    ap += p;
  }
  return ap / 101.0;
}

// ---------------------------------------------------------------------------
// Aggregated report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::vector<double> thresholds;
  // ap[threshold index][bucket index following kAllBuckets]
  std::vector<std::array<std::optional<double>, 4>> ap;
  std::array<std::optional<double>, 4> map;
  std::array<std::size_t, 4> gt_counts = {0, 0, 0, 0};

  static std::size_t bucket_index(SizeBucket b) {
    for (std::size_t i = 0; i < kAllBuckets.size(); ++i)
      if (kAllBuckets[i] == b) return i;
    return 0;
  }
};

inline EvalReport map_report(const std::vector<Detection>& dets,
                             const std::vector<GroundTruthBox>& gts) {
  EvalReport rep;
  rep.thresholds = map_iou_thresholds();
  rep.ap.resize(rep.thresholds.size());
  for (const auto& g : gts) {
    ++rep.gt_counts[EvalReport::bucket_index(SizeBucket::kAll)];
    ++rep.gt_counts[EvalReport::bucket_index(bucket_of(g.area_px))];
  }
  for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti)
    for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi)
      rep.ap[ti][bi] = average_precision(dets, gts, rep.thresholds[ti], kAllBuckets[bi]);
  for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti)
      if (rep.ap[ti][bi]) {
        sum += *rep.ap[ti][bi];
        ++n;
      }
    if (n > 0) rep.map[bi] = sum / static_cast<double>(n);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Binary classification metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct ScoredLabel {
  double score = 0.0;  // higher means more likely positive
  bool positive = false;
};

namespace detail {

inline double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Trapezoidal area under the ROC curve swept over all score thresholds.
inline double roc_auc(std::vector<ScoredLabel> samples) {
  std::size_t pos = 0, neg = 0;
  for (const auto& s : samples) (s.positive ? pos : neg)++;
  if (pos == 0 || neg == 0) return 0.5;  // degenerate: ranking is meaningless
  std::stable_sort(samples.begin(), samples.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < samples.size()) {
    const double s = samples[i].score;
    for (; i < samples.size() && samples[i].score == s; ++i)
      (samples[i].positive ? tp : fp)++;
    const double tpr = static_cast<double>(tp) / pos;
    const double fpr = static_cast<double>(fp) / neg;
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  auc += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
  return auc;
}

// Trapezoidal area under the precision-recall curve over all thresholds.
inline double pr_auc(std::vector<ScoredLabel> samples) {
  std::size_t pos = 0;
  for (const auto& s : samples)
    if (s.positive) ++pos;
  if (pos == 0) return 0.0;
  std::stable_sort(samples.begin(), samples.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  double auc = 0.0;
  double prev_recall = 0.0;
  double prev_precision = 1.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < samples.size()) {
    const double s = samples[i].score;
    for (; i < samples.size() && samples[i].score == s; ++i)
      (samples[i].positive ? tp : fp)++;
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    auc += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
  }
  return auc;
}

}  // namespace detail

// Precision, recall, F1, balanced accuracy and MCC from counts; ROC-AUC and
// PR-AUC from the scored samples. MCC is 0 whenever a marginal is empty.
inline std::map<std::string, double> classification_metrics(
    const ConfusionCounts& c, const std::vector<ScoredLabel>& scored) {
  if (c.total() == 0) throw EvalError("classification_metrics: empty input");
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);

  const double precision = detail::safe_div(tp, tp + fp);
  const double recall = detail::safe_div(tp, tp + fn);
  const double f1 = detail::safe_div(2.0 * precision * recall, precision + recall);
  const double tnr = detail::safe_div(tn, tn + fp);
  const double balanced_accuracy = (recall + tnr) / 2.0;

  const double denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  const double mcc =
      denom_sq > 0.0 ? (tp * tn - fp * fn) / std::sqrt(denom_sq) : 0.0;

  return {{"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"balanced_accuracy", balanced_accuracy},
          {"roc_auc", detail::roc_auc(scored)},
          {"pr_auc", detail::pr_auc(scored)},
          {"mcc", mcc}};
}

}  // namespace wavefuse
