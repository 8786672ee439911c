#pragma once

// Reference implementations used only for verification (unit tests, the
// acceptance suite and `wavefuse verify`). Deliberately independent of the
// production code paths: exhaustive search instead of the Hungarian
// algorithm, a direct PR-curve walk instead of the envelope evaluator, and
// an O(n^2) DFT. Nothing here is called by the pipeline itself.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <vector>

#include "wavefuse/eval/metrics.hpp"

namespace wavefuse::oracles {

// ---------------------------------------------------------------------------
// Exhaustive minimum-cost assignment
// ---------------------------------------------------------------------------

struct BruteAssignment {
  double total = 0.0;
  std::vector<std::size_t> row_for_col;  // prediction index per ground truth
};

// Enumerates all injections of m columns into n rows (n >= m). Among equal
// totals, keeps the lexicographically smallest row_for_col vector; the DFS
// visits candidates in ascending row order, so the first strict minimum seen
// is that representative.
inline BruteAssignment brute_force_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t m = cost.empty() ? 0 : cost[0].size();
  const std::size_t n = cost.size();
  BruteAssignment best;
  best.total = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> current(m, 0);
  std::vector<bool> used(n, false);
  std::function<void(std::size_t, double)> dfs = [&](std::size_t col, double sum) {
    if (col == m) {
      if (sum < best.total) {
        best.total = sum;
        best.row_for_col = current;
      }
      return;
    }
    for (std::size_t row = 0; row < n; ++row) {
      if (used[row]) continue;
      used[row] = true;
      current[col] = row;
      dfs(col + 1, sum + cost[row][col]);
      used[row] = false;
    }
  };
  if (m > 0) dfs(0, 0.0);
  else best.total = 0.0;
  return best;
}

// ---------------------------------------------------------------------------
// Reference average precision (direct PR walk)
// ---------------------------------------------------------------------------

namespace detail {

struct Box {
  double x0, y0, x1, y1;
};

inline Box to_corners(const BoundingBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline double ref_iou(const BoundingBox& a, const BoundingBox& b) {
  const Box p = to_corners(a), q = to_corners(b);
  const double w = std::min(p.x1, q.x1) - std::max(p.x0, q.x0);
  const double h = std::min(p.y1, q.y1) - std::max(p.y0, q.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double area_p = (p.x1 - p.x0) * (p.y1 - p.y0);
  const double area_q = (q.x1 - q.x0) * (q.y1 - q.y0);
  return inter / (area_p + area_q - inter);
}

}  // namespace detail

// Same matching convention as the production evaluator, written from the
// rules: in-bucket ground truths are positives, detections overlapping only
// out-of-bucket ground truths at or above the threshold are skipped, and the
// 101-point interpolation is taken directly on the TP/FP sequence.
inline std::optional<double> reference_average_precision(
    const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
    double iou_thr, SizeBucket bucket) {
  auto in_bucket = [&](const GroundTruthBox& g) {
    if (bucket == SizeBucket::kAll) return true;
    const double a = g.area_px;
    switch (bucket) {
      case SizeBucket::kSmall:
        return a < 1024.0;
      case SizeBucket::kMedium:
        return a >= 1024.0 && a < 9216.0;
      case SizeBucket::kLarge:
        return a >= 9216.0;
      default:
        return true;
    }
  };

  std::size_t total_pos = 0;
  for (const auto& g : gts)
    if (in_bucket(g)) ++total_pos;
  if (total_pos == 0) return std::nullopt;

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> is_tp;
  for (std::size_t oi : order) {
    const auto& d = dets[oi];
    double best = -1.0;
    std::ptrdiff_t best_idx = -1;
    bool touches_ignored = false;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].image_id != d.image_id) continue;
      const double v = detail::ref_iou(d.box, gts[gi].box);
      if (v < iou_thr) continue;
      if (!in_bucket(gts[gi])) {
        touches_ignored = true;
        continue;
      }
      if (taken[gi]) continue;
      if (v > best) {
        best = v;
        best_idx = static_cast<std::ptrdiff_t>(gi);
      }
    }
    if (best_idx >= 0) {
      taken[static_cast<std::size_t>(best_idx)] = true;
      is_tp.push_back(true);
    } else if (!touches_ignored) {
      is_tp.push_back(false);
    }
  }

  // Direct 101-point sweep: for each recall grid point, scan the whole
  // TP/FP sequence for the best precision at or beyond that recall.
  double ap_sum = 0.0;
  for (int ri = 0; ri <= 100; ++ri) {
    const double r_want = ri / 100.0;
    double best_p = 0.0;
    std::size_t tp = 0, seen = 0;
    for (bool f : is_tp) {
      ++seen;
      if (f) ++tp;
      const double rec = static_cast<double>(tp) / static_cast<double>(total_pos);
      const double prec = static_cast<double>(tp) / static_cast<double>(seen);
      if (rec >= r_want) best_p = std::max(best_p, prec);
    }
    ap_sum += best_p;
  }
  return ap_sum / 101.0;
}

// ---------------------------------------------------------------------------
// Naive DFT
// ---------------------------------------------------------------------------

inline std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x, bool inverse = false) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> y(n, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * 3.14159265358979323846 *
                         static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      y[k] += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    if (inverse) y[k] /= static_cast<double>(n);
  }
  return y;
}

}  // namespace wavefuse::oracles
