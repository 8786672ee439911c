#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "wavefuse/boxes.hpp"
#include "wavefuse/ops.hpp"

namespace wavefuse {

// Fixed-size set prediction for one image: per-query drone probability and
// box. p(no-object) is the complement.
struct DetectionSet {
  std::vector<double> drone_prob;
  std::vector<BoundingBox> boxes;

  std::size_t size() const { return drone_prob.size(); }
};

// (prediction index, ground-truth index) pairs plus the predictions left
// unmatched (trained toward the no-object class).
struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unmatched_predictions;
};

namespace detail {

constexpr double kLapInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment on an n x m cost matrix (n rows =
// predictions, m columns = ground truths, n >= m). Returns the row chosen
// for each column and the total.
inline double lap_solve(const std::vector<std::vector<double>>& cost,
                        std::vector<std::size_t>* row_for_col) {
  const std::size_t n = cost.size();
  const std::size_t m = n == 0 ? 0 : cost[0].size();
  if (m == 0) {
    if (row_for_col) row_for_col->clear();
    return 0.0;
  }
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kLapInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kLapInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  if (row_for_col) row_for_col->assign(m, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] == 0) continue;
    if (row_for_col) (*row_for_col)[p[j] - 1] = j - 1;
    total += cost[j - 1][p[j] - 1];
  }
  return total;
}

}  // namespace detail

// Minimum-cost injection of the m ground truths into the n predictions
// (n >= m). Among equal-cost optima the lexicographically smallest
// row-per-column assignment is returned, so matching is deterministic under
// tied costs.
inline MatchResult hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const std::size_t m = n == 0 ? 0 : cost[0].size();
  for (const auto& row : cost) {
    if (row.size() != m) throw ShapeError("hungarian: ragged cost matrix");
    for (double c : row)
      if (!std::isfinite(c)) throw NumericError("hungarian: non-finite cost entry");
  }
  MatchResult result;
  if (m == 0) {
    for (std::size_t i = 0; i < n; ++i) result.unmatched_predictions.push_back(i);
    return result;
  }
  if (n < m)
    throw ShapeError("hungarian: need at least as many predictions (" + std::to_string(n) +
                     ") as ground truths (" + std::to_string(m) + ")");

  const double base = detail::lap_solve(cost, nullptr);
  const double tol = 1e-9 * (1.0 + std::abs(base));

  // Fix columns left to right onto the smallest feasible row; feasibility is
  // checked by re-solving the remaining subproblem.
  std::vector<bool> row_used(n, false);
  std::vector<std::size_t> row_for_col(m);
  double fixed_sum = 0.0;
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t chosen = n;
    double chosen_total = detail::kLapInf;
    for (std::size_t r = 0; r < n; ++r) {
      if (row_used[r]) continue;
      double rest = 0.0;
      if (col + 1 < m) {
        std::vector<std::vector<double>> sub;
        sub.reserve(n);
        for (std::size_t rr = 0; rr < n; ++rr) {
          if (row_used[rr] || rr == r) continue;
          std::vector<double> row(cost[rr].begin() + static_cast<std::ptrdiff_t>(col) + 1,
                                  cost[rr].end());
          sub.push_back(std::move(row));
        }
        rest = detail::lap_solve(sub, nullptr);
      }
      const double total = fixed_sum + cost[r][col] + rest;
      if (total <= base + tol) {
        chosen = r;
        break;
      }
      if (total < chosen_total) {
        chosen_total = total;
        chosen = r;
      }
    }
    row_used[chosen] = true;
    row_for_col[col] = chosen;
    fixed_sum += cost[chosen][col];
  }

  for (std::size_t col = 0; col < m; ++col) result.pairs.emplace_back(row_for_col[col], col);
  std::sort(result.pairs.begin(), result.pairs.end());
  for (std::size_t r = 0; r < n; ++r)
    if (!row_used[r]) result.unmatched_predictions.push_back(r);
  return result;
}

// ---------------------------------------------------------------------------
// Matching cost
// ---------------------------------------------------------------------------

struct MatchWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
};

// cost[i][j] = cls * (-p_i(drone)) + l1 * |b_i - b_j|_1 + giou * (-GIoU).
inline std::vector<std::vector<double>> match_cost(const DetectionSet& preds,
                                                   const std::vector<BoundingBox>& gts,
                                                   const MatchWeights& w = {}) {
  std::vector<std::vector<double>> cost(preds.size(), std::vector<double>(gts.size(), 0.0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const auto& a = preds.boxes[i];
      const auto& b = gts[j];
      const double l1 = std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) +
                        std::abs(a.w - b.w) + std::abs(a.h - b.h);
      cost[i][j] = w.cls * (-preds.drone_prob[i]) + w.l1 * l1 + w.giou * (-giou(a, b));
    }
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Differentiable GIoU for matched pairs (built from primitive ops, so the
// tape provides gradients; the scalar giou() above is the value route)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> giou_pairs(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || a.dim(1) != 4 || b.shape() != a.shape())
    throw ShapeError("giou_pairs: expected matching [m x 4] boxes");
  auto corners = [](const Tensor<T>& t) {
    Tensor<T> cx = slice_lastdim(t, 0, 1), cy = slice_lastdim(t, 1, 2);
    Tensor<T> w = slice_lastdim(t, 2, 3), h = slice_lastdim(t, 3, 4);
    Tensor<T> hw = scale(w, T(0.5)), hh = scale(h, T(0.5));
    struct C {
      Tensor<T> x0, y0, x1, y1, area;
    };
    return C{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh), mul(w, h)};
  };
  auto ca = corners(a), cb = corners(b);
  Tensor<T> iw = relu(sub(minimum(ca.x1, cb.x1), maximum(ca.x0, cb.x0)));
  Tensor<T> ih = relu(sub(minimum(ca.y1, cb.y1), maximum(ca.y0, cb.y0)));
  Tensor<T> inter = mul(iw, ih);
  Tensor<T> uni = sub(add(ca.area, cb.area), inter);
  Tensor<T> iou_v = divide(inter, uni);
  Tensor<T> hull = mul(sub(maximum(ca.x1, cb.x1), minimum(ca.x0, cb.x0)),
                       sub(maximum(ca.y1, cb.y1), minimum(ca.y0, cb.y0)));
  Tensor<T> penalty = divide(sub(hull, uni), hull);
  return reshape(sub(iou_v, penalty), {a.dim(0)});
}

// ---------------------------------------------------------------------------
// Set loss
// ---------------------------------------------------------------------------

struct SetLossWeights {
  double l1 = 5.0;
  double giou = 2.0;
  double background = 0.1;  // down-weight for unmatched (no-object) queries
};

// Matched queries: CE(drone) + l1 and GIoU box terms; unmatched queries:
// down-weighted CE(no-object). Everything is averaged over the N_q queries.
// The matching itself is fixed input here; gradients flow only through the
// head outputs.
template <typename T>
Tensor<T> set_loss(const Tensor<T>& class_logits, const Tensor<T>& boxes,
                   const std::vector<BoundingBox>& gts, const MatchResult& match,
                   const SetLossWeights& w = {}) {
  if (class_logits.ndim() != 2 || class_logits.dim(1) != 2)
    throw ShapeError("set_loss: class logits must be [N_q x 2]");
  if (boxes.ndim() != 2 || boxes.dim(1) != 4 || boxes.dim(0) != class_logits.dim(0))
    throw ShapeError("set_loss: boxes must be [N_q x 4]");
  const std::size_t n_q = class_logits.dim(0);

  std::vector<int> targets(n_q, 1);  // class 1 = no-object
  for (const auto& [pi, gi] : match.pairs) targets[pi] = 0;
  Tensor<T> loss =
      cross_entropy_logits(class_logits, targets, {T(1), static_cast<T>(w.background)});

  if (!match.pairs.empty()) {
    std::vector<std::size_t> pred_idx;
    std::vector<T> gt_vals;
    for (const auto& [pi, gi] : match.pairs) {
      pred_idx.push_back(pi);
      const auto& g = gts.at(gi);
      gt_vals.insert(gt_vals.end(), {static_cast<T>(g.cx), static_cast<T>(g.cy),
                                     static_cast<T>(g.w), static_cast<T>(g.h)});
    }
    Tensor<T> pred_boxes = select_rows(boxes, pred_idx);
    Tensor<T> gt_boxes(Shape{match.pairs.size(), 4}, std::move(gt_vals));
    Tensor<T> l1 = sum_all(sum_lastdim(abs_op(sub(pred_boxes, gt_boxes))));
    Tensor<T> ones(Shape{match.pairs.size()}, T(1));
    Tensor<T> giou_term = sum_all(sub(ones, giou_pairs(pred_boxes, gt_boxes)));
    const T inv_q = T(1) / static_cast<T>(n_q);
    loss = add(loss, add(scale(l1, static_cast<T>(w.l1) * inv_q),
                         scale(giou_term, static_cast<T>(w.giou) * inv_q)));
  }
  return loss;
}

}  // namespace wavefuse
