#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wavefuse/nn.hpp"

namespace wavefuse {

// Multi-scale deformable sampling: for each query, head, level and point,
// bilinearly sample the head's channel slice of that level's value map at
// the given normalized location and combine with the attention weights.
// maps[l]: [d, H_l, W_l]; points: [N, M, L, K, 2]; weights: [N, M, L, K];
// output: [N, d] with head h occupying channels [h*dh, (h+1)*dh).
template <typename T>
Tensor<T> deform_gather(const std::vector<Tensor<T>>& maps, const Tensor<T>& points,
                        const Tensor<T>& weights, std::size_t heads) {
  const std::size_t levels = maps.size();
  if (levels == 0) throw ShapeError("deform_gather: no level maps");
  const std::size_t d = maps[0].dim(0);
  if (heads == 0 || d % heads != 0)
    throw ConfigError("deform_gather: heads must divide channel width");
  for (const auto& m : maps)
    if (m.ndim() != 3 || m.dim(0) != d)
      throw ShapeError("deform_gather: level map shape mismatch");
  if (points.ndim() != 5 || points.dim(1) != heads || points.dim(2) != levels ||
      points.dim(4) != 2)
    throw ShapeError("deform_gather: points must be [N, M, L, K, 2], got " +
                     shape_str(points.shape()));
  if (weights.ndim() != 4 || weights.dim(0) != points.dim(0) ||
      weights.dim(1) != heads || weights.dim(2) != levels ||
      weights.dim(3) != points.dim(3))
    throw ShapeError("deform_gather: weights must be [N, M, L, K]");

  const std::size_t n = points.dim(0), k_pts = points.dim(3), dh = d / heads;
  std::vector<std::size_t> hs(levels), ws(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    hs[l] = maps[l].dim(1);
    ws[l] = maps[l].dim(2);
  }

  std::vector<T> out(n * d, T(0));
  const auto& pv = points.data();
  const auto& wv = weights.data();
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t m = 0; m < heads; ++m) {
      T* dst = out.data() + q * d + m * dh;
      for (std::size_t l = 0; l < levels; ++l) {
        const auto& mv = maps[l].data();
        const std::size_t hw = hs[l] * ws[l];
        for (std::size_t k = 0; k < k_pts; ++k) {
          const std::size_t base = (((q * heads + m) * levels + l) * k_pts + k);
          const T w = wv[base];
          if (w == T(0)) continue;
          const auto fp = detail::bilinear_footprint(
              static_cast<double>(pv[base * 2]), static_cast<double>(pv[base * 2 + 1]),
              hs[l], ws[l]);
          for (int t = 0; t < fp.count; ++t) {
            const auto& tap = fp.taps[t];
            const T tw = w * static_cast<T>(tap.w);
            const T* src = mv.data() + m * dh * hw + tap.iy * ws[l] + tap.ix;
            for (std::size_t c = 0; c < dh; ++c) dst[c] += tw * src[c * hw];
          }
        }
      }
    }
  }

  std::vector<Tensor<T>> parents = maps;
  parents.push_back(points);
  parents.push_back(weights);
  std::vector<std::shared_ptr<TensorNode<T>>> map_nodes;
  for (const auto& m : maps) map_nodes.push_back(m.node());
  auto pn = points.node(), wn = weights.node();

  return detail::make_op<T>(
      Shape{n, d}, std::move(out), std::move(parents),
      [map_nodes, pn, wn, n, heads, levels, k_pts, d, dh, hs, ws](TensorNode<T>& self) {
        const auto& pv = pn->value;
        const auto& wv = wn->value;
        const bool want_points = pn->requires_grad;
        const bool want_weights = wn->requires_grad;
        if (want_points) pn->ensure_grad();
        if (want_weights) wn->ensure_grad();
        for (auto& mn : map_nodes)
          if (mn->requires_grad) mn->ensure_grad();
        for (std::size_t q = 0; q < n; ++q) {
          for (std::size_t m = 0; m < heads; ++m) {
            const T* g = self.grad.data() + q * d + m * dh;
            for (std::size_t l = 0; l < levels; ++l) {
              auto& mn = *map_nodes[l];
              const std::size_t hw = hs[l] * ws[l];
              for (std::size_t k = 0; k < k_pts; ++k) {
                const std::size_t base = (((q * heads + m) * levels + l) * k_pts + k);
                const T w = wv[base];
                const auto fp = detail::bilinear_footprint(
                    static_cast<double>(pv[base * 2]),
                    static_cast<double>(pv[base * 2 + 1]), hs[l], ws[l]);
                double dw_acc = 0.0, gx = 0.0, gy = 0.0;
                for (int t = 0; t < fp.count; ++t) {
                  const auto& tap = fp.taps[t];
                  const T* src = mn.value.data() + m * dh * hw + tap.iy * ws[l] + tap.ix;
                  double dot = 0.0;
                  for (std::size_t c = 0; c < dh; ++c)
                    dot += static_cast<double>(g[c]) * static_cast<double>(src[c * hw]);
                  dw_acc += tap.w * dot;
                  gx += tap.dwdx * dot;
                  gy += tap.dwdy * dot;
                  if (mn.requires_grad) {
                    T* md = mn.grad.data() + m * dh * hw + tap.iy * ws[l] + tap.ix;
                    const T tw = w * static_cast<T>(tap.w);
                    for (std::size_t c = 0; c < dh; ++c) md[c * hw] += tw * g[c];
                  }
                }
                if (want_weights) wn->grad[base] += static_cast<T>(dw_acc);
                if (want_points) {
                  pn->grad[base * 2] += static_cast<T>(w * gx);
                  pn->grad[base * 2 + 1] += static_cast<T>(w * gy);
                }
              }
            }
          }
        }
      });
}

// Deformable attention block: per query the offsets and the L*K attention
// weights come from linear maps of the query; values are a shared linear
// projection of the level tokens; softmax normalizes each head's L*K slots.
template <typename T>
struct DeformableAttention {
  std::size_t dim = 0, heads = 0, levels = 0, points = 0;
  LinearLayer<T> value_proj, offset_head, weight_head, out_proj;

  DeformableAttention() = default;
  DeformableAttention(ParameterStore<T>& ps, const std::string& name, std::size_t dim_,
                      std::size_t heads_, std::size_t levels_, std::size_t points_,
                      RngState& rng)
      : dim(dim_), heads(heads_), levels(levels_), points(points_) {
    if (points == 0) throw ConfigError("deformable attention: points must be >= 1");
    if (heads == 0 || dim % heads != 0)
      throw ConfigError("deformable attention: heads (" + std::to_string(heads_) +
                        ") must divide dim (" + std::to_string(dim_) + ")");
    value_proj = LinearLayer<T>(ps, name + ".value", dim, dim, rng);
    out_proj = LinearLayer<T>(ps, name + ".out", dim, dim, rng);
    const std::size_t mlk = heads * levels * points;
    offset_head = LinearLayer<T>(ps, name + ".offset", dim, mlk * 2, rng);
    weight_head = LinearLayer<T>(ps, name + ".attn", dim, mlk, rng);
    // Zero offset weights with a per-head direction spread in the bias, and
    // zero attention logits (uniform weights after softmax) stabilize the
    // first epochs.
    for (auto& v : offset_head.w.mutable_data()) v = T(0);
    for (auto& v : weight_head.w.mutable_data()) v = T(0);
    auto& ob = offset_head.b.mutable_data();
    for (std::size_t m = 0; m < heads; ++m) {
      const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(m) /
                           static_cast<double>(heads);
      for (std::size_t l = 0; l < levels; ++l)
        for (std::size_t k = 0; k < points; ++k) {
          const double radius = static_cast<double>(k + 1);
          const std::size_t idx = ((m * levels + l) * points + k) * 2;
          ob[idx] = static_cast<T>(std::cos(angle) * radius);
          ob[idx + 1] = static_cast<T>(std::sin(angle) * radius);
        }
    }
  }

  // queries: [N x d]; refs: [N x 2] normalized reference points (a graph
  // tensor, so decoder reference points receive gradients); level_tokens[l]:
  // [H_l*W_l x d]; level_dims[l]: (H_l, W_l). Offsets are measured in cells
  // of the sampled level. `attn_out`, when given, receives the normalized
  // weights for inspection.
  Tensor<T> forward(const Tensor<T>& queries, const Tensor<T>& refs,
                    const std::vector<Tensor<T>>& level_tokens,
                    const std::vector<std::pair<std::size_t, std::size_t>>& level_dims,
                    Tensor<T>* attn_out = nullptr) const {
    if (level_tokens.size() != levels || level_dims.size() != levels)
      throw ShapeError("deformable attention: expected " + std::to_string(levels) +
                       " levels");
    const std::size_t n = queries.dim(0);
    const std::size_t mlk = heads * levels * points;

    Tensor<T> offsets = reshape(offset_head.forward(queries), {n * mlk, 2});
    // Per-level cell size so a unit offset moves one cell on that level.
    std::vector<T> scale_vals(n * mlk * 2);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t m = 0; m < heads; ++m)
        for (std::size_t l = 0; l < levels; ++l)
          for (std::size_t k = 0; k < points; ++k) {
            const std::size_t idx = (((q * heads + m) * levels + l) * points + k) * 2;
            scale_vals[idx] = T(1) / static_cast<T>(level_dims[l].second);
            scale_vals[idx + 1] = T(1) / static_cast<T>(level_dims[l].first);
          }
    Tensor<T> cell(Shape{n * mlk, 2}, std::move(scale_vals));
    Tensor<T> pts = add(mul(offsets, cell), repeat_interleave_rows(refs, mlk));
    pts = reshape(pts, {n, heads, levels, points, 2});

    Tensor<T> logits = reshape(weight_head.forward(queries), {n * heads, levels * points});
    Tensor<T> attn = reshape(softmax_lastdim(logits), {n, heads, levels, points});
    if (attn_out) *attn_out = attn;

    std::vector<Tensor<T>> value_maps;
    value_maps.reserve(levels);
    for (std::size_t l = 0; l < levels; ++l)
      value_maps.push_back(tokens_to_chw(value_proj.forward(level_tokens[l]),
                                         level_dims[l].first, level_dims[l].second));
    return out_proj.forward(deform_gather(value_maps, pts, attn, heads));
  }
};

}  // namespace wavefuse
