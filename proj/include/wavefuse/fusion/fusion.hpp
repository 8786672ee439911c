#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wavefuse/audio/encoder.hpp"
#include "wavefuse/nn.hpp"
#include "wavefuse/pyramid.hpp"
#include "wavefuse/testhooks.hpp"

namespace wavefuse {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class FusionMode { kLinear, kMlp, kGated, kXattn };

inline FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "linear") return FusionMode::kLinear;
  if (name == "mlp") return FusionMode::kMlp;
  if (name == "gated") return FusionMode::kGated;
  if (name == "xattn") return FusionMode::kXattn;
  throw ConfigError("unknown fusion mode: " + name + " (expected linear|mlp|gated|xattn)");
}

inline std::string fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::kLinear:
      return "linear";
    case FusionMode::kMlp:
      return "mlp";
    case FusionMode::kGated:
      return "gated";
    case FusionMode::kXattn:
      return "xattn";
  }
  return "?";
}

struct FusionConfig {
  FusionMode mode = FusionMode::kGated;
  double dropout_rate = 0.0;
  bool per_level_weights = true;
  std::size_t heads = 1;  // xattn only

  void validate() const {
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("fusion: dropout_rate must lie in [0, 1)");
    if (heads == 0) throw ConfigError("fusion: heads must be positive");
  }
};

// ---------------------------------------------------------------------------
// Audio-to-level alignment
// ---------------------------------------------------------------------------

// Reshapes [T_a x D_a] frames so the last dimension matches the RGB width d
// (D_a must be a multiple of d, or a learned projection must be supplied),
// then linearly interpolates the sequence to `target_len` rows.
template <typename T>
Tensor<T> align_audio(const Tensor<T>& frames, std::size_t d, std::size_t target_len,
                      const LinearLayer<T>* projection = nullptr) {
  if (frames.ndim() != 2) throw ShapeError("align_audio: expected [T_a x D_a] frames");
  const std::size_t t_a = frames.dim(0), d_a = frames.dim(1);
  Tensor<T> rows;
  if (d_a % d == 0) {
    rows = reshape(frames, {t_a * (d_a / d), d});
  } else if (projection != nullptr) {
    rows = projection->forward(frames);
  } else {
    throw ConfigError("align_audio: audio dim " + std::to_string(d_a) +
                      " is not divisible by feature width " + std::to_string(d) +
                      " and no projection is enabled");
  }
  return interp_linear_1d(rows, target_len);
}

// ---------------------------------------------------------------------------
// Per-level fusion parameters
// ---------------------------------------------------------------------------

template <typename T>
struct FusionLayerParams {
  FusionMode mode = FusionMode::kGated;
  std::size_t heads = 1;
  LinearLayer<T> fuse;                      // 2d -> d (linear / mlp / gated)
  LinearLayer<T> wq, wk, wv;                // xattn projections
  std::optional<LinearLayer<T>> audio_proj; // D_a -> d when D_a % d != 0

  FusionLayerParams() = default;
  FusionLayerParams(ParameterStore<T>& ps, const std::string& name, FusionMode mode_,
                    std::size_t d, std::size_t d_a, std::size_t heads_, RngState& rng)
      : mode(mode_), heads(heads_) {
    if (mode == FusionMode::kXattn) {
      if (d % heads != 0)
        throw ConfigError("fusion: heads (" + std::to_string(heads) +
                          ") must divide feature width (" + std::to_string(d) + ")");
      wq = LinearLayer<T>(ps, name + ".q", d, d, rng);
      wk = LinearLayer<T>(ps, name + ".k", d_a, d, rng);
      wv = LinearLayer<T>(ps, name + ".v", d_a, d, rng);
    } else {
      fuse = LinearLayer<T>(ps, name + ".fuse", 2 * d, d, rng);
      if (d_a % d != 0)
        audio_proj = LinearLayer<T>(ps, name + ".audio_proj", d_a, d, rng);
    }
  }
};

// ---------------------------------------------------------------------------
// The four fusion layers (RGB tokens come first in every concatenation)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> fuse_linear(const Tensor<T>& rgb_tokens, const Tensor<T>& audio_tokens,
                      const FusionLayerParams<T>& params, const FusionConfig& cfg,
                      DropoutMode mode, RngState& rng) {
  detail::check_same_shape(rgb_tokens, audio_tokens, "fuse_linear");
  Tensor<T> merged = params.fuse.forward(concat_lastdim(rgb_tokens, audio_tokens));
  return dropout(merged, cfg.dropout_rate, mode, rng);
}

template <typename T>
Tensor<T> fuse_mlp(const Tensor<T>& rgb_tokens, const Tensor<T>& audio_tokens,
                   const FusionLayerParams<T>& params, const FusionConfig& cfg,
                   DropoutMode mode, RngState& rng) {
  Tensor<T> x = fuse_linear(rgb_tokens, audio_tokens, params, cfg, mode, rng);
  return dropout(relu(x), cfg.dropout_rate, mode, rng);
}

// g = sigmoid(dropout(linear([rgb | audio]))), out = g*rgb + (1-g)*audio.
// Dropout acts on the gate logits.
template <typename T>
Tensor<T> fuse_gated(const Tensor<T>& rgb_tokens, const Tensor<T>& audio_tokens,
                     const FusionLayerParams<T>& params, const FusionConfig& cfg,
                     DropoutMode mode, RngState& rng) {
  detail::check_same_shape(rgb_tokens, audio_tokens, "fuse_gated");
  Tensor<T> logits = params.fuse.forward(concat_lastdim(rgb_tokens, audio_tokens));
  Tensor<T> gate = sigmoid(dropout(logits, cfg.dropout_rate, mode, rng));
  gate = testhooks::mutate_grad_sign(gate, "gate_grad_sign");
  Tensor<T> ones(gate.shape(), T(1));
  return add(mul(gate, rgb_tokens), mul(sub(ones, gate), audio_tokens));
}

// Scaled dot-product cross-attention: RGB tokens are the queries, raw audio
// frames supply keys and values, output is a residual update of the RGB
// tokens. No alignment of sequence lengths is needed.
template <typename T>
Tensor<T> fuse_xattn(const Tensor<T>& rgb_tokens, const Tensor<T>& audio_frames,
                     const FusionLayerParams<T>& params, const FusionConfig& cfg,
                     DropoutMode mode, RngState& rng) {
  if (rgb_tokens.ndim() != 2 || audio_frames.ndim() != 2)
    throw ShapeError("fuse_xattn: expected [N x d] tokens and [T_a x D_a] frames");
  const std::size_t d = rgb_tokens.dim(1);
  const std::size_t dh = d / params.heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<T> q = params.wq.forward(rgb_tokens);
  Tensor<T> k = params.wk.forward(audio_frames);
  Tensor<T> v = params.wv.forward(audio_frames);
  Tensor<T> merged;
  for (std::size_t h = 0; h < params.heads; ++h) {
    Tensor<T> qh = slice_lastdim(q, h * dh, (h + 1) * dh);
    Tensor<T> kh = slice_lastdim(k, h * dh, (h + 1) * dh);
    Tensor<T> vh = slice_lastdim(v, h * dh, (h + 1) * dh);
    Tensor<T> attn = softmax_lastdim(scale(matmul(qh, transpose2d(kh)), inv_sqrt));
    Tensor<T> out_h = matmul(attn, vh);
    merged = h == 0 ? out_h : concat_lastdim(merged, out_h);
  }
  return add(rgb_tokens, dropout(merged, cfg.dropout_rate, mode, rng));
}

// ---------------------------------------------------------------------------
// Whole-pyramid fusion
// ---------------------------------------------------------------------------

template <typename T>
struct FusionModule {
  FusionConfig cfg;
  std::vector<FusionLayerParams<T>> levels;  // one entry when weights are shared

  FusionModule() = default;
  FusionModule(ParameterStore<T>& ps, const FusionConfig& cfg_, std::size_t d,
               std::size_t d_a, std::size_t level_count, RngState& rng)
      : cfg(cfg_) {
    cfg.validate();
    const std::size_t n = cfg.per_level_weights ? level_count : 1;
    for (std::size_t l = 0; l < n; ++l) {
      const std::string name =
          cfg.per_level_weights ? "fusion.level" + std::to_string(l) : "fusion.shared";
      levels.emplace_back(ps, name, cfg.mode, d, d_a, cfg.heads, rng);
    }
  }

  const FusionLayerParams<T>& params_for(std::size_t level) const {
    return levels[cfg.per_level_weights ? level : 0];
  }

  // Flattens each level to tokens, applies the configured fusion layer and
  // reshapes back; output extents equal the input extents at every level.
  FusedPyramid<T> fuse_pyramid(const FeaturePyramid<T>& p, const Tensor<T>& audio_frames,
                               DropoutMode mode, RngState& rng) const {
    p.validate();
    FusedPyramid<T> out;
    out.strides = p.strides;
    out.d = p.d;
    for (std::size_t l = 0; l < p.levels.size(); ++l) {
      const std::size_t h = p.levels[l].dim(1), w = p.levels[l].dim(2);
      Tensor<T> rgb = chw_to_tokens(p.levels[l]);
      const auto& params = params_for(l);
      Tensor<T> fused;
      switch (cfg.mode) {
        case FusionMode::kLinear: {
          Tensor<T> audio =
              align_audio(audio_frames, p.d, h * w,
                          params.audio_proj ? &*params.audio_proj : nullptr);
          fused = fuse_linear(rgb, audio, params, cfg, mode, rng);
          break;
        }
        case FusionMode::kMlp: {
          Tensor<T> audio =
              align_audio(audio_frames, p.d, h * w,
                          params.audio_proj ? &*params.audio_proj : nullptr);
          fused = fuse_mlp(rgb, audio, params, cfg, mode, rng);
          break;
        }
        case FusionMode::kGated: {
          Tensor<T> audio =
              align_audio(audio_frames, p.d, h * w,
                          params.audio_proj ? &*params.audio_proj : nullptr);
          fused = fuse_gated(rgb, audio, params, cfg, mode, rng);
          break;
        }
        case FusionMode::kXattn:
          fused = fuse_xattn(rgb, audio_frames, params, cfg, mode, rng);
          break;
      }
      out.levels.push_back(tokens_to_chw(fused, h, w));
    }
    return out;
  }
};

}  // namespace wavefuse
