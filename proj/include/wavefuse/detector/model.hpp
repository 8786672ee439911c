#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wavefuse/audio/encoder.hpp"
#include "wavefuse/detector/deformable.hpp"
#include "wavefuse/detector/matcher.hpp"
#include "wavefuse/fusion/fusion.hpp"
#include "wavefuse/pyramid.hpp"

namespace wavefuse {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DetectorConfig {
  std::size_t d = 64;
  std::size_t levels = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t queries = 20;
  std::size_t heads = 4;
  std::size_t points = 4;
  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  std::optional<FusionConfig> fusion;

  bool fused() const { return fusion.has_value(); }

  void validate() const {
    if (d == 0 || d % 4 != 0)
      throw ConfigError("detector: d must be a positive multiple of 4 (sine encodings)");
    if (heads == 0 || d % heads != 0) throw ConfigError("detector: heads must divide d");
    if (levels < 1 || levels > 4) throw ConfigError("detector: levels must be in [1, 4]");
    if (queries == 0) throw ConfigError("detector: queries must be >= 1");
    if (points == 0) throw ConfigError("detector: points must be >= 1");
    if (encoder_layers == 0 || decoder_layers == 0)
      throw ConfigError("detector: need at least one encoder and one decoder layer");
    if (lambda_cls < 0 || lambda_l1 < 0 || lambda_giou < 0)
      throw ConfigError("detector: lambda weights must be nonnegative");
    if (fusion) fusion->validate();
  }
};

// ---------------------------------------------------------------------------
// Visual backbone: six stride-2 convs; taps at strides {8, 16, 32, 64} are
// projected to width d by 1x1 convs.
// ---------------------------------------------------------------------------

template <typename T>
struct Backbone {
  std::vector<Conv2dLayer<T>> stem;
  std::vector<Conv2dLayer<T>> proj;
  std::size_t d = 0, levels = 0;

  Backbone() = default;
  Backbone(ParameterStore<T>& ps, std::size_t d_, std::size_t levels_, RngState& rng)
      : d(d_), levels(levels_) {
    const std::size_t widths[] = {16, 32, 48, 64, 80, 96};
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 6; ++i) {
      stem.emplace_back(ps, "backbone.conv" + std::to_string(i), cin, widths[i], 3, 2, 1,
                        rng, ParamGroup::kBackbone);
      cin = widths[i];
    }
    for (std::size_t l = 0; l < levels; ++l)
      proj.emplace_back(ps, "backbone.proj" + std::to_string(l), widths[2 + l], d, 1, 1, 0,
                        rng, ParamGroup::kHead);
  }

  FeaturePyramid<T> forward(const Tensor<T>& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3)
      throw ShapeError("backbone: expected [3 x H x W] image, got " +
                       shape_str(image.shape()));
    if (image.dim(1) % 64 != 0 || image.dim(2) % 64 != 0)
      throw ShapeError("backbone: image extents must be divisible by 64, got " +
                       shape_str(image.shape()));
    FeaturePyramid<T> pyr;
    pyr.d = d;
    Tensor<T> x = image;
    for (std::size_t i = 0; i < stem.size(); ++i) {
      x = relu(stem[i].forward(x));
      const std::size_t stage = i >= 2 ? i - 2 : 0;
      if (i >= 2 && stage < levels) {
        pyr.levels.push_back(proj[stage].forward(x));
        pyr.strides.push_back(std::size_t(8) << stage);
      }
    }
    pyr.validate();
    return pyr;
  }
};

// ---------------------------------------------------------------------------
// Positional encodings
// ---------------------------------------------------------------------------

namespace detail {

// Sine/cosine 2-D embedding over token centers, d/2 channels per axis.
template <typename T>
Tensor<T> sine_position_tokens(std::size_t h, std::size_t w, std::size_t d) {
  const std::size_t half = d / 2;
  const std::size_t quarter = half / 2;
  std::vector<T> out(h * w * d);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) / static_cast<double>(w) * 2.0 * kPi;
      const double cy = (static_cast<double>(y) + 0.5) / static_cast<double>(h) * 2.0 * kPi;
      T* row = out.data() + (y * w + x) * d;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double t = std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                               static_cast<double>(half));
        row[2 * i] = static_cast<T>(std::sin(cx / t));
        row[2 * i + 1] = static_cast<T>(std::cos(cx / t));
        row[half + 2 * i] = static_cast<T>(std::sin(cy / t));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(cy / t));
      }
    }
  }
  return Tensor<T>(Shape{h * w, d}, std::move(out));
}

// Normalized token-center reference points for one level.
template <typename T>
std::vector<T> token_centers(std::size_t h, std::size_t w) {
  std::vector<T> refs(h * w * 2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      refs[(y * w + x) * 2] = static_cast<T>((x + 0.5) / static_cast<double>(w));
      refs[(y * w + x) * 2 + 1] = static_cast<T>((y + 0.5) / static_cast<double>(h));
    }
  return refs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Transformer layers
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderLayer {
  DeformableAttention<T> attn;
  LayerNormLayer<T> norm1, norm2;
  LinearLayer<T> ffn1, ffn2;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore<T>& ps, const std::string& name, const DetectorConfig& cfg,
               RngState& rng) {
    attn = DeformableAttention<T>(ps, name + ".attn", cfg.d, cfg.heads, cfg.levels,
                                  cfg.points, rng);
    norm1 = LayerNormLayer<T>(ps, name + ".norm1", cfg.d);
    norm2 = LayerNormLayer<T>(ps, name + ".norm2", cfg.d);
    ffn1 = LinearLayer<T>(ps, name + ".ffn1", cfg.d, 2 * cfg.d, rng);
    ffn2 = LinearLayer<T>(ps, name + ".ffn2", 2 * cfg.d, cfg.d, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& refs,
                    const std::vector<std::pair<std::size_t, std::size_t>>& level_dims,
                    const std::vector<std::pair<std::size_t, std::size_t>>& spans) const {
    std::vector<Tensor<T>> level_tokens;
    for (const auto& [from, to] : spans) level_tokens.push_back(slice_rows(x, from, to));
    Tensor<T> a = attn.forward(x, refs, level_tokens, level_dims);
    Tensor<T> y = norm1.forward(add(x, a));
    Tensor<T> f = ffn2.forward(relu(ffn1.forward(y)));
    return norm2.forward(add(y, f));
  }
};

template <typename T>
struct DecoderLayer {
  MultiHeadAttention<T> self_attn;
  DeformableAttention<T> cross_attn;
  LayerNormLayer<T> norm1, norm2, norm3;
  LinearLayer<T> ffn1, ffn2;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore<T>& ps, const std::string& name, const DetectorConfig& cfg,
               RngState& rng) {
    self_attn = MultiHeadAttention<T>(ps, name + ".self", cfg.d, cfg.d, cfg.heads, rng);
    cross_attn = DeformableAttention<T>(ps, name + ".cross", cfg.d, cfg.heads, cfg.levels,
                                        cfg.points, rng);
    norm1 = LayerNormLayer<T>(ps, name + ".norm1", cfg.d);
    norm2 = LayerNormLayer<T>(ps, name + ".norm2", cfg.d);
    norm3 = LayerNormLayer<T>(ps, name + ".norm3", cfg.d);
    ffn1 = LinearLayer<T>(ps, name + ".ffn1", cfg.d, 2 * cfg.d, rng);
    ffn2 = LinearLayer<T>(ps, name + ".ffn2", 2 * cfg.d, cfg.d, rng);
  }

  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& q_refs, const Tensor<T>& memory,
                    const std::vector<std::pair<std::size_t, std::size_t>>& level_dims,
                    const std::vector<std::pair<std::size_t, std::size_t>>& spans) const {
    Tensor<T> s = self_attn.forward(q, q);
    Tensor<T> y = norm1.forward(add(q, s));
    std::vector<Tensor<T>> level_tokens;
    for (const auto& [from, to] : spans) level_tokens.push_back(slice_rows(memory, from, to));
    Tensor<T> c = cross_attn.forward(y, q_refs, level_tokens, level_dims);
    y = norm2.forward(add(y, c));
    Tensor<T> f = ffn2.forward(relu(ffn1.forward(y)));
    return norm3.forward(add(y, f));
  }
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename T>
struct DetrOutput {
  Tensor<T> class_logits;  // [N_q x 2], classes (drone, no-object)
  Tensor<T> boxes;         // [N_q x 4], (cx, cy, w, h) in (0,1)

  DetectionSet detections() const {
    DetectionSet out;
    const std::size_t n = class_logits.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
      const double l0 = static_cast<double>(class_logits.data()[i * 2]);
      const double l1 = static_cast<double>(class_logits.data()[i * 2 + 1]);
      const double m = std::max(l0, l1);
      const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      out.drone_prob.push_back(e0 / (e0 + e1));
      out.boxes.push_back({static_cast<double>(boxes.data()[i * 4]),
                           static_cast<double>(boxes.data()[i * 4 + 1]),
                           static_cast<double>(boxes.data()[i * 4 + 2]),
                           static_cast<double>(boxes.data()[i * 4 + 3])});
    }
    return out;
  }
};

template <typename T>
class DetrModel {
 public:
  DetectorConfig cfg;
  AudioEncoderConfig audio_cfg;
  ParameterStore<T> params;

  DetrModel(DetectorConfig cfg_, AudioEncoderConfig audio_cfg_, std::uint64_t init_seed)
      : cfg(std::move(cfg_)), audio_cfg(std::move(audio_cfg_)) {
    cfg.validate();
    RngState rng(derive_seed(init_seed, "model-init"));
    backbone_ = Backbone<T>(params, cfg.d, cfg.levels, rng);
    if (cfg.fused()) {
      audio_encoder_ = AudioEncoder<T>(params, "audio.encoder", audio_cfg, rng);
      fusion_ = FusionModule<T>(params, *cfg.fusion, cfg.d, audio_cfg.embed_dim(),
                                cfg.levels, rng);
    }
    for (std::size_t l = 0; l < cfg.levels; ++l)
      level_norms_.emplace_back(params, "neck.norm" + std::to_string(l), cfg.d);
    level_embed_ = params.add("neck.level_embed", {cfg.levels, cfg.d}, ParamGroup::kHead,
                              init::normal<T>(rng, 0.02));
    for (std::size_t e = 0; e < cfg.encoder_layers; ++e)
      enc_layers_.emplace_back(params, "encoder.layer" + std::to_string(e), cfg, rng);
    for (std::size_t dl = 0; dl < cfg.decoder_layers; ++dl)
      dec_layers_.emplace_back(params, "decoder.layer" + std::to_string(dl), cfg, rng);
    query_embed_ = params.add("decoder.query_embed", {cfg.queries, cfg.d},
                              ParamGroup::kHead, init::normal<T>(rng, 0.5));
    ref_head_ = LinearLayer<T>(params, "decoder.ref_head", cfg.d, 2, rng);
    class_head_ = LinearLayer<T>(params, "heads.class", cfg.d, 2, rng);
    box_head_ = MlpLayer<T>(params, "heads.box", {cfg.d, cfg.d, cfg.d, 4}, rng);
  }

  bool fused() const { return cfg.fused(); }
  const FusionModule<T>& fusion() const { return *fusion_; }
  FusionModule<T>& fusion() { return *fusion_; }
  const AudioEncoder<T>& audio_encoder() const { return *audio_encoder_; }
  const Backbone<T>& backbone() const { return backbone_; }

  FeaturePyramid<T> backbone_forward(const Tensor<T>& image) const {
    return backbone_.forward(image);
  }

  // clip may be null for rgb-only models; fused models require it.
  DetrOutput<T> forward(const Tensor<T>& image, const Tensor<T>* clip, DropoutMode mode,
                        RngState& rng) const {
    FeaturePyramid<T> pyr = backbone_.forward(image);
    if (cfg.fused()) {
      if (clip == nullptr) throw StateError("fused model requires an audio clip");
      AudioEmbedding<T> emb = audio_encoder_->forward(*clip);
      pyr = fusion_->fuse_pyramid(pyr, emb.frames, mode, rng);
    }

    std::vector<std::pair<std::size_t, std::size_t>> level_dims, spans;
    std::vector<T> ref_vals;
    Tensor<T> x;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
      const std::size_t h = pyr.levels[l].dim(1), w = pyr.levels[l].dim(2);
      level_dims.emplace_back(h, w);
      Tensor<T> t = level_norms_[l].forward(chw_to_tokens(pyr.levels[l]));
      t = add(t, detail::sine_position_tokens<T>(h, w, cfg.d));
      t = add_rowvec(t, reshape(slice_rows(level_embed_, l, l + 1), {cfg.d}));
      x = l == 0 ? t : concat_rows(x, t);
      spans.emplace_back(offset, offset + h * w);
      offset += h * w;
      const auto centers = detail::token_centers<T>(h, w);
      ref_vals.insert(ref_vals.end(), centers.begin(), centers.end());
    }
    Tensor<T> refs(Shape{offset, 2}, std::move(ref_vals));

    for (const auto& layer : enc_layers_) x = layer.forward(x, refs, level_dims, spans);

    Tensor<T> q = query_embed_;
    Tensor<T> q_refs = sigmoid(ref_head_.forward(query_embed_));
    for (const auto& layer : dec_layers_)
      q = layer.forward(q, q_refs, x, level_dims, spans);

    DetrOutput<T> out;
    out.class_logits = class_head_.forward(q);
    out.boxes = sigmoid(box_head_.forward(q));
    return out;
  }

  // Hungarian matching on the detached outputs, then the set loss; gradients
  // flow through the loss only.
  Tensor<T> loss(const DetrOutput<T>& out, const std::vector<BoundingBox>& gts) const {
    MatchResult match;
    if (!gts.empty()) {
      const DetectionSet det = out.detections();
      match = hungarian(match_cost(det, gts, {cfg.lambda_cls, cfg.lambda_l1, cfg.lambda_giou}));
    } else {
      for (std::size_t i = 0; i < cfg.queries; ++i) match.unmatched_predictions.push_back(i);
    }
    SetLossWeights w;
    w.l1 = cfg.lambda_l1;
    w.giou = cfg.lambda_giou;
    return set_loss(out.class_logits, out.boxes, gts, match, w);
  }

 private:
  Backbone<T> backbone_;
  std::optional<AudioEncoder<T>> audio_encoder_;
  std::optional<FusionModule<T>> fusion_;
  std::vector<LayerNormLayer<T>> level_norms_;
  Tensor<T> level_embed_;
  std::vector<EncoderLayer<T>> enc_layers_;
  std::vector<DecoderLayer<T>> dec_layers_;
  Tensor<T> query_embed_;
  LinearLayer<T> ref_head_;
  LinearLayer<T> class_head_;
  MlpLayer<T> box_head_;
};

}  // namespace wavefuse
