#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wavefuse/audio/pipeline.hpp"
#include "wavefuse/nn.hpp"

namespace wavefuse {

// Strided conv stack shaped like the wav2vec2 feature encoder: total stride
// 320, so a 32,000-point clip becomes 99 frames. Channel widths taper up to
// the embedding dim to keep desk-scale training cheap.
struct AudioEncoderConfig {
  std::vector<std::size_t> kernels = {10, 3, 3, 3, 3, 2, 2};
  std::vector<std::size_t> strides = {5, 2, 2, 2, 2, 2, 2};
  std::vector<std::size_t> channels = {32, 48, 64, 64, 96, 128, 128};

  std::size_t embed_dim() const { return channels.back(); }

  void validate() const {
    if (kernels.empty() || kernels.size() != strides.size() ||
        kernels.size() != channels.size())
      throw ConfigError("audio encoder: kernels/strides/channels must be nonempty and equal length");
    for (auto k : kernels)
      if (k == 0) throw ConfigError("audio encoder: zero kernel width");
    for (auto s : strides)
      if (s == 0) throw ConfigError("audio encoder: zero stride");
    for (auto c : channels)
      if (c == 0) throw ConfigError("audio encoder: zero channel width");
  }

  std::size_t frame_count(std::size_t input_len) const {
    std::size_t t = input_len;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      if (t < kernels[i])
        throw ShapeError("audio encoder: receptive field exceeds input at layer " +
                         std::to_string(i));
      t = (t - kernels[i]) / strides[i] + 1;
    }
    return t;
  }
};

// [T_a x D_a] frame sequence produced by the encoder.
template <typename T>
struct AudioEmbedding {
  Tensor<T> frames;
  double frame_rate = 0.0;
};

template <typename T>
struct AudioEncoder {
  AudioEncoderConfig cfg;
  std::vector<Conv1dLayer<T>> convs;

  AudioEncoder() = default;
  AudioEncoder(ParameterStore<T>& ps, const std::string& name, AudioEncoderConfig cfg_,
               RngState& rng)
      : cfg(std::move(cfg_)) {
    cfg.validate();
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
      convs.emplace_back(ps, name + ".conv" + std::to_string(i), cin, cfg.channels[i],
                         cfg.kernels[i], cfg.strides[i], 0, rng, ParamGroup::kBackbone);
      cin = cfg.channels[i];
    }
  }

  bool valid() const { return !convs.empty() && convs.front().w.defined(); }

  AudioEmbedding<T> forward(const Tensor<T>& clip) const {
    if (!valid()) throw StateError("audio encoder: weights not initialized");
    if (clip.size() != kClipLength)
      throw ShapeError("audio encoder: expected a " + std::to_string(kClipLength) +
                       "-point clip, got " + std::to_string(clip.size()));
    cfg.frame_count(kClipLength);  // rejects configs whose receptive field exceeds input
    Tensor<T> x = reshape(clip, {1, clip.size()});
    for (const auto& conv : convs) x = relu(conv.forward(x));
    // [D_a, T_a] -> [T_a, D_a]
    Tensor<T> frames = transpose2d(x);
    AudioEmbedding<T> emb;
    emb.frames = frames;
    emb.frame_rate = static_cast<double>(frames.dim(0));  // frames per 1 s clip
    return emb;
  }
};

template <typename T>
Tensor<T> clip_to_tensor(const AudioClip& clip) {
  std::vector<T> v(clip.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(clip.values[i]);
  return Tensor<T>(Shape{clip.values.size()}, std::move(v));
}

// Binary drone/background head: mean-pool over frames, then linear+softmax.
// Class order is (drone, background).
template <typename T>
struct AudioClassifier {
  AudioEncoder<T> encoder;
  LinearLayer<T> head;

  AudioClassifier() = default;
  AudioClassifier(ParameterStore<T>& ps, AudioEncoderConfig cfg, RngState& rng) {
    encoder = AudioEncoder<T>(ps, "audio.encoder", std::move(cfg), rng);
    head = LinearLayer<T>(ps, "audio.head", encoder.cfg.embed_dim(), 2, rng,
                          ParamGroup::kHead);
  }

  bool valid() const { return encoder.valid() && head.w.defined(); }

  Tensor<T> logits_from_embedding(const AudioEmbedding<T>& emb) const {
    if (!head.w.defined()) throw StateError("audio classifier: head weights missing");
    Tensor<T> pooled = mean_rows(emb.frames);
    return head.forward(reshape(pooled, {1, pooled.size()}));
  }

  // (p_drone, p_background), summing to 1. The two-class softmax is taken in
  // double so the sum contract holds regardless of the model precision.
  std::pair<double, double> classify_from_embedding(const AudioEmbedding<T>& emb) const {
    NoGradGuard ng;
    Tensor<T> logits = logits_from_embedding(emb);
    const double l0 = static_cast<double>(logits.data()[0]);
    const double l1 = static_cast<double>(logits.data()[1]);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  std::pair<double, double> classify(const AudioClip& clip) const {
    NoGradGuard ng;
    return classify_from_embedding(encoder.forward(clip_to_tensor<T>(clip)));
  }
};

}  // namespace wavefuse
