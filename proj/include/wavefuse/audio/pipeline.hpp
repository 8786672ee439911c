#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wavefuse/audio/fft.hpp"
#include "wavefuse/audio/wav.hpp"

namespace wavefuse {

inline constexpr int kClipSampleRate = 16000;
inline constexpr std::size_t kClipSamplesPerChannel = 16000;
inline constexpr std::size_t kClipLength = 32000;

enum class ClipLabel { kBackground = 0, kDrone = 1 };

inline std::string clip_label_name(ClipLabel l) {
  return l == ClipLabel::kDrone ? "drone" : "background";
}

inline ClipLabel parse_clip_label(const std::string& s) {
  if (s == "drone") return ClipLabel::kDrone;
  if (s == "background") return ClipLabel::kBackground;
  throw FormatError("unknown clip label: " + s);
}

// One-second model input: both channels concatenated to 32,000 points and
// standardized to zero mean, unit variance.
struct AudioClip {
  std::vector<float> values;  // exactly kClipLength
  std::optional<ClipLabel> label;
  std::string source_id;
  int segment_index = 0;
};

struct Spectrum {
  std::vector<double> freqs_hz;        // strictly increasing bin centers
  std::vector<double> mean_amplitude;  // nonnegative per-bin averages
  std::size_t n_samples = 0;
};

// Per-channel linear-interpolation resampling. Output length is
// round(len * target / source); equal rates return the input unchanged.
inline Waveform resample(const Waveform& w, int target_rate = kClipSampleRate) {
  if (target_rate <= 0) throw FormatError("resample: target rate must be positive");
  if (w.sample_rate <= 0 || w.frames() == 0 || w.channels.empty())
    throw FormatError("resample: empty input waveform");
  if (w.sample_rate == target_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(w.frames()) * ratio));
  Waveform out;
  out.sample_rate = target_rate;
  out.channels.reserve(w.channel_count());
  for (const auto& ch : w.channels) {
    std::vector<double> o(out_len);
    const std::size_t last = ch.size() - 1;
    for (std::size_t i = 0; i < out_len; ++i) {
      const double pos = static_cast<double>(i) / ratio;
      std::size_t i0 = static_cast<std::size_t>(pos);
      if (i0 > last) i0 = last;
      const std::size_t i1 = std::min(i0 + 1, last);
      const double f = pos - static_cast<double>(i0);
      o[i] = (1.0 - f) * ch[i0] + f * ch[i1];
    }
    out.channels.push_back(std::move(o));
  }
  return out;
}

// Extracts the 1-second window starting at `segment_index` seconds from a
// 16 kHz waveform, concatenates channel 0 then channel 1 (mono duplicated),
// and standardizes. A constant window maps to all zeros.
inline AudioClip make_clip(const Waveform& w, int segment_index = 0) {
  if (w.sample_rate != kClipSampleRate)
    throw FormatError("make_clip: waveform must be at 16 kHz, got " +
                      std::to_string(w.sample_rate));
  if (w.channels.empty()) throw FormatError("make_clip: empty waveform");
  if (segment_index < 0) throw FormatError("make_clip: negative segment index");

  const std::size_t start = static_cast<std::size_t>(segment_index) * kClipSamplesPerChannel;
  auto window = [&](const std::vector<double>& ch) {
    std::vector<double> out(kClipSamplesPerChannel, 0.0);
    for (std::size_t i = 0; i < kClipSamplesPerChannel; ++i)
      if (start + i < ch.size()) out[i] = ch[start + i];  // final short segment zero-padded
    return out;
  };

  std::vector<double> raw;
  raw.reserve(kClipLength);
  const auto ch0 = window(w.channels[0]);
  const auto ch1 = window(w.channels[w.channel_count() > 1 ? 1 : 0]);
  raw.insert(raw.end(), ch0.begin(), ch0.end());
  raw.insert(raw.end(), ch1.begin(), ch1.end());

  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= static_cast<double>(kClipLength);
  double var = 0.0;
  for (double v : raw) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(kClipLength);

  AudioClip clip;
  clip.segment_index = segment_index;
  clip.values.resize(kClipLength);
  if (var < 1e-8) {
    std::fill(clip.values.begin(), clip.values.end(), 0.0f);
  } else {
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < kClipLength; ++i)
      clip.values[i] = static_cast<float>((raw[i] - mean) * inv);
  }
  return clip;
}

// Average one-sided amplitude spectrum of a set of clips. Each clip holds
// two concatenated 16,000-point channels recorded at 16 kHz; the channels
// are transformed separately (a 32,000-point transform would not correspond
// to a physical signal) and their magnitude spectra averaged. Bins run from
// 0 to 8 kHz in exact 1 Hz steps.
inline Spectrum average_spectrum(const std::vector<AudioClip>& clips) {
  if (clips.empty()) throw ShapeError("average_spectrum: need at least one clip");
  for (const auto& c : clips)
    if (c.values.size() != kClipLength)
      throw ShapeError("average_spectrum: clip length " + std::to_string(c.values.size()) +
                       " != " + std::to_string(kClipLength));

  const std::size_t n = kClipSamplesPerChannel;
  const std::size_t bins = n / 2 + 1;
  Spectrum spec;
  spec.n_samples = clips.size();
  spec.freqs_hz.resize(bins);
  for (std::size_t k = 0; k < bins; ++k)
    spec.freqs_hz[k] = static_cast<double>(k) * kClipSampleRate / static_cast<double>(n);
  spec.mean_amplitude.assign(bins, 0.0);

  std::vector<double> half(n);
  for (const auto& clip : clips) {
    for (int ch = 0; ch < 2; ++ch) {
      for (std::size_t i = 0; i < n; ++i)
        half[i] = clip.values[static_cast<std::size_t>(ch) * n + i];
      const auto x = fft_real(half);
      for (std::size_t k = 0; k < bins; ++k) {
        const double scale = (k == 0 || k == n / 2) ? 1.0 : 2.0;
        spec.mean_amplitude[k] += scale * std::abs(x[k]) / static_cast<double>(n) / 2.0;
      }
    }
  }
  for (auto& a : spec.mean_amplitude) a /= static_cast<double>(clips.size());
  return spec;
}

inline std::string spectrum_to_csv(const Spectrum& s) {
  std::ostringstream os;
  os << "freq_hz,mean_amplitude\n";
  os.precision(12);
  for (std::size_t k = 0; k < s.freqs_hz.size(); ++k)
    os << s.freqs_hz[k] << "," << s.mean_amplitude[k] << "\n";
  return os.str();
}

}  // namespace wavefuse
