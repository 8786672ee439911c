#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "wavefuse/audio/encoder.hpp"
#include "wavefuse/audio/pipeline.hpp"
#include "wavefuse/audio/wav.hpp"
#include "wavefuse/gradcheck.hpp"
#include "wavefuse/oracles.hpp"

using namespace wavefuse;

namespace {

std::string pcm16_wav(const std::vector<std::int16_t>& samples, int rate, int channels) {
  Waveform w;
  w.sample_rate = rate;
  w.channels.resize(channels);
  for (std::size_t i = 0; i < samples.size(); i += channels)
    for (int c = 0; c < channels; ++c)
      w.channels[c].push_back(samples[i + c] / 32768.0);
  return encode_wav(w);
}

Waveform sine_wave(double freq_hz, int rate, double seconds, double amp = 0.5,
                   int channels = 2) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(rate * seconds);
  w.channels.assign(channels, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double v = amp * std::sin(2.0 * 3.14159265358979323846 * freq_hz * i / rate);
    for (auto& ch : w.channels) ch[i] = v;
  }
  return w;
}

std::size_t spectrum_argmax(const Spectrum& s) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < s.mean_amplitude.size(); ++k)
    if (s.mean_amplitude[k] > s.mean_amplitude[best]) best = k;
  return best;
}

}  // namespace

TEST_CASE("wav decode scale") {
  const auto bytes = pcm16_wav({16384, 0, -16384}, 16000, 1);
  const Waveform w = decode_wav(bytes);
  REQUIRE(w.sample_rate == 16000);
  REQUIRE(w.channels.size() == 1);
  REQUIRE(w.channels[0][0] == 0.5);
  REQUIRE(w.channels[0][1] == 0.0);
  REQUIRE(w.channels[0][2] == -0.5);
}

TEST_CASE("wav round trip is bit identical") {
  RngState rng(5);
  std::vector<std::int16_t> samples(2000);
  for (auto& s : samples)
    s = static_cast<std::int16_t>(static_cast<std::int64_t>(rng.uniform_int(65536)) - 32768);
  const auto bytes = pcm16_wav(samples, 44100, 2);
  REQUIRE(encode_wav(decode_wav(bytes)) == bytes);
}

TEST_CASE("wav rejects unsupported encodings naming the chunk") {
  auto bytes = pcm16_wav({0, 0}, 16000, 1);
  bytes[20] = 3;  // fmt format code -> IEEE float
  REQUIRE_THROWS_WITH(decode_wav(bytes), Catch::Matchers::ContainsSubstring("fmt "));
  REQUIRE_THROWS_AS(decode_wav(std::string("not a wav file")), FormatError);
}

TEST_CASE("resample") {
  SECTION("matching rates return identical samples") {
    const Waveform w = sine_wave(440, 16000, 0.5);
    const Waveform r = resample(w, 16000);
    REQUIRE(r.channels == w.channels);
  }
  SECTION("one second at 48 kHz becomes exactly 16000 samples") {
    const Waveform w = sine_wave(440, 48000, 1.0);
    const Waveform r = resample(w, 16000);
    REQUIRE(r.frames() == 16000);
    REQUIRE(r.sample_rate == 16000);
  }
  SECTION("440 Hz tone at 32 kHz keeps its peak within one bin") {
    const Waveform r = resample(sine_wave(440, 32000, 1.0), 16000);
    const AudioClip clip = make_clip(r, 0);
    const Spectrum s = average_spectrum({clip});
    const std::size_t peak = spectrum_argmax(s);
    REQUIRE(peak >= 439);
    REQUIRE(peak <= 441);
  }
  SECTION("empty input is a format error") {
    Waveform w;
    w.sample_rate = 16000;
    REQUIRE_THROWS_AS(resample(w, 8000), FormatError);
  }
}

TEST_CASE("make_clip") {
  SECTION("stereo second becomes a 32000-point standardized clip") {
    const Waveform w = sine_wave(700, 16000, 1.0);
    const AudioClip clip = make_clip(w, 0);
    REQUIRE(clip.values.size() == 32000);
  }
  SECTION("constant input maps to all zeros") {
    Waveform w;
    w.sample_rate = 16000;
    w.channels = {std::vector<double>(16000, 0.25)};
    const AudioClip clip = make_clip(w, 0);
    for (float v : clip.values) REQUIRE(v == 0.0f);
  }
  SECTION("mono input is duplicated into both halves") {
    Waveform w = sine_wave(300, 16000, 1.0, 0.5, 1);
    const AudioClip clip = make_clip(w, 0);
    for (std::size_t i = 0; i < 16000; ++i) REQUIRE(clip.values[i] == clip.values[16000 + i]);
  }
  SECTION("final short segment is zero padded") {
    Waveform w = sine_wave(300, 16000, 1.5);
    const AudioClip clip = make_clip(w, 1);  // only 8000 source samples remain
    REQUIRE(clip.values.size() == 32000);
  }
  SECTION("mean and variance contract over 1000 random clips") {
    RngState rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
      Waveform w;
      w.sample_rate = 16000;
      w.channels.assign(2, std::vector<double>(16000));
      const double amp = rng.uniform(0.01, 0.9);
      for (auto& ch : w.channels)
        for (auto& v : ch) v = rng.uniform(-amp, amp);
      const AudioClip clip = make_clip(w, 0);
      double mean = 0;
      for (float v : clip.values) mean += v;
      mean /= 32000.0;
      double var = 0;
      for (float v : clip.values) var += (v - mean) * (v - mean);
      var /= 32000.0;
      REQUIRE(std::abs(mean) <= 1e-6);
      REQUIRE(std::abs(var - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("fft agrees with the naive DFT oracle") {
  RngState rng(23);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 13u, 16u, 37u, 100u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    const auto fast = fft(x);
    const auto slow = oracles::naive_dft(x);
    for (std::size_t k = 0; k < n; ++k)
      REQUIRE(std::abs(fast[k] - slow[k]) <= 1e-8 * (1.0 + std::abs(slow[k])));
    // inverse round trip
    const auto back = fft(fast, true);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(back[k] - x[k]) <= 1e-9);
  }
}

TEST_CASE("Parseval: spectral energy equals time-domain energy per channel") {
  RngState rng(29);
  std::vector<double> x(16000);
  for (auto& v : x) v = rng.normal(0.0, 0.3);
  double time_energy = 0;
  for (double v : x) time_energy += v * v;
  const auto spec = fft_real(x);
  double freq_energy = 0;
  for (const auto& c : spec) freq_energy += std::norm(c);
  freq_energy /= static_cast<double>(x.size());
  REQUIRE(std::abs(freq_energy - time_energy) <= 1e-6 * time_energy);
}

TEST_CASE("average_spectrum") {
  SECTION("zero clips give a zero spectrum with 0..8 kHz bins") {
    AudioClip z;
    z.values.assign(32000, 0.0f);
    const Spectrum s = average_spectrum({z});
    REQUIRE(s.freqs_hz.front() == 0.0);
    REQUIRE(s.freqs_hz.back() == 8000.0);
    for (double a : s.mean_amplitude) REQUIRE(a == 0.0);
  }
  SECTION("1 kHz sine peaks at the 1 kHz bin") {
    const AudioClip clip = make_clip(sine_wave(1000, 16000, 1.0), 0);
    const Spectrum s = average_spectrum({clip});
    const std::size_t peak = spectrum_argmax(s);
    REQUIRE(peak >= 999);
    REQUIRE(peak <= 1001);
  }
  SECTION("averaging a clip with itself changes nothing") {
    const AudioClip clip = make_clip(sine_wave(750, 16000, 1.0), 0);
    const Spectrum one = average_spectrum({clip});
    const Spectrum three = average_spectrum({clip, clip, clip});
    REQUIRE(three.n_samples == 3);
    for (std::size_t k = 0; k < one.mean_amplitude.size(); ++k)
      REQUIRE(three.mean_amplitude[k] ==
              Catch::Approx(one.mean_amplitude[k]).margin(1e-12));
  }
  SECTION("mixed lengths are a shape error") {
    AudioClip a, b;
    a.values.assign(32000, 0.0f);
    b.values.assign(16000, 0.0f);
    REQUIRE_THROWS_AS(average_spectrum({a, b}), ShapeError);
  }
}

TEST_CASE("audio encoder frame arithmetic") {
  SECTION("default config yields 99 x 128") {
    ParameterStore<float> ps;
    RngState rng(31);
    AudioEncoder<float> enc(ps, "audio.encoder", AudioEncoderConfig{}, rng);
    AudioClip clip;
    clip.values.assign(32000, 0.1f);
    const auto emb = enc.forward(clip_to_tensor<float>(clip));
    REQUIRE(emb.frames.shape() == Shape{99, 128});
  }
  SECTION("zero input with zero biases gives a zero embedding") {
    ParameterStore<float> ps;
    RngState rng(33);
    AudioEncoderConfig cfg;
    cfg.kernels = {10, 3, 2};
    cfg.strides = {5, 2, 2};
    cfg.channels = {4, 6, 8};
    AudioEncoder<float> enc(ps, "audio.encoder", cfg, rng);
    AudioClip clip;
    clip.values.assign(32000, 0.0f);
    const auto emb = enc.forward(clip_to_tensor<float>(clip));
    for (float v : emb.frames.data()) REQUIRE(v == 0.0f);
  }
  SECTION("frame count formula matches the forward shapes over random configs") {
    RngState rng(37);
    for (int trial = 0; trial < 8; ++trial) {
      AudioEncoderConfig cfg;
      const std::size_t layers = 2 + rng.uniform_int(3);
      cfg.kernels.clear();
      cfg.strides.clear();
      cfg.channels.clear();
      for (std::size_t l = 0; l < layers; ++l) {
        cfg.kernels.push_back(2 + rng.uniform_int(9));
        cfg.strides.push_back(1 + rng.uniform_int(5));
        cfg.channels.push_back(2);
      }
      ParameterStore<float> ps;
      AudioEncoder<float> enc(ps, "audio.encoder", cfg, rng);
      AudioClip clip;
      clip.values.assign(32000, 0.05f);
      const auto emb = enc.forward(clip_to_tensor<float>(clip));
      REQUIRE(emb.frames.dim(0) == cfg.frame_count(32000));
      REQUIRE(emb.frames.dim(1) == cfg.channels.back());
    }
  }
  SECTION("receptive field larger than the input is a shape error") {
    AudioEncoderConfig cfg;
    cfg.kernels = {40000};
    cfg.strides = {1};
    cfg.channels = {2};
    REQUIRE_THROWS_AS(cfg.frame_count(32000), ShapeError);
  }
}

TEST_CASE("mean embedding gradient w.r.t. the clip matches finite differences") {
  // Small channel widths keep the 32,000-point finite-difference probes cheap;
  // the conv op itself is gradchecked exhaustively elsewhere.
  ParameterStore<double> ps;
  RngState rng(41);
  AudioEncoderConfig cfg;
  cfg.kernels = {10, 3, 2};
  cfg.strides = {5, 2, 2};
  cfg.channels = {3, 4, 4};
  AudioEncoder<double> enc(ps, "audio.encoder", cfg, rng);

  std::vector<double> vals(32000);
  for (auto& v : vals) v = rng.normal(0.0, 1.0);
  Tensor<double> clip({32000}, std::move(vals));
  clip.set_requires_grad(true);

  auto f = [&] { return mean_all(enc.forward(clip).frames); };
  clip.zero_grad();
  auto loss = f();
  loss.backward();
  const auto analytic = clip.grad();

  NoGradGuard ng;
  double max_err = 0.0;
  const double h = 1e-6;
  RngState pick(43);
  auto& data = clip.mutable_data();
  for (int probe = 0; probe < 25; ++probe) {
    const std::size_t i = pick.uniform_int(32000);
    const double orig = data[i];
    data[i] = orig + h;
    const double plus = f().item();
    data[i] = orig - h;
    const double minus = f().item();
    data[i] = orig;
    const double fd = (plus - minus) / (2 * h);
    max_err = std::max(max_err, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  REQUIRE(max_err <= 1e-4);
}

TEST_CASE("audio classifier") {
  ParameterStore<float> ps;
  RngState rng(47);
  AudioEncoderConfig cfg;
  cfg.kernels = {10, 3, 2};
  cfg.strides = {5, 2, 2};
  cfg.channels = {4, 4, 6};
  AudioClassifier<float> clf(ps, cfg, rng);

  AudioClip clip;
  clip.values.assign(32000, 0.0f);
  for (std::size_t i = 0; i < clip.values.size(); ++i)
    clip.values[i] = 0.3f * std::sin(0.01f * static_cast<float>(i));

  SECTION("zero head weights give (0.5, 0.5)") {
    for (auto& v : clf.head.w.mutable_data()) v = 0.0f;
    for (auto& v : clf.head.b.mutable_data()) v = 0.0f;
    const auto [p_drone, p_bg] = clf.classify(clip);
    REQUIRE(p_drone == Catch::Approx(0.5));
    REQUIRE(p_bg == Catch::Approx(0.5));
  }
  SECTION("logits (10, -10) give near-certain drone") {
    for (auto& v : clf.head.w.mutable_data()) v = 0.0f;
    clf.head.b.mutable_data() = {10.0f, -10.0f};
    const auto [p_drone, p_bg] = clf.classify(clip);
    REQUIRE(p_drone >= 0.9999);
  }
  SECTION("probabilities sum to one within 1e-9") {
    const auto [p_drone, p_bg] = clf.classify(clip);
    REQUIRE(std::abs(p_drone + p_bg - 1.0) <= 1e-9);
  }
  SECTION("missing weights are a state error") {
    AudioClassifier<float> empty;
    REQUIRE_THROWS_AS(empty.classify(clip), StateError);
  }
}
