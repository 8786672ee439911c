#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "wavefuse/audio/pipeline.hpp"
#include "wavefuse/data/coco.hpp"
#include "wavefuse/data/png.hpp"
#include "wavefuse/data/splits.hpp"

namespace wavefuse {

// ---------------------------------------------------------------------------
// Generator configuration
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t image_size = 128;  // divisible by 64
  double fps = 60.0;
  // probabilities for 0, 1, 2 glyphs of each kind per scene
  std::array<double, 3> drone_count_probs = {0.35, 0.45, 0.20};
  std::array<double, 3> distractor_count_probs = {0.35, 0.45, 0.20};
  // small / medium / large ground-truth bucket mix
  std::array<double, 3> bucket_probs = {0.55, 0.30, 0.15};
  double hum_min_hz = 600.0;
  double hum_max_hz = 1800.0;
  double noise_level = 0.05;

  void validate() const {
    if (image_size == 0 || image_size % 64 != 0)
      throw ConfigError("synth: image_size must be a positive multiple of 64");
    if (hum_min_hz <= 0 || hum_max_hz <= hum_min_hz)
      throw ConfigError("synth: hum band must satisfy 0 < min < max");
    if (noise_level <= 0 || noise_level > 0.3)
      throw ConfigError("synth: noise_level must lie in (0, 0.3]");
    // Largest drone must fit: the large bucket starts at 96x96.
    if (static_cast<double>(image_size) * 0.85 < 96.0 && bucket_probs[2] > 0)
      throw ConfigError("synth: image too small for large-bucket drones (96px)");
    auto check_probs = [](const std::array<double, 3>& p, const char* what) {
      double s = 0;
      for (double v : p) {
        if (v < 0) throw ConfigError(std::string("synth: negative probability in ") + what);
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError(std::string("synth: probabilities must sum to 1 in ") + what);
    };
    check_probs(drone_count_probs, "drone_count_probs");
    check_probs(distractor_count_probs, "distractor_count_probs");
    check_probs(bucket_probs, "bucket_probs");
  }
};

struct SynthScene {
  ImageU8 image;
  Waveform audio;  // stereo, 16 kHz, 1 s
  std::vector<CocoAnnotation> annotations;  // drone boxes only
  std::vector<std::string> tags;
  bool has_drone = false;
  double min_drone_distance_m = 0.0;
};

// ---------------------------------------------------------------------------
// Drawing helpers
// ---------------------------------------------------------------------------

namespace detail {

inline double dist_point_segment(double px, double py, double ax, double ay, double bx,
                                 double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Shape tests in glyph-local coordinates u, v in [-0.5, 0.5].
inline bool inside_drone_glyph(double u, double v) {
  if (u * u + v * v <= 0.14 * 0.14) return true;  // body
  const double arm = 0.33, rot = 0.15, thick = 0.035;
  for (int sx = -1; sx <= 1; sx += 2)
    for (int sy = -1; sy <= 1; sy += 2) {
      const double ex = sx * arm * 0.7071, ey = sy * arm * 0.7071;
      if (dist_point_segment(u, v, 0, 0, ex, ey) <= thick) return true;
      const double dx = u - ex, dy = v - ey;
      if (dx * dx + dy * dy <= rot * rot) return true;
    }
  return false;
}

inline bool inside_bird_glyph(double u, double v) {
  const double bx = 0.0, by = 0.06;
  if ((u - bx) * (u - bx) + (v - by) * (v - by) <= 0.11 * 0.11) return true;  // body
  // two swept wings
  if (dist_point_segment(u, v, 0.0, 0.02, -0.45, -0.24) <= 0.045) return true;
  if (dist_point_segment(u, v, 0.0, 0.02, 0.45, -0.24) <= 0.045) return true;
  return false;
}

// Renders one glyph with 3x3 supersampling into the alpha buffer covering
// [x0, x0+side) x [y0, y0+side). Small glyphs get a light box blur so drone
// and distractor silhouettes collapse to the same blob, mirroring the
// resolution loss on distant objects.
inline void render_glyph(std::vector<double>& alpha, std::size_t img, double x0, double y0,
                         double side, bool drone) {
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)) - 2);
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)) - 2);
  const int px1 = std::min<int>(static_cast<int>(img) - 1,
                                static_cast<int>(std::ceil(x0 + side)) + 2);
  const int py1 = std::min<int>(static_cast<int>(img) - 1,
                                static_cast<int>(std::ceil(y0 + side)) + 2);
  std::vector<double> local((px1 - px0 + 1) * (py1 - py0 + 1), 0.0);
  for (int py = py0; py <= py1; ++py) {
    for (int px = px0; px <= px1; ++px) {
      int hit = 0;
      for (int sy = 0; sy < 3; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
          const double cx = px + (sx + 0.5) / 3.0;
          const double cy = py + (sy + 0.5) / 3.0;
          const double u = (cx - x0) / side - 0.5;
          const double v = (cy - y0) / side - 0.5;
          if (u < -0.5 || u > 0.5 || v < -0.5 || v > 0.5) continue;
          if (drone ? inside_drone_glyph(u, v) : inside_bird_glyph(u, v)) ++hit;
        }
      local[(py - py0) * (px1 - px0 + 1) + (px - px0)] = hit / 9.0;
    }
  }
  if (side < 32.0) {
    // two passes of a radius-1 box blur
    const int lw = px1 - px0 + 1, lh = py1 - py0 + 1;
    std::vector<double> tmp(local.size());
    for (int pass = 0; pass < 2; ++pass) {
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          double s = 0;
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx, yy = y + dy;
              if (xx < 0 || yy < 0 || xx >= lw || yy >= lh) continue;
              s += local[yy * lw + xx];
              ++n;
            }
          tmp[y * lw + x] = s / n;
        }
      local.swap(tmp);
    }
  }
  for (int py = py0; py <= py1; ++py)
    for (int px = px0; px <= px1; ++px) {
      double& a = alpha[py * img + px];
      a = std::max(a, local[(py - py0) * (px1 - px0 + 1) + (px - px0)]);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene synthesis
// ---------------------------------------------------------------------------

inline SynthScene synth_scene(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  RngState rng(derive_seed(seed, "scene"));
  SynthScene scene;
  const std::size_t img = cfg.image_size;

  // --- condition tags -------------------------------------------------------
  static const char* kBackgrounds[] = {"bg:field", "bg:sky", "bg:urban"};
  static const char* kWeather[] = {"weather:clear", "weather:overcast"};
  static const char* kLight[] = {"light:day", "light:evening"};
  const std::size_t bg_idx = rng.uniform_int(3);
  const std::size_t we_idx = rng.uniform_int(2);
  const std::size_t li_idx = rng.uniform_int(2);
  scene.tags = {kBackgrounds[bg_idx], kWeather[we_idx], kLight[li_idx]};

  // --- background raster ----------------------------------------------------
  const double bases[3][3] = {{112, 148, 92}, {152, 182, 212}, {132, 129, 124}};
  double base[3] = {bases[bg_idx][0], bases[bg_idx][1], bases[bg_idx][2]};
  const double weather_gain = we_idx == 1 ? 0.8 : 1.0;
  const double light_gain = li_idx == 1 ? 0.62 : 1.0;
  for (double& c : base) c *= weather_gain * light_gain;
  if (li_idx == 1) base[0] *= 1.18;  // warm evening cast

  scene.image.width = img;
  scene.image.height = img;
  scene.image.rgb.resize(3 * img * img);
  const double grad = rng.uniform(-18.0, 18.0);
  for (std::size_t y = 0; y < img; ++y)
    for (std::size_t x = 0; x < img; ++x) {
      const double g = grad * (static_cast<double>(y) / img - 0.5);
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + g + rng.uniform(-10.0, 10.0);
        scene.image.rgb[3 * (y * img + x) + c] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  // A few soft blobs for texture (clouds, bushes, walls).
  const std::size_t n_blobs = 2 + rng.uniform_int(4);
  for (std::size_t bI = 0; bI < n_blobs; ++bI) {
    const double bx = rng.uniform(0.0, static_cast<double>(img));
    const double by = rng.uniform(0.0, static_cast<double>(img));
    const double br = rng.uniform(img * 0.1, img * 0.35);
    const double tint = rng.uniform(-24.0, 24.0);
    for (std::size_t y = 0; y < img; ++y)
      for (std::size_t x = 0; x < img; ++x) {
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        const double w = std::exp(-d2 / (2 * br * br)) * 0.5;
        if (w < 0.01) continue;
        for (int c = 0; c < 3; ++c) {
          auto& px = scene.image.rgb[3 * (y * img + x) + c];
          px = static_cast<std::uint8_t>(std::clamp(px + tint * w, 0.0, 255.0));
        }
      }
  }

  // --- glyph layout ----------------------------------------------------------
  auto draw_count = [&](const std::array<double, 3>& probs) {
    const double u = rng.uniform();
    if (u < probs[0]) return 0;
    if (u < probs[0] + probs[1]) return 1;
    return 2;
  };
  const int n_drones = draw_count(cfg.drone_count_probs);
  const int n_distractors = draw_count(cfg.distractor_count_probs);
  scene.has_drone = n_drones > 0;

  struct Placed {
    double x0, y0, side;
    bool drone;
  };
  std::vector<Placed> placed;
  auto sample_side = [&]() {
    const double u = rng.uniform();
    double area;
    if (u < cfg.bucket_probs[0])
      area = rng.uniform(130.0, 920.0);
    else if (u < cfg.bucket_probs[0] + cfg.bucket_probs[1])
      area = rng.uniform(1300.0, 8800.0);
    else
      area = rng.uniform(9216.0, std::min(18500.0, std::pow(img * 0.85, 2.0)));
    return std::sqrt(area);
  };
  auto place = [&](bool drone) {
    const double side = sample_side();
    for (int attempt = 0; attempt < 30; ++attempt) {
      const double x0 = rng.uniform(1.0, img - side - 1.0);
      const double y0 = rng.uniform(1.0, img - side - 1.0);
      bool clear = true;
      for (const auto& p : placed) {
        const double ox = std::max(0.0, std::min(x0 + side, p.x0 + p.side) - std::max(x0, p.x0));
        const double oy = std::max(0.0, std::min(y0 + side, p.y0 + p.side) - std::max(y0, p.y0));
        if (ox * oy > 0.25 * std::min(side * side, p.side * p.side)) {
          clear = false;
          break;
        }
      }
      if (clear) {
        placed.push_back({x0, y0, side, drone});
        return;
      }
    }
    // crowded scene: accept the last candidate anyway
    placed.push_back({rng.uniform(1.0, img - side - 1.0), rng.uniform(1.0, img - side - 1.0),
                      side, drone});
  };
  for (int i = 0; i < n_drones; ++i) place(true);
  for (int i = 0; i < n_distractors; ++i) place(false);

  std::vector<double> alpha(img * img, 0.0);
  const double tone = rng.uniform(-12.0, 12.0);
  double glyph_rgb[3] = {42 + tone, 43 + tone, 50 + tone};
  for (const auto& p : placed)
    detail::render_glyph(alpha, img, p.x0, p.y0, p.side, p.drone);
  for (std::size_t i = 0; i < img * img; ++i) {
    const double a = std::min(1.0, alpha[i]);
    if (a <= 0) continue;
    for (int c = 0; c < 3; ++c) {
      auto& px = scene.image.rgb[3 * i + c];
      px = static_cast<std::uint8_t>(
          std::clamp((1.0 - a) * px + a * glyph_rgb[c] + rng.uniform(-3.0, 3.0), 0.0, 255.0));
    }
  }

  // --- annotations (drones only; distractors are unlabeled background) -------
  int ann_id = 1;
  scene.min_drone_distance_m = 0.0;
  for (const auto& p : placed) {
    if (!p.drone) continue;
    CocoAnnotation an;
    an.id = ann_id++;
    an.x = p.x0;
    an.y = p.y0;
    an.w = p.side;
    an.h = p.side;
    an.area = p.side * p.side;
    const double dist = 1000.0 / p.side;  // closer drones look bigger and sound louder
    an.distance_m = dist;
    scene.annotations.push_back(an);
    if (scene.min_drone_distance_m == 0.0 || dist < scene.min_drone_distance_m)
      scene.min_drone_distance_m = dist;
  }

  // --- audio ------------------------------------------------------------------
  const std::size_t n = kClipSamplesPerChannel;
  scene.audio.sample_rate = kClipSampleRate;
  scene.audio.channels.assign(2, std::vector<double>(n, 0.0));

  // background: white noise plus low rumble
  const double rumble_f = rng.uniform(30.0, 110.0);
  const double rumble_a = rng.uniform(0.2, 0.9) * cfg.noise_level;
  const double rumble_ph = rng.uniform(0.0, 6.2831853);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    auto& s = scene.audio.channels[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kClipSampleRate;
      s[i] = rng.normal(0.0, cfg.noise_level) +
             rumble_a * std::sin(2 * 3.14159265358979323846 * rumble_f * t + rumble_ph);
    }
  }

  if (scene.has_drone) {
    const double f0 = rng.uniform(cfg.hum_min_hz, cfg.hum_max_hz);
    const double side_min = 1000.0 / scene.min_drone_distance_m;
    const double a0 = std::clamp(0.04 * std::sqrt(side_min), 0.15, 0.40);
    const double vib_ph = rng.uniform(0.0, 6.2831853);
    const double am_ph = rng.uniform(0.0, 6.2831853);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      auto& s = scene.audio.channels[ch];
      const double ch_gain = 1.0 + rng.uniform(-0.05, 0.05);
      const double ch_phase = rng.uniform(0.0, 0.3);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kClipSampleRate;
        const double f = f0 * (1.0 + 0.004 * std::sin(2 * 3.14159265358979323846 * 3.0 * t +
                                                      vib_ph));
        const double am =
            1.0 + 0.15 * std::sin(2 * 3.14159265358979323846 * 7.0 * t + am_ph);
        double hum = 0.0;
        for (int hharm = 1; hharm <= 5; ++hharm) {
          if (f * hharm > 7800.0) break;  // keep harmonics below Nyquist
          hum += (a0 / std::pow(hharm, 1.5)) *
                 std::sin(2 * 3.14159265358979323846 * f * hharm * t + ch_phase * hharm);
        }
        s[i] += ch_gain * am * hum;
      }
    }
  }
  for (auto& ch : scene.audio.channels)
    for (auto& v : ch) v = std::clamp(v, -1.0, 1.0);

  return scene;
}

// ---------------------------------------------------------------------------
// Counter video for synchronization testing: frame i encodes i in the RGB
// bytes of its first pixel.
// ---------------------------------------------------------------------------

inline ImageU8 make_counter_frame(int counter) {
  ImageU8 f = ImageU8::filled(8, 8, 0, 0, 0);
  f.rgb[0] = static_cast<std::uint8_t>(counter & 0xff);
  f.rgb[1] = static_cast<std::uint8_t>((counter >> 8) & 0xff);
  f.rgb[2] = static_cast<std::uint8_t>((counter >> 16) & 0xff);
  return f;
}

inline int counter_of_frame(const ImageU8& f) {
  return static_cast<int>(f.rgb[0]) | (static_cast<int>(f.rgb[1]) << 8) |
         (static_cast<int>(f.rgb[2]) << 16);
}

inline std::vector<ImageU8> make_counter_video(double fps, int seconds) {
  const auto n = static_cast<std::size_t>(std::llround(fps * seconds));
  std::vector<ImageU8> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) frames.push_back(make_counter_frame(static_cast<int>(i)));
  return frames;
}

}  // namespace wavefuse
