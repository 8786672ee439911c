#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "wavefuse/detector/model.hpp"
#include "wavefuse/gradcheck.hpp"
#include "wavefuse/oracles.hpp"

namespace wavefuse::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // measured quantity (max rel err / max abs diff)
  double limit = 0.0;
  double seconds = 0.0;
};

namespace detail {

inline Tensor<double> randn(Shape shape, RngState& rng, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Values bounded away from zero, for ops with kinks there.
inline Tensor<double> rand_offzero(Shape shape, RngState& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(0.05, 1.5);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor<double>(std::move(shape), std::move(v));
}

using GradCase = std::function<double(RngState&)>;

inline CheckResult run_grad_case(const std::string& name, const GradCase& runner,
                                 int points, std::uint64_t seed, double limit = 1e-4) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = name;
  r.limit = limit;
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    RngState rng(derive_seed(seed, name + "#" + std::to_string(p)));
    worst = std::max(worst, runner(rng));
  }
  r.value = worst;
  r.pass = worst <= limit;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradient suite: every differentiable op plus the four fusion layers,
// central differences in 64-bit, `points` random points each.
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> gradient_suite(int points = 10, std::uint64_t seed = 2024) {
  using detail::randn;
  using detail::rand_offzero;
  std::vector<std::pair<std::string, detail::GradCase>> cases;

  cases.emplace_back("grad/linear", [](RngState& rng) {
    auto x = randn({3, 4}, rng), w = randn({5, 4}, rng), b = randn({5}, rng);
    return grad_check([&] { return sum_all(sigmoid(linear(x, w, b))); }, {x, w, b});
  });
  cases.emplace_back("grad/activation-relu", [](RngState& rng) {
    auto x = rand_offzero({4, 5}, rng);
    return grad_check([&] { return sum_all(relu(x)); }, {x});
  });
  cases.emplace_back("grad/activation-sigmoid", [](RngState& rng) {
    auto x = randn({4, 5}, rng);
    return grad_check([&] { return sum_all(mul(sigmoid(x), x)); }, {x});
  });
  cases.emplace_back("grad/activation-softmax", [](RngState& rng) {
    auto x = randn({3, 6}, rng);
    auto w = randn({3, 6}, rng);
    return grad_check([&] { return sum_all(mul(softmax_lastdim(x), w)); }, {x, w});
  });
  cases.emplace_back("grad/dropout", [](RngState& rng) {
    auto x = randn({40}, rng);
    const std::uint64_t mask_seed = rng.next_u64();
    return grad_check(
        [&] {
          RngState mask_rng(mask_seed);
          return sum_all(mul(dropout(x, 0.4, DropoutMode::kTrain, mask_rng), x));
        },
        {x});
  });
  cases.emplace_back("grad/conv2d", [](RngState& rng) {
    auto x = randn({2, 6, 7}, rng);
    auto w = randn({3, 2, 3, 3}, rng, 0.5);
    auto b = randn({3}, rng, 0.2);
    return grad_check([&] { return mean_all(conv2d(x, w, b, 2, 1)); }, {x, w, b});
  });
  cases.emplace_back("grad/conv1d", [](RngState& rng) {
    auto x = randn({2, 20}, rng);
    auto w = randn({3, 2, 4}, rng, 0.5);
    auto b = randn({3}, rng, 0.2);
    return grad_check([&] { return mean_all(conv1d(x, w, b, 3, 1)); }, {x, w, b});
  });
  cases.emplace_back("grad/interp_linear_1d", [](RngState& rng) {
    auto x = randn({5, 3}, rng);
    auto w = randn({9, 3}, rng);
    return grad_check([&] { return sum_all(mul(interp_linear_1d(x, 9), w)); }, {x, w});
  });
  cases.emplace_back("grad/bilinear_sample", [](RngState& rng) {
    auto m = randn({2, 5, 5}, rng);
    // interior of a cell keeps the footprint smooth around the probe
    Tensor<double> p({2}, {rng.uniform(0.15, 0.35), rng.uniform(0.55, 0.75)});
    return grad_check([&] { return sum_all(bilinear_sample(m, p)); }, {m, p});
  });
  cases.emplace_back("grad/matmul-transpose", [](RngState& rng) {
    auto a = randn({3, 4}, rng), b = randn({5, 4}, rng);
    return grad_check([&] { return sum_all(matmul(a, transpose2d(b))); }, {a, b});
  });
  cases.emplace_back("grad/elementwise", [](RngState& rng) {
    auto a = randn({3, 4}, rng), b = rand_offzero({3, 4}, rng);
    return grad_check(
        [&] {
          auto s = add(mul(a, b), sub(a, scale_shift(b, 0.5, 0.1)));
          return sum_all(divide(s, add(mul(b, b), Tensor<double>({3, 4}, 1.0))));
        },
        {a, b});
  });
  cases.emplace_back("grad/min-max-abs", [](RngState& rng) {
    auto a = rand_offzero({4, 4}, rng), b = rand_offzero({4, 4}, rng);
    return grad_check(
        [&] { return sum_all(add(minimum(a, b), add(maximum(a, b), abs_op(a)))); }, {a, b});
  });
  cases.emplace_back("grad/exp-log", [](RngState& rng) {
    auto a = randn({3, 3}, rng, 0.5);
    return grad_check(
        [&] { return sum_all(log_op(add(exp_op(a), Tensor<double>({3, 3}, 1.0)))); }, {a});
  });
  cases.emplace_back("grad/reductions", [](RngState& rng) {
    auto a = randn({4, 5}, rng);
    return grad_check(
        [&] {
          return add(mean_all(a),
                     add(sum_all(mean_rows(mul(a, a))), mean_all(sum_lastdim(a))));
        },
        {a});
  });
  cases.emplace_back("grad/structure", [](RngState& rng) {
    auto a = randn({4, 4}, rng), b = randn({2, 4}, rng);
    auto v = randn({8}, rng);
    return grad_check(
        [&] {
          auto cat = concat_rows(a, b);                       // [6,4]
          auto wide = concat_lastdim(cat, mul(cat, cat));     // [6,8]
          auto sel = select_rows(wide, {1, 3, 5});            // [3,8]
          auto rep = repeat_interleave_rows(sel, 2);          // [6,8]
          auto sl = slice_rows(slice_lastdim(rep, 2, 7), 1, 5);
          return sum_all(add_rowvec(reshape(sl, {4, 5}), slice_lastdim(
                             reshape(v, {1, 8}), 0, 5)));
        },
        {a, b, v});
  });
  cases.emplace_back("grad/chw-tokens", [](RngState& rng) {
    auto x = randn({3, 2, 4}, rng);
    return grad_check(
        [&] { return sum_all(tokens_to_chw(mul(chw_to_tokens(x), chw_to_tokens(x)), 2, 4)); },
        {x});
  });
  cases.emplace_back("grad/layer_norm", [](RngState& rng) {
    auto x = randn({4, 6}, rng);
    auto g = rand_offzero({6}, rng), b = randn({6}, rng);
    return grad_check([&] { return sum_all(sigmoid(layer_norm(x, g, b))); }, {x, g, b});
  });
  cases.emplace_back("grad/cross_entropy", [](RngState& rng) {
    auto logits = randn({4, 3}, rng);
    const std::vector<int> targets{0, 2, 1, 2};
    const std::vector<double> weights{1.0, 0.1, 0.5};
    return grad_check([&] { return cross_entropy_logits(logits, targets, weights); },
                      {logits});
  });
  cases.emplace_back("grad/giou_pairs", [](RngState& rng) {
    std::vector<double> av(8), bv(8);
    for (std::size_t i = 0; i < 8; i += 4) {
      av[i] = rng.uniform(0.3, 0.7);
      av[i + 1] = rng.uniform(0.3, 0.7);
      av[i + 2] = rng.uniform(0.05, 0.3);
      av[i + 3] = rng.uniform(0.05, 0.3);
      bv[i] = rng.uniform(0.3, 0.7);
      bv[i + 1] = rng.uniform(0.3, 0.7);
      bv[i + 2] = rng.uniform(0.05, 0.3);
      bv[i + 3] = rng.uniform(0.05, 0.3);
    }
    Tensor<double> a({2, 4}, std::move(av)), b({2, 4}, std::move(bv));
    return grad_check([&] { return sum_all(giou_pairs(a, b)); }, {a, b});
  });
  cases.emplace_back("grad/set_loss", [](RngState& rng) {
    auto logits = randn({4, 2}, rng);
    std::vector<double> bv(16);
    for (auto& v : bv) v = rng.uniform(0.25, 0.75);
    Tensor<double> boxes({4, 4}, std::move(bv));
    const std::vector<BoundingBox> gts = {{0.4, 0.4, 0.2, 0.25}, {0.65, 0.6, 0.15, 0.1}};
    MatchResult match;
    match.pairs = {{1, 0}, {3, 1}};
    match.unmatched_predictions = {0, 2};
    return grad_check([&] { return set_loss(logits, boxes, gts, match); }, {logits, boxes});
  });
  cases.emplace_back("grad/multihead-attention", [](RngState& rng) {
    ParameterStore<double> ps;
    MultiHeadAttention<double> mha(ps, "mha", 6, 4, 2, rng);
    auto q = randn({3, 6}, rng), kv = randn({5, 4}, rng);
    std::vector<Tensor<double>> params = {q, kv};
    for (auto& p : ps.params()) params.push_back(p.value);
    return grad_check([&] { return mean_all(mha.forward(q, kv)); }, params);
  });
  cases.emplace_back("grad/deformable-attention", [](RngState& rng) {
    ParameterStore<double> ps;
    DeformableAttention<double> attn(ps, "da", 6, 2, 2, 2, rng);
    auto queries = randn({3, 6}, rng);
    std::vector<double> rv(6);
    for (auto& v : rv) v = rng.uniform(0.15, 0.85);
    Tensor<double> refs({3, 2}, std::move(rv));
    std::vector<Tensor<double>> tokens = {randn({6, 6}, rng), randn({4, 6}, rng)};
    const std::vector<std::pair<std::size_t, std::size_t>> dims = {{2, 3}, {2, 2}};
    std::vector<Tensor<double>> params = {queries, refs, tokens[0], tokens[1]};
    for (auto& p : ps.params()) params.push_back(p.value);
    return grad_check(
        [&] { return mean_all(attn.forward(queries, refs, tokens, dims)); }, params);
  });
  cases.emplace_back("grad/encoder-layer", [](RngState& rng) {
    DetectorConfig cfg;
    cfg.d = 8;
    cfg.levels = 2;
    cfg.heads = 2;
    cfg.points = 2;
    cfg.queries = 4;
    ParameterStore<double> ps;
    EncoderLayer<double> layer(ps, "enc", cfg, rng);
    auto x = randn({8, 8}, rng);
    std::vector<double> rv(16);
    for (auto& v : rv) v = rng.uniform(0.15, 0.85);
    Tensor<double> refs({8, 2}, std::move(rv));
    const std::vector<std::pair<std::size_t, std::size_t>> dims = {{2, 3}, {1, 2}};
    const std::vector<std::pair<std::size_t, std::size_t>> spans = {{0, 6}, {6, 8}};
    std::vector<Tensor<double>> params = {x, refs};
    for (auto& p : ps.params()) params.push_back(p.value);
    return grad_check([&] { return mean_all(layer.forward(x, refs, dims, spans)); }, params);
  });
  cases.emplace_back("grad/audio-encoder", [](RngState& rng) {
    AudioEncoderConfig cfg;
    cfg.kernels = {8, 3};
    cfg.strides = {5, 2};
    cfg.channels = {3, 4};
    ParameterStore<double> ps;
    // short input keeps the probe cheap; conv arithmetic is identical
    std::vector<Conv1dLayer<double>> convs;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
      convs.emplace_back(ps, "c" + std::to_string(i), cin, cfg.channels[i], cfg.kernels[i],
                         cfg.strides[i], 0, rng, ParamGroup::kBackbone);
      cin = cfg.channels[i];
    }
    auto x = randn({1, 64}, rng);
    std::vector<Tensor<double>> params = {x};
    for (auto& p : ps.params()) params.push_back(p.value);
    return grad_check(
        [&] {
          Tensor<double> t = x;
          for (auto& c : convs) t = relu(c.forward(t));
          return mean_all(t);
        },
        params);
  });

  // the four fusion layers, exercised through fuse_pyramid
  for (auto mode : {FusionMode::kLinear, FusionMode::kMlp, FusionMode::kGated,
                    FusionMode::kXattn}) {
    cases.emplace_back("grad/fusion-" + fusion_mode_name(mode), [mode](RngState& rng) {
      ParameterStore<double> ps;
      FusionConfig fcfg;
      fcfg.mode = mode;
      fcfg.heads = 2;
      FusionModule<double> fm(ps, fcfg, 4, 8, 2, rng);
      FeaturePyramid<double> p;
      p.d = 4;
      p.strides = {8, 16};
      p.levels.push_back(randn({4, 2, 3}, rng));
      p.levels.push_back(randn({4, 1, 2}, rng));
      auto emb = randn({5, 8}, rng);
      std::vector<Tensor<double>> params = {p.levels[0], p.levels[1], emb};
      for (auto& pr : ps.params()) params.push_back(pr.value);
      return grad_check(
          [&] {
            RngState r0(0);
            auto fused = fm.fuse_pyramid(p, emb, DropoutMode::kEval, r0);
            return mean_all(sigmoid(add(mean_all(fused.levels[0]),
                                        mean_all(fused.levels[1]))));
          },
          params);
    });
  }

  std::vector<CheckResult> results;
  for (const auto& [name, runner] : cases)
    results.push_back(detail::run_grad_case(name, runner, points, seed));
  return results;
}

// ---------------------------------------------------------------------------
// Oracle comparisons
// ---------------------------------------------------------------------------

inline CheckResult hungarian_oracle_check(int trials = 200, std::uint64_t seed = 11) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = "oracle/hungarian-exhaustive";
  r.limit = 0.0;
  r.pass = true;
  RngState rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(5);
    const std::size_t n = m + rng.uniform_int(8 - m);
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (auto& row : cost)
      for (auto& c : row) c = static_cast<double>(rng.uniform_int(4096)) / 64.0 - 20.0;
    const auto mine = hungarian(cost);
    const auto brute = oracles::brute_force_assignment(cost);
    double total = 0;
    for (const auto& [pi, gi] : mine.pairs) total += cost[pi][gi];
    const double diff = std::abs(total - brute.total);
    r.value = std::max(r.value, diff);
    if (diff != 0.0) r.pass = false;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline CheckResult map_oracle_check(int scenes = 50, std::uint64_t seed = 17) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = "oracle/map-brute-force-pr";
  r.limit = 1e-9;
  r.pass = true;
  RngState rng(seed);
  for (int scene = 0; scene < scenes; ++scene) {
    std::vector<GroundTruthBox> gts;
    const std::size_t n_gt = 1 + rng.uniform_int(5);
    for (std::size_t g = 0; g < n_gt; ++g) {
      GroundTruthBox gt;
      gt.image_id = static_cast<int>(rng.uniform_int(2));
      gt.box = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.05, 0.3),
                rng.uniform(0.05, 0.3)};
      gt.area_px = rng.uniform(50.0, 20000.0);
      gts.push_back(gt);
    }
    std::vector<Detection> dets;
    const std::size_t n_det = rng.uniform_int(9);
    for (std::size_t d = 0; d < n_det; ++d) {
      Detection det;
      det.score = rng.uniform(0.01, 0.99);
      if (rng.uniform() < 0.6) {
        const auto& gt = gts[rng.uniform_int(gts.size())];
        det.image_id = gt.image_id;
        det.box = gt.box;
        det.box.cx += rng.uniform(-0.05, 0.05);
        det.box.cy += rng.uniform(-0.05, 0.05);
        det.box.w *= rng.uniform(0.8, 1.2);
        det.box.h *= rng.uniform(0.8, 1.2);
      } else {
        det.image_id = static_cast<int>(rng.uniform_int(2));
        det.box = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.3),
                   rng.uniform(0.05, 0.3)};
      }
      dets.push_back(det);
    }
    const EvalReport rep = map_report(dets, gts);
    for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti)
      for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
        const auto ref = oracles::reference_average_precision(dets, gts, rep.thresholds[ti],
                                                              kAllBuckets[bi]);
        if (rep.ap[ti][bi].has_value() != ref.has_value()) {
          r.pass = false;
          r.value = 1.0;
          continue;
        }
        if (ref) {
          const double diff = std::abs(*rep.ap[ti][bi] - *ref);
          r.value = std::max(r.value, diff);
          if (diff > r.limit) r.pass = false;
        }
      }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Fusion identities
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> fusion_identity_checks(std::uint64_t seed = 23) {
  std::vector<CheckResult> results;
  auto timed = [&](const std::string& name, double limit, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    r.name = name;
    r.limit = limit;
    r.value = fn();
    r.pass = r.value <= limit;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(r);
  };

  timed("identity/gated-saturated-pyramid", 1e-6, [&] {
    RngState rng(seed);
    ParameterStore<double> ps;
    FusionConfig cfg;
    cfg.mode = FusionMode::kGated;
    FusionModule<double> fm(ps, cfg, 4, 8, 2, rng);
    for (auto& level : fm.levels) {
      std::fill(level.fuse.w.mutable_data().begin(), level.fuse.w.mutable_data().end(), 0.0);
      std::fill(level.fuse.b.mutable_data().begin(), level.fuse.b.mutable_data().end(), 100.0);
    }
    FeaturePyramid<double> p;
    p.d = 4;
    p.strides = {8, 16};
    p.levels.push_back(detail::randn({4, 3, 4}, rng));
    p.levels.push_back(detail::randn({4, 2, 2}, rng));
    auto emb = detail::randn({5, 8}, rng);
    auto fused = fm.fuse_pyramid(p, emb, DropoutMode::kEval, rng);
    double worst = 0;
    for (std::size_t l = 0; l < p.levels.size(); ++l)
      for (std::size_t i = 0; i < p.levels[l].size(); ++i)
        worst = std::max(worst,
                         std::abs(fused.levels[l].data()[i] - p.levels[l].data()[i]));
    return worst;
  });

  timed("identity/linear-selector", 0.0, [&] {
    RngState rng(seed + 1);
    ParameterStore<double> ps;
    FusionConfig cfg;
    FusionLayerParams<double> params(ps, "f", FusionMode::kLinear, 4, 4, 1, rng);
    auto rgb = detail::randn({6, 4}, rng);
    auto audio = detail::randn({6, 4}, rng);
    double worst = 0.0;
    for (int pick_rgb = 1; pick_rgb >= 0; --pick_rgb) {
      auto& w = params.fuse.w.mutable_data();
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t i = 0; i < 4; ++i) w[i * 8 + (pick_rgb ? i : 4 + i)] = 1.0;
      std::fill(params.fuse.b.mutable_data().begin(), params.fuse.b.mutable_data().end(), 0.0);
      auto out = fuse_linear(rgb, audio, params, cfg, DropoutMode::kEval, rng);
      const auto& want = pick_rgb ? rgb.data() : audio.data();
      for (std::size_t i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out.data()[i] - want[i]));
    }
    return worst;
  });

  timed("identity/xattn-permutation", 1e-9, [&] {
    RngState rng(seed + 2);
    ParameterStore<double> ps;
    FusionConfig cfg;
    cfg.mode = FusionMode::kXattn;
    FusionLayerParams<double> params(ps, "x", FusionMode::kXattn, 4, 6, 2, rng);
    auto rgb = detail::randn({5, 4}, rng);
    auto frames = detail::randn({7, 6}, rng);
    auto out1 = fuse_xattn(rgb, frames, params, cfg, DropoutMode::kEval, rng);
    std::vector<std::size_t> order = {4, 2, 6, 0, 3, 5, 1};
    std::vector<double> shuffled(frames.size());
    for (std::size_t r = 0; r < order.size(); ++r)
      std::copy(frames.data().begin() + static_cast<std::ptrdiff_t>(order[r] * 6),
                frames.data().begin() + static_cast<std::ptrdiff_t>((order[r] + 1) * 6),
                shuffled.begin() + static_cast<std::ptrdiff_t>(r * 6));
    Tensor<double> frames2({7, 6}, std::move(shuffled));
    auto out2 = fuse_xattn(rgb, frames2, params, cfg, DropoutMode::kEval, rng);
    double worst = 0.0;
    for (std::size_t i = 0; i < out1.size(); ++i)
      worst = std::max(worst, std::abs(out1.data()[i] - out2.data()[i]));
    return worst;
  });

  timed("identity/gated-end-to-end-detector", 1e-5, [&] {
    DetectorConfig cfg;
    cfg.d = 16;
    cfg.levels = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.queries = 5;
    cfg.heads = 2;
    cfg.points = 2;
    AudioEncoderConfig audio_cfg;
    audio_cfg.kernels = {10, 3, 2};
    audio_cfg.strides = {5, 2, 2};
    audio_cfg.channels = {4, 4, 8};
    DetrModel<float> rgb_model(cfg, audio_cfg, seed + 3);
    DetectorConfig fused_cfg = cfg;
    FusionConfig fusion;
    fusion.mode = FusionMode::kGated;
    fused_cfg.fusion = fusion;
    DetrModel<float> fused_model(fused_cfg, audio_cfg, seed + 4);
    fused_model.params.copy_matching_from(rgb_model.params);
    for (auto& level : fused_model.fusion().levels) {
      std::fill(level.fuse.w.mutable_data().begin(), level.fuse.w.mutable_data().end(), 0.0f);
      std::fill(level.fuse.b.mutable_data().begin(), level.fuse.b.mutable_data().end(),
                100.0f);
    }
    RngState rng(seed + 5);
    std::vector<float> iv(3 * 64 * 64);
    for (auto& v : iv) v = static_cast<float>(rng.uniform(0.0, 1.0));
    Tensor<float> image({3, 64, 64}, std::move(iv));
    std::vector<float> cv(kClipLength);
    for (auto& v : cv) v = static_cast<float>(rng.normal(0.0, 1.0));
    Tensor<float> clip({kClipLength}, std::move(cv));
    NoGradGuard ng;
    RngState r1(0), r2(0);
    auto a = rgb_model.forward(image, nullptr, DropoutMode::kEval, r1);
    auto b = fused_model.forward(image, &clip, DropoutMode::kEval, r2);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.class_logits.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(
                                  a.class_logits.data()[i] - b.class_logits.data()[i])));
    for (std::size_t i = 0; i < a.boxes.size(); ++i)
      worst = std::max(
          worst, static_cast<double>(std::abs(a.boxes.data()[i] - b.boxes.data()[i])));
    return worst;
  });

  return results;
}

// Full suite used by `wavefuse verify`.
inline std::vector<CheckResult> run_all(int grad_points = 10, std::uint64_t seed = 2024) {
  std::vector<CheckResult> all = gradient_suite(grad_points, seed);
  all.push_back(hungarian_oracle_check());
  all.push_back(map_oracle_check());
  auto identities = fusion_identity_checks();
  all.insert(all.end(), identities.begin(), identities.end());
  return all;
}

}  // namespace wavefuse::verify
