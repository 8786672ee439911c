#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavefuse/fusion/fusion.hpp"
#include "wavefuse/gradcheck.hpp"

using namespace wavefuse;

namespace {

Tensor<double> randt(Shape shape, RngState& rng, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Sets the 2d->d fuse weight to [I | 0] or [0 | I].
void set_selector(LinearLayer<double>& layer, std::size_t d, bool pick_rgb) {
  auto& w = layer.w.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) w[i * 2 * d + (pick_rgb ? i : d + i)] = 1.0;
  std::fill(layer.b.mutable_data().begin(), layer.b.mutable_data().end(), 0.0);
}

FeaturePyramid<double> tiny_pyramid(RngState& rng, std::size_t d = 4) {
  FeaturePyramid<double> p;
  p.d = d;
  p.strides = {8, 16};
  p.levels.push_back(randt({d, 3, 4}, rng));
  p.levels.push_back(randt({d, 2, 2}, rng));
  return p;
}

}  // namespace

TEST_CASE("align_audio") {
  RngState rng(3);
  SECTION("reshape arithmetic: T_a=4, D_a=512, d=256") {
    auto emb = randt({4, 512}, rng);
    auto aligned = align_audio(emb, 256, 10);
    REQUIRE(aligned.shape() == Shape{10, 256});
  }
  SECTION("matching lengths make the interpolation the identity") {
    auto emb = randt({3, 8}, rng);
    // reshaped rows: 3*8/4 = 6; target 6 -> identity on the reshaped rows
    auto aligned = align_audio(emb, 4, 6);
    REQUIRE(aligned.data() == emb.data());
  }
  SECTION("constant embedding aligns to constant rows at any length") {
    Tensor<double> emb({5, 8}, 1.25);
    for (std::size_t n : {std::size_t(3), std::size_t(7), std::size_t(30)}) {
      auto aligned = align_audio(emb, 4, n);
      for (double v : aligned.data()) REQUIRE(v == 1.25);
    }
  }
  SECTION("non-divisible audio dim without projection is a configuration error") {
    auto emb = randt({3, 10}, rng);
    REQUIRE_THROWS_AS(align_audio(emb, 4, 6), ConfigError);
  }
  SECTION("learned projection handles the non-divisible case") {
    ParameterStore<double> ps;
    LinearLayer<double> proj(ps, "proj", 10, 4, rng);
    auto emb = randt({3, 10}, rng);
    auto aligned = align_audio(emb, 4, 6, &proj);
    REQUIRE(aligned.shape() == Shape{6, 4});
  }
}

TEST_CASE("fusion layer identities") {
  RngState rng(5);
  const std::size_t d = 4, n = 6;
  ParameterStore<double> ps;
  FusionConfig cfg;
  cfg.dropout_rate = 0.0;
  auto rgb = randt({n, d}, rng);
  auto audio = randt({n, d}, rng);

  SECTION("fuse_linear selector picks each modality exactly") {
    FusionLayerParams<double> params(ps, "f", FusionMode::kLinear, d, d, 1, rng);
    set_selector(params.fuse, d, true);
    auto out = fuse_linear(rgb, audio, params, cfg, DropoutMode::kEval, rng);
    REQUIRE(out.data() == rgb.data());
    set_selector(params.fuse, d, false);
    out = fuse_linear(rgb, audio, params, cfg, DropoutMode::kEval, rng);
    REQUIRE(out.data() == audio.data());
  }

  SECTION("fuse_mlp equals fuse_linear on nonnegative pre-activations") {
    FusionLayerParams<double> params(ps, "f", FusionMode::kMlp, d, d, 1, rng);
    set_selector(params.fuse, d, true);
    std::vector<double> pos(n * d);
    for (auto& v : pos) v = rng.uniform(0.1, 2.0);
    Tensor<double> rgb_pos({n, d}, std::move(pos));
    auto lin = fuse_linear(rgb_pos, audio, params, cfg, DropoutMode::kEval, rng);
    auto mlp = fuse_mlp(rgb_pos, audio, params, cfg, DropoutMode::kEval, rng);
    REQUIRE(mlp.data() == lin.data());
  }

  SECTION("fuse_mlp zeroes all-negative pre-activations") {
    FusionLayerParams<double> params(ps, "f", FusionMode::kMlp, d, d, 1, rng);
    set_selector(params.fuse, d, true);
    std::vector<double> neg(n * d);
    for (auto& v : neg) v = rng.uniform(-2.0, -0.1);
    Tensor<double> rgb_neg({n, d}, std::move(neg));
    auto out = fuse_mlp(rgb_neg, audio, params, cfg, DropoutMode::kEval, rng);
    for (double v : out.data()) REQUIRE(v == 0.0);
  }

  SECTION("gated fusion gate asymptotes") {
    FusionLayerParams<double> params(ps, "f", FusionMode::kGated, d, d, 1, rng);
    auto& w = params.fuse.w.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    auto set_bias = [&](double v) {
      std::fill(params.fuse.b.mutable_data().begin(), params.fuse.b.mutable_data().end(), v);
    };
    set_bias(0.0);
    auto out = fuse_gated(rgb, audio, params, cfg, DropoutMode::kEval, rng);
    for (std::size_t i = 0; i < out.size(); ++i)
      REQUIRE(out.data()[i] == Catch::Approx((rgb.data()[i] + audio.data()[i]) / 2.0));
    set_bias(100.0);
    out = fuse_gated(rgb, audio, params, cfg, DropoutMode::kEval, rng);
    for (std::size_t i = 0; i < out.size(); ++i)
      REQUIRE(std::abs(out.data()[i] - rgb.data()[i]) <= 1e-6);
    set_bias(-100.0);
    out = fuse_gated(rgb, audio, params, cfg, DropoutMode::kEval, rng);
    for (std::size_t i = 0; i < out.size(); ++i)
      REQUIRE(std::abs(out.data()[i] - audio.data()[i]) <= 1e-6);
  }
}

TEST_CASE("cross-attention fusion") {
  RngState rng(7);
  const std::size_t d = 4, n = 5, d_a = 6;
  ParameterStore<double> ps;
  FusionConfig cfg;
  cfg.mode = FusionMode::kXattn;
  auto rgb = randt({n, d}, rng);

  SECTION("a single audio frame contributes its value projection to every query") {
    FusionLayerParams<double> params(ps, "f", FusionMode::kXattn, d, d_a, 1, rng);
    auto frame = randt({1, d_a}, rng);
    auto out = fuse_xattn(rgb, frame, params, cfg, DropoutMode::kEval, rng);
    auto v = params.wv.forward(frame);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        REQUIRE(out.at({i, j}) == Catch::Approx(rgb.at({i, j}) + v.at({0, j})));
  }

  SECTION("output is invariant to audio frame permutations") {
    FusionLayerParams<double> params(ps, "g", FusionMode::kXattn, d, d_a, 2, rng);
    auto frames = randt({7, d_a}, rng);
    auto out1 = fuse_xattn(rgb, frames, params, cfg, DropoutMode::kEval, rng);
    // rotate + swap rows
    std::vector<double> perm(frames.data());
    std::vector<std::size_t> order = {3, 0, 6, 1, 5, 2, 4};
    std::vector<double> shuffled(perm.size());
    for (std::size_t r = 0; r < order.size(); ++r)
      std::copy(perm.begin() + order[r] * d_a, perm.begin() + (order[r] + 1) * d_a,
                shuffled.begin() + r * d_a);
    Tensor<double> frames2({7, d_a}, std::move(shuffled));
    auto out2 = fuse_xattn(rgb, frames2, params, cfg, DropoutMode::kEval, rng);
    for (std::size_t i = 0; i < out1.size(); ++i)
      REQUIRE(std::abs(out1.data()[i] - out2.data()[i]) <= 1e-9);
  }

  SECTION("zero value projection reduces to the rgb tokens exactly") {
    FusionLayerParams<double> params(ps, "h", FusionMode::kXattn, d, d_a, 1, rng);
    std::fill(params.wv.w.mutable_data().begin(), params.wv.w.mutable_data().end(), 0.0);
    std::fill(params.wv.b.mutable_data().begin(), params.wv.b.mutable_data().end(), 0.0);
    auto frames = randt({7, d_a}, rng);
    auto out = fuse_xattn(rgb, frames, params, cfg, DropoutMode::kEval, rng);
    REQUIRE(out.data() == rgb.data());
  }

  SECTION("heads must divide d") {
    REQUIRE_THROWS_AS(FusionLayerParams<double>(ps, "i", FusionMode::kXattn, d, d_a, 3, rng),
                      ConfigError);
  }
}

TEST_CASE("fuse_pyramid") {
  RngState rng(11);
  const std::size_t d = 4;

  SECTION("shape preservation for all four modes") {
    for (auto mode : {FusionMode::kLinear, FusionMode::kMlp, FusionMode::kGated,
                      FusionMode::kXattn}) {
      ParameterStore<double> ps;
      FusionConfig cfg;
      cfg.mode = mode;
      cfg.dropout_rate = 0.0;
      FusionModule<double> fm(ps, cfg, d, 8, 2, rng);
      auto p = tiny_pyramid(rng, d);
      auto emb = randt({5, 8}, rng);
      auto fused = fm.fuse_pyramid(p, emb, DropoutMode::kEval, rng);
      REQUIRE(fused.levels.size() == p.levels.size());
      for (std::size_t l = 0; l < p.levels.size(); ++l)
        REQUIRE(fused.levels[l].shape() == p.levels[l].shape());
    }
  }

  SECTION("saturated gate reproduces the rgb pyramid") {
    ParameterStore<double> ps;
    FusionConfig cfg;
    cfg.mode = FusionMode::kGated;
    FusionModule<double> fm(ps, cfg, d, 8, 2, rng);
    for (auto& level : fm.levels) {
      std::fill(level.fuse.w.mutable_data().begin(), level.fuse.w.mutable_data().end(), 0.0);
      std::fill(level.fuse.b.mutable_data().begin(), level.fuse.b.mutable_data().end(),
                100.0);
    }
    auto p = tiny_pyramid(rng, d);
    auto emb = randt({5, 8}, rng);
    auto fused = fm.fuse_pyramid(p, emb, DropoutMode::kEval, rng);
    for (std::size_t l = 0; l < p.levels.size(); ++l)
      for (std::size_t i = 0; i < p.levels[l].size(); ++i)
        REQUIRE(std::abs(fused.levels[l].data()[i] - p.levels[l].data()[i]) <= 1e-6);
  }

  SECTION("eval-mode determinism") {
    ParameterStore<double> ps;
    FusionConfig cfg;
    cfg.mode = FusionMode::kGated;
    cfg.dropout_rate = 0.2;  // must not fire in eval mode
    FusionModule<double> fm(ps, cfg, d, 8, 2, rng);
    auto p = tiny_pyramid(rng, d);
    auto emb = randt({5, 8}, rng);
    auto a = fm.fuse_pyramid(p, emb, DropoutMode::kEval, rng);
    auto b = fm.fuse_pyramid(p, emb, DropoutMode::kEval, rng);
    for (std::size_t l = 0; l < a.levels.size(); ++l)
      REQUIRE(a.levels[l].data() == b.levels[l].data());
  }

  SECTION("gradcheck of a scalar readout through each mode") {
    for (auto mode : {FusionMode::kLinear, FusionMode::kMlp, FusionMode::kGated,
                      FusionMode::kXattn}) {
      ParameterStore<double> ps;
      FusionConfig cfg;
      cfg.mode = mode;
      cfg.heads = 2;
      FusionModule<double> fm(ps, cfg, d, 8, 2, rng);
      auto p = tiny_pyramid(rng, d);
      auto emb = randt({5, 8}, rng);
      std::vector<Tensor<double>> params_vec = {p.levels[0], p.levels[1], emb};
      for (auto& pr : ps.params()) params_vec.push_back(pr.value);
      const double err = grad_check(
          [&] {
            RngState r2(0);
            auto fused = fm.fuse_pyramid(p, emb, DropoutMode::kEval, r2);
            Tensor<double> readout =
                add(mean_all(fused.levels[0]), mean_all(fused.levels[1]));
            // a nonlinearity keeps second derivatives non-trivial
            return mean_all(sigmoid(readout));
          },
          params_vec);
      INFO("mode " << fusion_mode_name(mode));
      REQUIRE(err <= 1e-4);
    }
  }
}
