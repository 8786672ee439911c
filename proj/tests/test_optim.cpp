#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavefuse/checkpoint.hpp"
#include "wavefuse/optim.hpp"

using namespace wavefuse;

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  ParameterStore<float> ps;
  RngState rng(1);
  auto w = ps.add("w", {4}, ParamGroup::kHead, init::normal<float>(rng, 1.0));
  const auto before = w.data();
  Adam<float> opt(ps, {});
  w.mutable_grad();  // zero-filled
  opt.step();
  REQUIRE(w.data() == before);
}

TEST_CASE("first adam step moves by roughly -lr * sign(g)") {
  ParameterStore<double> ps;
  auto w = ps.add_const("w", {3}, ParamGroup::kHead, 1.0);
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam<double> opt(ps, cfg);
  auto& g = w.mutable_grad();
  g = {0.5, -2.0, 1e-3};
  opt.step();
  // One step from m=v=0: delta = -lr * g / (|g| + eps) ~= -lr * sign(g)
  REQUIRE(w.data()[0] == Catch::Approx(1.0 - 0.01).epsilon(1e-5));
  REQUIRE(w.data()[1] == Catch::Approx(1.0 + 0.01).epsilon(1e-5));
  REQUIRE(w.data()[2] == Catch::Approx(1.0 - 0.01).epsilon(1e-4));
}

TEST_CASE("backbone group with zero lr stays bit-identical") {
  ParameterStore<float> ps;
  RngState rng(2);
  auto bb = ps.add("backbone.w", {8}, ParamGroup::kBackbone, init::normal<float>(rng, 1.0));
  auto hd = ps.add("head.w", {8}, ParamGroup::kHead, init::normal<float>(rng, 1.0));
  const auto bb_before = bb.data();
  const auto hd_before = hd.data();
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.backbone_lr = 0.0;
  Adam<float> opt(ps, cfg);
  for (int s = 0; s < 5; ++s) {
    for (auto& p : ps.params()) {
      auto& g = p.value.mutable_grad();
      for (auto& v : g) v = 0.3f;
    }
    opt.step();
    opt.zero_grad();
  }
  REQUIRE(bb.data() == bb_before);
  REQUIRE(hd.data() != hd_before);
}

TEST_CASE("negative learning rate is a configuration error") {
  ParameterStore<float> ps;
  ps.add_const("w", {1}, ParamGroup::kHead, 0.0f);
  AdamConfig cfg;
  cfg.lr = -1.0;
  REQUIRE_THROWS_AS(Adam<float>(ps, cfg), ConfigError);
}

TEST_CASE("schedulers") {
  SECTION("plateau halves after patience epochs without improvement") {
    LrScheduler sched(SchedulerKind::kPlateau, 100, /*patience=*/2, /*factor=*/0.5);
    REQUIRE(sched.on_epoch(0, 1.0) == 1.0);
    REQUIRE(sched.on_epoch(1, 1.0) == 1.0);  // bad 1
    REQUIRE(sched.on_epoch(2, 1.0) == 1.0);  // bad 2
    REQUIRE(sched.on_epoch(3, 1.0) == 0.5);  // bad 3 > patience
    REQUIRE(sched.on_epoch(4, 0.5) == 0.5);  // improvement resets
  }
  SECTION("cosine decays to zero at the period") {
    LrScheduler sched(SchedulerKind::kCosine, 10);
    const double mid = sched.on_epoch(4, 0.0);
    REQUIRE(mid == Catch::Approx(0.5 * (1.0 + std::cos(3.14159265358979323846 * 0.5))));
    REQUIRE(sched.on_epoch(9, 0.0) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("unknown scheduler name rejected") {
    REQUIRE_THROWS_AS(parse_scheduler("linear_warmup"), ConfigError);
  }
}

TEST_CASE("checkpoint round trip preserves names, shapes and values") {
  ParameterStore<float> ps;
  RngState rng(3);
  ps.add("enc.w", {3, 2}, ParamGroup::kBackbone, init::normal<float>(rng, 1.0));
  ps.add("head.b", {5}, ParamGroup::kHead, init::normal<float>(rng, 1.0));

  const auto path = std::filesystem::temp_directory_path() / "wavefuse_ckpt_test.bin";
  save_checkpoint(ps, path);

  ParameterStore<float> ps2;
  ps2.add_zeros("enc.w", {3, 2}, ParamGroup::kBackbone);
  ps2.add_zeros("head.b", {5}, ParamGroup::kHead);
  load_checkpoint(ps2, path);
  REQUIRE(ps2.find("enc.w")->value.data() == ps.find("enc.w")->value.data());
  REQUIRE(ps2.find("head.b")->value.data() == ps.find("head.b")->value.data());

  SECTION("missing parameter is a state error") {
    ParameterStore<float> ps3;
    ps3.add_zeros("enc.w", {3, 2}, ParamGroup::kBackbone);
    ps3.add_zeros("does.not.exist", {1}, ParamGroup::kHead);
    REQUIRE_THROWS_AS(load_checkpoint(ps3, path), StateError);
  }
  SECTION("matching load copies only compatible entries") {
    ParameterStore<float> ps4;
    ps4.add_zeros("enc.w", {3, 2}, ParamGroup::kBackbone);
    ps4.add_zeros("fusion.gate", {4}, ParamGroup::kHead);
    REQUIRE(load_checkpoint_matching(ps4, path) == 1);
  }
  SECTION("corrupt magic is a format error") {
    auto bytes = read_file(path);
    bytes[0] = 'X';
    const auto bad = std::filesystem::temp_directory_path() / "wavefuse_ckpt_bad.bin";
    write_file_atomic(bad, bytes);
    ParameterStore<float> ps5;
    ps5.add_zeros("enc.w", {3, 2}, ParamGroup::kBackbone);
    REQUIRE_THROWS_AS(load_checkpoint(ps5, bad), FormatError);
    std::filesystem::remove(bad);
  }
  std::filesystem::remove(path);
}

TEST_CASE("parameter names must be unique") {
  ParameterStore<float> ps;
  ps.add_const("w", {1}, ParamGroup::kHead, 0.0f);
  REQUIRE_THROWS_AS(ps.add_const("w", {1}, ParamGroup::kHead, 0.0f), StateError);
}

TEST_CASE("rng streams are reproducible and splittable") {
  RngState a(99), b(99);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  auto c = a.derive("worker");
  auto d = b.derive("worker");
  REQUIRE(c.next_u64() == d.next_u64());
  REQUIRE(a.derive("x").next_u64() != a.derive("y").next_u64());
}
