#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavefuse/gradcheck.hpp"
#include "wavefuse/ops.hpp"

using namespace wavefuse;

namespace {

Tensor<double> randt(Shape shape, RngState& rng, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("linear matches direct arithmetic") {
  // y[j] = sum_i W[j,i] x[i] + b[j] with x=(1,2), W=((1,0),(1,1)), b=(0,1)
  Tensor<double> x({2}, {1.0, 2.0});
  Tensor<double> w({2, 2}, {1.0, 0.0, 1.0, 1.0});
  Tensor<double> b({2}, {0.0, 1.0});
  auto y = linear(x, w, b);
  REQUIRE(y.data() == std::vector<double>{1.0, 4.0});
}

TEST_CASE("linear with identity weight is the identity") {
  RngState rng(1);
  auto x = randt({3, 4}, rng);
  Tensor<double> w({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) w.mutable_data()[i * 4 + i] = 1.0;
  Tensor<double> b({4}, 0.0);
  auto y = linear(x, w, b);
  REQUIRE(y.data() == x.data());
}

TEST_CASE("linear rejects shape mismatch naming both shapes") {
  Tensor<double> x({3}, 0.0);
  Tensor<double> w({2, 4}, 0.0);
  Tensor<double> b({2}, 0.0);
  REQUIRE_THROWS_WITH(linear(x, w, b),
                      Catch::Matchers::ContainsSubstring("[3]") &&
                          Catch::Matchers::ContainsSubstring("[2, 4]"));
}

TEST_CASE("linear gradcheck at a random point") {
  RngState rng(7);
  auto x = randt({2, 3}, rng);
  auto w = randt({4, 3}, rng);
  auto b = randt({4}, rng);
  const double err =
      grad_check([&] { return sum_all(linear(x, w, b)); }, {x, w, b});
  REQUIRE(err <= 1e-6);
}

TEST_CASE("activation examples") {
  Tensor<double> z({1}, {0.0});
  REQUIRE(sigmoid(z).item() == 0.5);

  Tensor<double> pm({2}, {-3.0, 3.0});
  auto r = relu(pm);
  REQUIRE(r.data() == std::vector<double>{0.0, 3.0});

  Tensor<double> single({1}, {123.456});
  REQUIRE(softmax_lastdim(single).item() == 1.0);

  REQUIRE_THROWS_AS(parse_activation("tanh"), ConfigError);
}

TEST_CASE("softmax rows sum to one within 1e-12 for any finite input") {
  RngState rng(3);
  std::vector<double> vals(5 * 7);
  for (auto& v : vals) v = rng.uniform(-1e3, 1e3);
  vals[0] = 1e30;
  vals[1] = -1e30;
  Tensor<double> x({5, 7}, std::move(vals));
  auto y = softmax_lastdim(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += y.at({r, j});
    REQUIRE(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("dropout contracts") {
  RngState rng(11);
  auto x = randt({100}, rng);

  SECTION("rate 0 in train mode is identity") {
    auto y = dropout(x, 0.0, DropoutMode::kTrain, rng);
    REQUIRE(y.data() == x.data());
  }
  SECTION("eval mode is identity at any rate") {
    auto y = dropout(x, 0.7, DropoutMode::kEval, rng);
    REQUIRE(y.data() == x.data());
  }
  SECTION("rate >= 1 rejected") {
    REQUIRE_THROWS_AS(dropout(x, 1.0, DropoutMode::kTrain, rng), ConfigError);
  }
  SECTION("Monte Carlo mean of kept/scaled entries matches input within 3 sigma") {
    // For input 1 and rate 0.5 each draw has variance 1, so the mean of
    // 10,000 draws has sigma 0.01.
    const std::size_t n = 10000;
    Tensor<double> ones({n}, 1.0);
    RngState mc(42);
    auto y = dropout(ones, 0.5, DropoutMode::kTrain, mc);
    double mean = 0;
    for (double v : y.data()) mean += v;
    mean /= static_cast<double>(n);
    REQUIRE(std::abs(mean - 1.0) <= 0.03);
  }
  SECTION("identical seed gives bit-identical masks") {
    RngState a(5), b(5);
    auto ya = dropout(x, 0.3, DropoutMode::kTrain, a);
    auto yb = dropout(x, 0.3, DropoutMode::kTrain, b);
    REQUIRE(ya.data() == yb.data());
  }
}

TEST_CASE("conv2d with 1x1 identity kernel is the identity map") {
  RngState rng(2);
  auto x = randt({2, 4, 4}, rng);
  Tensor<double> w({2, 2, 1, 1}, 0.0);
  w.mutable_data()[0 * 2 + 0] = 1.0;
  w.mutable_data()[1 * 2 + 1] = 1.0;
  Tensor<double> b({2}, 0.0);
  auto y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == x.shape());
  REQUIRE(y.data() == x.data());
}

TEST_CASE("conv1d output length follows stride arithmetic") {
  // 32,000 samples, kernel 10, stride 5, no padding -> 6399 frames
  Tensor<double> x({1, 32000}, 0.0);
  Tensor<double> w({1, 1, 10}, 0.0);
  Tensor<double> b({1}, 0.0);
  auto y = conv1d(x, w, b, 5, 0);
  REQUIRE(y.shape() == Shape{1, 6399});
}

TEST_CASE("conv output shapes match the closed form over a config sweep") {
  RngState rng(9);
  for (std::size_t k = 1; k <= 5; ++k)
    for (std::size_t s = 1; s <= 3; ++s)
      for (std::size_t p = 0; p <= 2; ++p)
        for (std::size_t t : {std::size_t(5), std::size_t(13), std::size_t(40)}) {
          Tensor<double> x({1, t}, 0.0);
          Tensor<double> w({1, 1, k}, 0.0);
          Tensor<double> b({1}, 0.0);
          const auto num = static_cast<std::ptrdiff_t>(t + 2 * p) -
                           static_cast<std::ptrdiff_t>(k);
          if (num < 0) continue;
          const std::size_t expect = static_cast<std::size_t>(num) / s + 1;
          REQUIRE(conv1d(x, w, b, s, p).dim(1) == expect);
        }
  // Kernel that does not fit raises a shape error.
  Tensor<double> x({1, 2, 2}, 0.0);
  Tensor<double> w({1, 1, 5, 5}, 0.0);
  Tensor<double> b({1}, 0.0);
  REQUIRE_THROWS_AS(conv2d(x, w, b, 1, 0), ShapeError);
}

TEST_CASE("conv2d gradcheck on a 3x8x8 input") {
  RngState rng(21);
  auto x = randt({3, 8, 8}, rng);
  auto w = randt({2, 3, 3, 3}, rng, 0.5);
  auto b = randt({2}, rng, 0.5);
  const double err =
      grad_check([&] { return mean_all(conv2d(x, w, b, 2, 1)); }, {x, w, b});
  REQUIRE(err <= 1e-5);
}

TEST_CASE("interp_linear_1d") {
  SECTION("target length equal to source is the identity") {
    RngState rng(4);
    auto x = randt({6, 3}, rng);
    REQUIRE(interp_linear_1d(x, 6).data() == x.data());
  }
  SECTION("midpoint of a two-row ramp") {
    Tensor<double> x({2, 1}, {0.0, 1.0});
    auto y = interp_linear_1d(x, 3);
    REQUIRE(y.data() == std::vector<double>{0.0, 0.5, 1.0});
  }
  SECTION("constant rows stay constant for any target length") {
    Tensor<double> x({4, 2}, 3.25);
    for (std::size_t tl : {std::size_t(1), std::size_t(2), std::size_t(9)}) {
      auto y = interp_linear_1d(x, tl);
      for (double v : y.data()) REQUIRE(v == 3.25);
    }
  }
  SECTION("single source row replicates") {
    Tensor<double> x({1, 2}, {1.5, -2.0});
    auto y = interp_linear_1d(x, 4);
    REQUIRE(y.shape() == Shape{4, 2});
    for (std::size_t t = 0; t < 4; ++t) {
      REQUIRE(y.at({t, 0}) == 1.5);
      REQUIRE(y.at({t, 1}) == -2.0);
    }
  }
  SECTION("gradcheck") {
    RngState rng(13);
    auto x = randt({5, 2}, rng);
    const double err = grad_check([&] { return sum_all(interp_linear_1d(x, 8)); }, {x});
    REQUIRE(err <= 1e-6);
  }
}

TEST_CASE("bilinear_sample") {
  // 3x3 map with values 1..9 on channel 0
  Tensor<double> map({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});

  SECTION("point on a cell center returns that cell") {
    Tensor<double> p({2}, {0.5, 0.5});
    REQUIRE(bilinear_sample(map, p).item() == 5.0);
  }
  SECTION("point equidistant from four cells returns their mean") {
    Tensor<double> p({2}, {0.25, 0.25});
    REQUIRE(bilinear_sample(map, p).item() == Catch::Approx((1 + 2 + 4 + 5) / 4.0));
  }
  SECTION("out-of-range neighbors contribute zero") {
    Tensor<double> p({2}, {2.0, 0.5});
    REQUIRE(bilinear_sample(map, p).item() == 0.0);
  }
  SECTION("gradcheck w.r.t. map and point on a random 2x5x5 map") {
    RngState rng(17);
    auto m2 = randt({2, 5, 5}, rng);
    Tensor<double> p({2}, {0.37, 0.61});
    const double err =
        grad_check([&] { return sum_all(bilinear_sample(m2, p)); }, {m2, p});
    REQUIRE(err <= 1e-5);
  }
}

TEST_CASE("grad_check reference cases") {
  SECTION("f(x) = x^2 at x = 3") {
    Tensor<double> x({1}, {3.0});
    const double err = grad_check([&] { return mul(x, x); }, {x});
    REQUIRE(err <= 1e-9);
    x.zero_grad();
    auto f = mul(x, x);
    f.backward();
    REQUIRE(x.grad()[0] == Catch::Approx(6.0));
  }
  SECTION("f = sum(sigmoid(linear(x)))") {
    RngState rng(23);
    auto x = randt({4}, rng);
    auto w = randt({3, 4}, rng);
    auto b = randt({3}, rng);
    const double err =
        grad_check([&] { return sum_all(sigmoid(linear(x, w, b))); }, {x, w, b});
    REQUIRE(err <= 1e-6);
  }
  SECTION("constant f gives zero error") {
    Tensor<double> x({2}, {1.0, 2.0});
    const double err = grad_check([&] { return Tensor<double>::scalar(5.0); }, {x});
    REQUIRE(err == 0.0);
  }
  SECTION("non-finite loss raises an evaluation error") {
    Tensor<double> x({1}, {0.0});
    REQUIRE_THROWS_AS(
        grad_check([&] { return log_op(x); }, {x}), EvalError);
  }
}

TEST_CASE("remaining differentiable ops gradcheck cleanly") {
  RngState rng(31);
  auto a = randt({3, 4}, rng);
  auto b = randt({3, 4}, rng);
  auto check = [&](auto&& f, std::vector<Tensor<double>> params) {
    REQUIRE(grad_check(f, std::move(params)) <= 1e-6);
  };
  check([&] { return sum_all(mul(add(a, b), sub(a, b))); }, {a, b});
  check([&] { return sum_all(divide(a, add(mul(b, b), Tensor<double>({3, 4}, 1.0)))); },
        {a, b});
  check([&] { return sum_all(minimum(a, b)); }, {a, b});
  check([&] { return sum_all(maximum(a, b)); }, {a, b});
  check([&] { return sum_all(abs_op(a)); }, {a});
  check([&] { return sum_all(exp_op(scale(a, 0.3))); }, {a});
  check([&] { return mean_all(softmax_lastdim(a)); }, {a});
  check([&] { return sum_all(mean_rows(a)); }, {a});
  check([&] { return sum_all(sum_lastdim(mul(a, a))); }, {a});
  check([&] { return sum_all(transpose2d(mul(a, b))); }, {a, b});
  check([&] { return sum_all(concat_lastdim(a, mul(b, b))); }, {a, b});
  check([&] { return sum_all(slice_lastdim(a, 1, 3)); }, {a});
  check([&] { return sum_all(select_rows(a, {2, 0, 2})); }, {a});
  check([&] { return sum_all(matmul(a, transpose2d(b))); }, {a, b});

  auto chw = randt({2, 3, 4}, rng);
  check([&] { return sum_all(chw_to_tokens(chw)); }, {chw});
  auto tok = randt({12, 2}, rng);
  check([&] { return sum_all(tokens_to_chw(tok, 3, 4)); }, {tok});

  auto gain = randt({4}, rng);
  auto bias = randt({4}, rng);
  check([&] { return sum_all(layer_norm(a, gain, bias)); }, {a, gain, bias});

  std::vector<int> targets{0, 2, 1};
  std::vector<double> weights{1.0, 0.1, 0.5};
  auto logits = randt({3, 3}, rng);
  check([&] { return cross_entropy_logits(logits, targets, weights); }, {logits});
}

TEST_CASE("cross entropy of a certain correct prediction is near zero") {
  Tensor<double> logits({1, 2}, {50.0, -50.0});
  auto loss = cross_entropy_logits(logits, {0}, {1.0, 1.0});
  REQUIRE(loss.item() <= 1e-9);
}

TEST_CASE("tensor invariants") {
  SECTION("data length must match shape") {
    REQUIRE_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>{1.0}), ShapeError);
  }
  SECTION("backward requires a scalar") {
    Tensor<double> x({2}, {1.0, 2.0}, true);
    auto y = relu(x);
    REQUIRE_THROWS_AS(y.backward(), ShapeError);
  }
  SECTION("no-grad evaluation records no parents") {
    Tensor<double> x({2}, {1.0, 2.0}, true);
    NoGradGuard g;
    auto y = relu(x);
    REQUIRE_FALSE(y.requires_grad());
  }
}
