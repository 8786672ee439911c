#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavefuse/detector/matcher.hpp"
#include "wavefuse/gradcheck.hpp"
#include "wavefuse/oracles.hpp"
#include "wavefuse/rng.hpp"

using namespace wavefuse;

namespace {

// Costs drawn on a coarse dyadic grid so totals are exact in double and the
// equality assertion against the exhaustive oracle is meaningful.
std::vector<std::vector<double>> random_cost(RngState& rng, std::size_t n, std::size_t m) {
  std::vector<std::vector<double>> cost(n, std::vector<double>(m));
  for (auto& row : cost)
    for (auto& c : row) c = static_cast<double>(rng.uniform_int(4096)) / 64.0 - 20.0;
  return cost;
}

double total_of(const std::vector<std::vector<double>>& cost, const MatchResult& m) {
  double t = 0;
  for (const auto& [pi, gi] : m.pairs) t += cost[pi][gi];
  return t;
}

}  // namespace

TEST_CASE("hungarian basics") {
  SECTION("1x1") {
    const auto m = hungarian({{3.5}});
    REQUIRE(m.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
    REQUIRE(m.unmatched_predictions.empty());
  }
  SECTION("2x2 diagonal preference") {
    const auto m = hungarian({{1, 2}, {2, 1}});
    REQUIRE(m.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});
    REQUIRE(total_of({{1, 2}, {2, 1}}, m) == 2.0);
  }
  SECTION("zero ground truths leave every prediction unmatched") {
    std::vector<std::vector<double>> cost(4);
    const auto m = hungarian(cost);
    REQUIRE(m.pairs.empty());
    REQUIRE(m.unmatched_predictions == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SECTION("non-finite entries are a numeric error") {
    REQUIRE_THROWS_AS(hungarian({{std::numeric_limits<double>::infinity()}}), NumericError);
    REQUIRE_THROWS_AS(hungarian({{std::nan("")}}), NumericError);
  }
  SECTION("fewer predictions than ground truths is a shape error") {
    REQUIRE_THROWS_AS(hungarian({{1.0, 2.0}}), ShapeError);
  }
}

TEST_CASE("hungarian equals exhaustive search on 200 random instances") {
  RngState rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(5);
    const std::size_t n = m + rng.uniform_int(8 - m);
    const auto cost = random_cost(rng, n, m);
    const auto mine = hungarian(cost);
    const auto brute = oracles::brute_force_assignment(cost);
    REQUIRE(mine.pairs.size() == m);
    REQUIRE(total_of(cost, mine) == brute.total);
    // Tie-break: the same lexicographically smallest assignment.
    for (std::size_t col = 0; col < m; ++col) {
      const auto it = std::find_if(mine.pairs.begin(), mine.pairs.end(),
                                   [&](const auto& p) { return p.second == col; });
      REQUIRE(it != mine.pairs.end());
      REQUIRE(it->first == brute.row_for_col[col]);
    }
  }
}

TEST_CASE("matching is invariant to constant cost shifts") {
  RngState rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(4);
    const std::size_t n = m + rng.uniform_int(5);
    auto cost = random_cost(rng, n, m);
    const auto base = hungarian(cost);
    const double shift = static_cast<double>(rng.uniform_int(256)) / 16.0 - 8.0;
    auto shifted = cost;
    for (auto& row : shifted)
      for (auto& c : row) c += shift;
    const auto moved = hungarian(shifted);
    REQUIRE(base.pairs == moved.pairs);
  }
}

TEST_CASE("deterministic lexicographic tie-break") {
  // All-equal costs: the smallest rows take the columns in order.
  const auto m = hungarian({{1, 1}, {1, 1}, {1, 1}});
  REQUIRE(m.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});
  REQUIRE(m.unmatched_predictions == std::vector<std::size_t>{2});
}

TEST_CASE("match_cost reference values") {
  DetectionSet preds;
  preds.drone_prob = {1.0, 0.0};
  preds.boxes = {{0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.2, 0.2}};
  const std::vector<BoundingBox> gts = {{0.5, 0.5, 0.2, 0.2}};
  const auto cost = match_cost(preds, gts);
  // identical box, p=1: -lambda_cls - lambda_giou = -4; p=0: -lambda_giou = -2
  REQUIRE(cost[0][0] == Catch::Approx(-4.0));
  REQUIRE(cost[1][0] == Catch::Approx(-2.0));

  SECTION("cost is nonincreasing in the drone probability") {
    RngState rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      DetectionSet a, b;
      const BoundingBox box{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                            rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)};
      const double p_low = rng.uniform(0.0, 0.5), p_high = p_low + rng.uniform(0.0, 0.5);
      a.drone_prob = {p_low};
      a.boxes = {box};
      b.drone_prob = {p_high};
      b.boxes = {box};
      REQUIRE(match_cost(b, gts)[0][0] <= match_cost(a, gts)[0][0]);
    }
  }
}

TEST_CASE("giou_pairs agrees with the scalar giou") {
  RngState rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundingBox a{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                        rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    const BoundingBox b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                        rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    Tensor<double> ta({1, 4}, {a.cx, a.cy, a.w, a.h});
    Tensor<double> tb({1, 4}, {b.cx, b.cy, b.w, b.h});
    REQUIRE(giou_pairs(ta, tb).item() == Catch::Approx(giou(a, b)).margin(1e-12));
  }
}

TEST_CASE("set_loss") {
  SECTION("perfect predictions give zero loss") {
    // Query 0 matches the single ground truth exactly with near-certain
    // confidence; query 1 is a confident no-object.
    Tensor<double> logits({2, 2}, {50.0, -50.0, -50.0, 50.0});
    Tensor<double> boxes({2, 4}, {0.5, 0.5, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05});
    const std::vector<BoundingBox> gts = {{0.5, 0.5, 0.2, 0.2}};
    MatchResult match;
    match.pairs = {{0, 0}};
    match.unmatched_predictions = {1};
    REQUIRE(set_loss(logits, boxes, gts, match).item() <= 1e-9);
  }
  SECTION("empty ground truth reduces to pure background cross entropy") {
    Tensor<double> logits({3, 2}, {0.3, -0.2, 1.0, 0.5, -0.4, 0.1});
    Tensor<double> boxes({3, 4}, 0.5);
    MatchResult match;
    match.unmatched_predictions = {0, 1, 2};
    const double loss = set_loss(logits, boxes, {}, match).item();
    const double expected =
        cross_entropy_logits(logits, {1, 1, 1}, std::vector<double>{1.0, 0.1}).item();
    REQUIRE(loss == Catch::Approx(expected));
  }
  SECTION("gradcheck with the matching held fixed") {
    RngState rng(13);
    std::vector<double> lv(4 * 2), bv(4 * 4);
    for (auto& v : lv) v = rng.normal(0.0, 1.0);
    for (auto& v : bv) v = rng.uniform(0.2, 0.8);
    Tensor<double> logits({4, 2}, std::move(lv));
    Tensor<double> boxes({4, 4}, std::move(bv));
    const std::vector<BoundingBox> gts = {{0.4, 0.4, 0.2, 0.3}, {0.7, 0.6, 0.1, 0.1}};
    MatchResult match;
    match.pairs = {{2, 0}, {0, 1}};
    match.unmatched_predictions = {1, 3};
    const double err = grad_check(
        [&] { return set_loss(logits, boxes, gts, match); }, {logits, boxes});
    REQUIRE(err <= 1e-4);
  }
}
