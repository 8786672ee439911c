#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavefuse/eval/metrics.hpp"
#include "wavefuse/oracles.hpp"
#include "wavefuse/rng.hpp"

using namespace wavefuse;

namespace {

// Random micro-scene: a handful of ground truths plus detections that are
// either jittered copies or unrelated boxes.
struct MicroScene {
  std::vector<Detection> dets;
  std::vector<GroundTruthBox> gts;
};

MicroScene random_scene(RngState& rng, int images = 2) {
  MicroScene s;
  const std::size_t n_gt = 1 + rng.uniform_int(5);
  for (std::size_t g = 0; g < n_gt; ++g) {
    GroundTruthBox gt;
    gt.image_id = static_cast<int>(rng.uniform_int(images));
    gt.box.cx = rng.uniform(0.25, 0.75);
    gt.box.cy = rng.uniform(0.25, 0.75);
    gt.box.w = rng.uniform(0.05, 0.3);
    gt.box.h = rng.uniform(0.05, 0.3);
    gt.area_px = rng.uniform(50.0, 20000.0);
    s.gts.push_back(gt);
  }
  const std::size_t n_det = rng.uniform_int(9);
  for (std::size_t d = 0; d < n_det; ++d) {
    Detection det;
    det.score = rng.uniform(0.01, 0.99);
    if (!s.gts.empty() && rng.uniform() < 0.6) {
      const auto& gt = s.gts[rng.uniform_int(s.gts.size())];
      det.image_id = gt.image_id;
      det.box = gt.box;
      det.box.cx += rng.uniform(-0.05, 0.05);
      det.box.cy += rng.uniform(-0.05, 0.05);
      det.box.w *= rng.uniform(0.8, 1.2);
      det.box.h *= rng.uniform(0.8, 1.2);
    } else {
      det.image_id = static_cast<int>(rng.uniform_int(images));
      det.box.cx = rng.uniform(0.1, 0.9);
      det.box.cy = rng.uniform(0.1, 0.9);
      det.box.w = rng.uniform(0.05, 0.3);
      det.box.h = rng.uniform(0.05, 0.3);
    }
    s.dets.push_back(det);
  }
  return s;
}

}  // namespace

TEST_CASE("iou reference values") {
  const auto a = BoundingBox::from_corners(0, 0, 2, 2);
  const auto b = BoundingBox::from_corners(1, 1, 3, 3);
  REQUIRE(iou(a, a) == 1.0);
  REQUIRE(iou(a, b) == Catch::Approx(1.0 / 7.0));
  const auto c = BoundingBox::from_corners(5, 5, 6, 6);
  REQUIRE(iou(a, c) == 0.0);
}

TEST_CASE("giou reference values") {
  const auto a = BoundingBox::from_corners(0, 0, 2, 2);
  const auto b = BoundingBox::from_corners(1, 1, 3, 3);
  REQUIRE(giou(a, a) == 1.0);
  // IoU 1/7, union 7, hull 9 -> 1/7 - 2/9 = -5/63
  REQUIRE(giou(a, b) == Catch::Approx(-5.0 / 63.0));
  // Distant tiny boxes approach -1 from above.
  const auto t1 = BoundingBox::from_corners(0.0, 0.0, 0.001, 0.001);
  const auto t2 = BoundingBox::from_corners(0.999, 0.999, 1.0, 1.0);
  REQUIRE(giou(t1, t2) > -1.0);
  REQUIRE(giou(t1, t2) < -0.99);
}

TEST_CASE("giou properties against iou") {
  RngState rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    BoundingBox a{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
                  rng.uniform(0.05, 0.4)};
    BoundingBox b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
                  rng.uniform(0.05, 0.4)};
    REQUIRE(giou(a, b) == Catch::Approx(giou(b, a)).margin(1e-12));
    REQUIRE(giou(a, b) <= iou(a, b) + 1e-12);
  }
}

TEST_CASE("bucket thresholds") {
  REQUIRE(bucket_of(900) == SizeBucket::kSmall);
  REQUIRE(bucket_of(10000) == SizeBucket::kLarge);
  REQUIRE(bucket_of(1024) == SizeBucket::kMedium);  // boundary goes up
  REQUIRE(bucket_of(9216) == SizeBucket::kLarge);
  REQUIRE(bucket_of(0) == SizeBucket::kSmall);
  REQUIRE_THROWS_AS(bucket_of(-1), ShapeError);
}

TEST_CASE("average precision basics") {
  GroundTruthBox gt;
  gt.image_id = 0;
  gt.box = {0.5, 0.5, 0.2, 0.2};
  gt.area_px = 500.0;

  SECTION("single exact detection gives AP 1 at any threshold") {
    Detection d;
    d.image_id = 0;
    d.box = gt.box;
    d.score = 0.9;
    for (double thr : map_iou_thresholds())
      REQUIRE(average_precision({d}, {gt}, thr, SizeBucket::kAll).value() == 1.0);
  }
  SECTION("no detections gives AP 0") {
    REQUIRE(average_precision({}, {gt}, 0.5, SizeBucket::kAll).value() == 0.0);
  }
  SECTION("empty bucket is absent") {
    REQUIRE_FALSE(average_precision({}, {gt}, 0.5, SizeBucket::kLarge).has_value());
  }
  SECTION("hand case equals the brute-force PR oracle") {
    std::vector<GroundTruthBox> gts(3);
    for (int i = 0; i < 3; ++i) {
      gts[i].image_id = 0;
      gts[i].box = {0.2 + 0.25 * i, 0.5, 0.1, 0.1};
      gts[i].area_px = 800.0;
    }
    std::vector<Detection> dets(4);
    dets[0] = {0, gts[0].box, 0.95};
    dets[1] = {0, {0.21 + 0.25, 0.5, 0.1, 0.1}, 0.8};
    dets[2] = {0, {0.9, 0.9, 0.05, 0.05}, 0.7};  // false positive
    dets[3] = {0, gts[2].box, 0.6};
    for (double thr : map_iou_thresholds()) {
      const auto mine = average_precision(dets, gts, thr, SizeBucket::kAll);
      const auto ref = oracles::reference_average_precision(dets, gts, thr, SizeBucket::kAll);
      REQUIRE(mine.has_value());
      REQUIRE(*mine == Catch::Approx(*ref).margin(1e-12));
    }
  }
}

TEST_CASE("AP is invariant under monotone score transforms") {
  RngState rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    MicroScene s = random_scene(rng);
    auto transformed = s.dets;
    for (auto& d : transformed) d.score = std::exp(3.0 * d.score);  // strictly monotone
    for (double thr : {0.5, 0.75}) {
      const auto a = average_precision(s.dets, s.gts, thr, SizeBucket::kAll);
      const auto b = average_precision(transformed, s.gts, thr, SizeBucket::kAll);
      REQUIRE(a.has_value() == b.has_value());
      if (a) REQUIRE(*a == Catch::Approx(*b).margin(1e-12));
    }
  }
}

TEST_CASE("AP is nonincreasing in the IoU threshold") {
  RngState rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    MicroScene s = random_scene(rng);
    double prev = 2.0;
    for (double thr : map_iou_thresholds()) {
      const auto ap = average_precision(s.dets, s.gts, thr, SizeBucket::kAll);
      REQUIRE(ap.has_value());
      REQUIRE(*ap <= prev + 1e-12);
      prev = *ap;
    }
  }
}

TEST_CASE("map_report") {
  SECTION("all-ones AP gives mAP 1 per nonempty bucket") {
    std::vector<GroundTruthBox> gts;
    std::vector<Detection> dets;
    const double areas[3] = {500.0, 5000.0, 10000.0};
    for (int i = 0; i < 3; ++i) {
      GroundTruthBox g;
      g.image_id = i;
      g.box = {0.5, 0.5, 0.2, 0.2};
      g.area_px = areas[i];
      gts.push_back(g);
      dets.push_back({i, g.box, 0.9});
    }
    const EvalReport rep = map_report(dets, gts);
    REQUIRE(rep.thresholds.size() == 9);
    for (std::size_t bi = 0; bi < 4; ++bi) {
      REQUIRE(rep.map[bi].has_value());
      REQUIRE(*rep.map[bi] == 1.0);
    }
    REQUIRE(rep.gt_counts[EvalReport::bucket_index(SizeBucket::kAll)] == 3);
    REQUIRE(rep.gt_counts[EvalReport::bucket_index(SizeBucket::kSmall)] == 1);
  }
  SECTION("empty bucket is absent with count zero") {
    GroundTruthBox g;
    g.image_id = 0;
    g.box = {0.5, 0.5, 0.2, 0.2};
    g.area_px = 500.0;
    const EvalReport rep = map_report({}, {g});
    REQUIRE_FALSE(rep.map[EvalReport::bucket_index(SizeBucket::kLarge)].has_value());
    REQUIRE(rep.gt_counts[EvalReport::bucket_index(SizeBucket::kLarge)] == 0);
  }
  SECTION("matches the brute-force oracle on 50 random micro-scenes") {
    RngState rng(17);
    for (int scene = 0; scene < 50; ++scene) {
      MicroScene s = random_scene(rng);
      const EvalReport rep = map_report(s.dets, s.gts);
      for (std::size_t ti = 0; ti < rep.thresholds.size(); ++ti)
        for (std::size_t bi = 0; bi < kAllBuckets.size(); ++bi) {
          const auto ref = oracles::reference_average_precision(
              s.dets, s.gts, rep.thresholds[ti], kAllBuckets[bi]);
          REQUIRE(rep.ap[ti][bi].has_value() == ref.has_value());
          if (ref) REQUIRE(std::abs(*rep.ap[ti][bi] - *ref) <= 1e-9);
        }
    }
  }
}

TEST_CASE("classification metrics") {
  SECTION("perfect classifier scores 1 everywhere") {
    ConfusionCounts c{50, 0, 0, 50};
    std::vector<ScoredLabel> scored;
    for (int i = 0; i < 50; ++i) scored.push_back({0.9, true});
    for (int i = 0; i < 50; ++i) scored.push_back({0.1, false});
    const auto m = classification_metrics(c, scored);
    for (const auto& [k, v] : m) REQUIRE(v == Catch::Approx(1.0));
    REQUIRE(m.size() == 7);
  }
  SECTION("tp=45 fp=5 fn=5 tn=45 has MCC 0.8") {
    ConfusionCounts c{45, 5, 5, 45};
    const auto m = classification_metrics(c, {{0.5, true}, {0.5, false}});
    REQUIRE(m.at("mcc") == Catch::Approx(0.8));
  }
  SECTION("constant predictor degenerates to MCC 0 and balanced accuracy 0.5") {
    ConfusionCounts c{50, 50, 0, 0};  // everything predicted positive
    std::vector<ScoredLabel> scored;
    for (int i = 0; i < 50; ++i) scored.push_back({0.7, true});
    for (int i = 0; i < 50; ++i) scored.push_back({0.7, false});
    const auto m = classification_metrics(c, scored);
    REQUIRE(m.at("mcc") == 0.0);
    REQUIRE(m.at("balanced_accuracy") == 0.5);
  }
  SECTION("F1 is the harmonic mean of reported precision and recall") {
    RngState rng(19);
    for (int trial = 0; trial < 50; ++trial) {
      ConfusionCounts c{rng.uniform_int(40) + 1, rng.uniform_int(40), rng.uniform_int(40),
                        rng.uniform_int(40) + 1};
      const auto m = classification_metrics(c, {{0.5, true}, {0.4, false}});
      const double p = m.at("precision"), r = m.at("recall");
      const double expect = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
      REQUIRE(m.at("f1") == Catch::Approx(expect).margin(1e-12));
    }
  }
  SECTION("empty input is an evaluation error") {
    REQUIRE_THROWS_AS(classification_metrics({}, {}), EvalError);
  }
}
