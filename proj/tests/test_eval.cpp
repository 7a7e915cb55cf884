#include <doctest.h>

#include <algorithm>

#include "homalign/eval.hpp"
#include "oracles.hpp"

using namespace homalign;

namespace {

KeypointSet random_keypoints(int n, uint64_t seed) {
  Rng rng(seed);
  KeypointSet kp;
  for (int i = 0; i < n; ++i) {
    kp.points.push_back(
        {uniform_real(rng, -0.8, 0.8), uniform_real(rng, -0.8, 0.8)});
  }
  return kp;
}

TransformRanges zero_ranges() {
  TransformRanges r;
  r.max_rotation_deg = r.max_shear_deg = r.max_perspective_deg =
      r.max_translation_px = 0.0;
  r.scale_lo = r.scale_hi = 1.0;
  return r;
}

}  // namespace

TEST_CASE("pck is 1 for identical transforms") {
  const KeypointSet kp = random_keypoints(20, 1);
  PckConfig cfg;
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const HomographyParams p = oracles::random_valid(rng);
    for (double tau : cfg.taus) {
      CHECK(pck(kp, p, p, cfg, tau) == 1.0);
    }
  }
}

TEST_CASE("pck hand case: 10 px translation on 256x256") {
  const KeypointSet kp = random_keypoints(20, 3);
  PckConfig cfg;
  cfg.h = cfg.w = 256;
  // 10 px along x: tolerance 12.8 px at tau=0.05, 7.68 px at tau=0.03
  const HomographyParams t{1, 0, 2.0 * 10.0 / 255.0, 0, 1, 0, 0, 0};
  CHECK(pck(kp, t, HomographyParams{}, cfg, 0.05) == 1.0);
  CHECK(pck(kp, t, HomographyParams{}, cfg, 0.03) == 0.0);
}

TEST_CASE("pck matches the brute-force oracle") {
  PckConfig cfg;
  cfg.h = 192;
  cfg.w = 256;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const KeypointSet kp = random_keypoints(20, 100 + i);
    const HomographyParams a = oracles::random_valid(rng);
    const HomographyParams b = oracles::random_valid(rng);
    for (double tau : {0.05, 0.03, 0.01}) {
      CHECK(pck(kp, a, b, cfg, tau) ==
            oracles::pck(kp.points, a, b, cfg.h, cfg.w, tau));
    }
  }
}

TEST_CASE("pck is monotone in tau and order-invariant") {
  PckConfig cfg;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    KeypointSet kp = random_keypoints(25, 200 + i);
    const HomographyParams a = oracles::random_valid(rng);
    const HomographyParams b = oracles::random_valid(rng);
    const double p05 = pck(kp, a, b, cfg, 0.05);
    const double p03 = pck(kp, a, b, cfg, 0.03);
    const double p01 = pck(kp, a, b, cfg, 0.01);
    CHECK(p01 <= p03);
    CHECK(p03 <= p05);

    KeypointSet shuffled = kp;
    std::reverse(shuffled.points.begin(), shuffled.points.end());
    CHECK(pck(shuffled, a, b, cfg, 0.03) == p03);
  }
}

TEST_CASE("make_test_set") {
  std::vector<Image> sources;
  for (int i = 0; i < 4; ++i) {
    sources.push_back(synthetic_texture(32, 32, 1, 900 + i));
  }
  TransformRanges r;
  r.max_rotation_deg = 30;
  r.max_shear_deg = 10;
  r.max_perspective_deg = 4;
  r.max_translation_px = 3;
  r.image_size_px = 32;

  SUBCASE("each record carries the requested keypoints") {
    Rng rng(6);
    const auto records = make_test_set(sources, r, 1.5, 20, rng);
    REQUIRE(records.size() == 4);
    for (const TestRecord& rec : records) {
      CHECK(rec.keypoints.count() == 20);
      for (const Point& p : rec.keypoints.points) {
        CHECK(std::abs(p.x) <= 0.8);
        CHECK(std::abs(p.y) <= 0.8);
      }
      CHECK(homography_warpable(rec.pair.gt_homography));
    }
  }

  SUBCASE("deterministic per seed") {
    Rng a(7), b(7);
    const auto ra = make_test_set(sources, r, 1.5, 5, a);
    const auto rb = make_test_set(sources, r, 1.5, 5, b);
    for (size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra[i].pair.gt_homography.to_array() ==
            rb[i].pair.gt_homography.to_array());
      CHECK(ra[i].keypoints.points[0].x == rb[i].keypoints.points[0].x);
    }
  }

  SUBCASE("scale_up of 1 reproduces the training ranges") {
    const TransformRanges s = scale_ranges(r, 1.0);
    CHECK(s.max_rotation_deg == r.max_rotation_deg);
    CHECK(s.max_shear_deg == r.max_shear_deg);
    CHECK(s.max_perspective_deg == r.max_perspective_deg);
    CHECK(s.max_translation_px == r.max_translation_px);
    CHECK(s.scale_lo == r.scale_lo);
    CHECK(s.scale_hi == r.scale_hi);
  }

  SUBCASE("range widening is capped at feasibility") {
    TransformRanges wide;
    wide.max_rotation_deg = 170;
    wide.max_shear_deg = 60;
    wide.max_perspective_deg = 20;
    const TransformRanges s = scale_ranges(wide, 2.0);
    CHECK(s.max_rotation_deg == 180.0);
    CHECK(s.max_shear_deg == 85.0);
    CHECK(s.max_perspective_deg == 25.0);
  }

  SUBCASE("scale_up below 1 is rejected") {
    Rng rng(8);
    CHECK_THROWS_AS(make_test_set(sources, r, 0.5, 5, rng), Error);
  }
}

TEST_CASE("evaluate_model on identity data with a zero model is perfect") {
  std::vector<Image> sources;
  for (int i = 0; i < 3; ++i) {
    sources.push_back(synthetic_texture(32, 32, 1, 700 + i));
  }
  Rng rng(9);
  const auto records = make_test_set(sources, zero_ranges(), 1.0, 20, rng);
  const ModelState m = make_zero_model(1, 4, 4);

  PckConfig cfg;
  cfg.h = cfg.w = 32;
  const std::vector<EvalRow> rows = evaluate_model(m, records, cfg);
  REQUIRE(rows.size() == 4 * 3);  // 4 methods x 3 taus
  for (const EvalRow& row : rows) {
    CHECK(row.pck == 1.0);
  }

  SUBCASE("rows are monotone in tau per method") {
    for (size_t base = 0; base < rows.size(); base += 3) {
      CHECK(rows[base + 2].pck <= rows[base + 1].pck);
      CHECK(rows[base + 1].pck <= rows[base].pck);
    }
  }

  SUBCASE("tsv rendering has the pinned header") {
    const std::string tsv = render_report_tsv(rows);
    CHECK(tsv.rfind("method\ttau\tpck\n", 0) == 0);
    size_t lines = std::count(tsv.begin(), tsv.end(), '\n');
    CHECK(lines == rows.size() + 1);
  }

  SUBCASE("macro and micro averages agree for equal keypoint counts") {
    const std::vector<EvalRow> macro = evaluate_model(m, records, cfg, 0.5, true);
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(macro[i].pck == doctest::Approx(rows[i].pck).epsilon(1e-12));
    }
  }
}
