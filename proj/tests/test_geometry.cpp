#include <doctest.h>

#include <cmath>
#include <string>

#include "homalign/geometry.hpp"
#include "oracles.hpp"

using namespace homalign;

TEST_CASE("affine_to_matrix places parameters row-major") {
  CHECK(affine_to_matrix({1, 0, 0, 0, 1, 0}) == Mat23{1, 0, 0, 0, 1, 0});
  CHECK(affine_to_matrix({2, 0, 0.5, 0, 2, 0}) == Mat23{2, 0, 0.5, 0, 2, 0});
  // 90 degree rotation
  CHECK(affine_to_matrix({0, -1, 0, 1, 0, 0}) == Mat23{0, -1, 0, 1, 0, 0});
}

TEST_CASE("homography_to_matrix fixes the last entry to 1") {
  CHECK(homography_to_matrix(HomographyParams{}) ==
        Mat33{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(homography_to_matrix({1, 0, 0, 0, 1, 0, 0.5, 0}) ==
        Mat33{1, 0, 0, 0, 1, 0, 0.5, 0, 1});
  const HomographyParams h =
      concat_affine_perspective({2, 0, 0.5, 0, 2, 0}, {0.1, 0.2});
  CHECK(homography_to_matrix(h) == Mat33{2, 0, 0.5, 0, 2, 0, 0.1, 0.2, 1});
}

TEST_CASE("concat_affine_perspective is parameter concatenation") {
  const HomographyParams id = concat_affine_perspective({}, {});
  CHECK(id.to_array() == std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});

  const HomographyParams t =
      concat_affine_perspective({1, 0, 0.2, 0, 1, -0.1}, {});
  CHECK(t.to_array() == std::array<double, 8>{1, 0, 0.2, 0, 1, -0.1, 0, 0});

  const HomographyParams c =
      concat_affine_perspective({2, 0, 0, 0, 2, 0}, {0.1, 0.2});
  CHECK(c.to_array() == std::array<double, 8>{2, 0, 0, 0, 2, 0, 0.1, 0.2});
}

TEST_CASE("apply_homography matches Eq.-style evaluation") {
  const Point p1 = apply_homography(HomographyParams{}, {0.3, 0.7});
  CHECK(p1.x == 0.3);
  CHECK(p1.y == 0.7);

  const Point p2 = apply_homography({1, 0, 0.2, 0, 1, -0.1, 0, 0}, {0, 0});
  CHECK(p2.x == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(p2.y == doctest::Approx(-0.1).epsilon(1e-15));

  // z' = 0.5*1 + 0*1 + 1 = 1.5
  const Point p3 = apply_homography({1, 0, 0, 0, 1, 0, 0.5, 0}, {1, 1});
  CHECK(p3.x == doctest::Approx(1.0 / 1.5).epsilon(1e-15));
  CHECK(p3.y == doctest::Approx(1.0 / 1.5).epsilon(1e-15));
}

TEST_CASE("apply_homography rejects degenerate denominators") {
  // h5*x + h6*y + 1 = 0 at (1, 0) for h5 = -1
  CHECK_THROWS_AS(apply_homography({1, 0, 0, 0, 1, 0, -1.0, 0}, {1, 0}),
                  DegenerateDenominator);
}

TEST_CASE("transform_grid names the offending grid index") {
  // denominator vanishes in the y = +1 row only
  const HomographyParams p{1, 0, 0, 0, 1, 0, 0, -1.0};
  try {
    transform_grid(p, Grid::uniform(3));
    FAIL("expected DegenerateDenominator");
  } catch (const DegenerateDenominator& e) {
    CHECK(std::string(e.what()).find("(2, 0)") != std::string::npos);
  }
}

TEST_CASE("grid is uniform row-major") {
  const Grid g = Grid::uniform(3);
  REQUIRE(g.points.size() == 9);
  CHECK(g.points[0].x == -1.0);
  CHECK(g.points[0].y == -1.0);
  CHECK(g.points[1].x == 0.0);
  CHECK(g.points[4].x == 0.0);
  CHECK(g.points[4].y == 0.0);
  CHECK(g.points[8].x == 1.0);
  CHECK(g.points[8].y == 1.0);
  CHECK_THROWS_AS(Grid::uniform(1), Error);
}

TEST_CASE("transform_grid equals pointwise application") {
  const Grid g = Grid::uniform(3);
  SUBCASE("identity is a no-op") {
    const auto out = transform_grid(HomographyParams{}, g);
    for (size_t i = 0; i < g.points.size(); ++i) {
      CHECK(out[i].x == g.points[i].x);
      CHECK(out[i].y == g.points[i].y);
    }
  }
  SUBCASE("translation shifts x") {
    const auto out = transform_grid({1, 0, 0.2, 0, 1, 0, 0, 0}, Grid::uniform(2));
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].x ==
            doctest::Approx(Grid::uniform(2).points[i].x + 0.2).epsilon(1e-15));
    }
  }
  SUBCASE("perspective case matches the per-point oracle") {
    const HomographyParams p{1, 0, 0, 0, 1, 0, 0.5, 0};
    const auto out = transform_grid(p, g);
    for (size_t i = 0; i < g.points.size(); ++i) {
      const oracles::Pt e = oracles::apply(p, g.points[i].x, g.points[i].y);
      CHECK(out[i].x == doctest::Approx(e.x).epsilon(1e-14));
      CHECK(out[i].y == doctest::Approx(e.y).epsilon(1e-14));
    }
  }
}

TEST_CASE("invert_homography round-trips") {
  const HomographyParams id_inv = invert_homography(HomographyParams{});
  CHECK(id_inv.to_array() == std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});

  const HomographyParams t_inv =
      invert_homography({1, 0, 0.2, 0, 1, -0.1, 0, 0});
  CHECK(t_inv.tx == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(t_inv.ty == doctest::Approx(0.1).epsilon(1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const HomographyParams p = oracles::random_valid(rng);
    const HomographyParams inv = invert_homography(p);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Point pt{uniform_real(rng, -1, 1), uniform_real(rng, -1, 1)};
      const Point back = apply_homography(inv, apply_homography(p, pt));
      worst = std::max({worst, std::abs(back.x - pt.x), std::abs(back.y - pt.y)});
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("invert_homography rejects singular input") {
  CHECK_THROWS_AS(invert_homography({0, 0, 0, 0, 0, 0, 0, 0}), SingularMatrix);
}

TEST_CASE("sample_random_homography honors ranges") {
  SUBCASE("all-zero ranges give the identity") {
    TransformRanges r;
    r.max_rotation_deg = r.max_shear_deg = r.max_perspective_deg =
        r.max_translation_px = 0.0;
    r.scale_lo = r.scale_hi = 1.0;
    Rng rng(1);
    const SampledTransform t = sample_random_homography(r, rng);
    CHECK(t.homography.to_array() ==
          std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});
    CHECK(t.affine.to_array() == std::array<double, 6>{1, 0, 0, 0, 1, 0});
    CHECK(t.perspective.h5 == 0.0);
    CHECK(t.perspective.h6 == 0.0);
  }

  SUBCASE("translation bound is 2*px/image_size") {
    TransformRanges r;
    r.max_rotation_deg = r.max_shear_deg = r.max_perspective_deg = 0.0;
    r.max_translation_px = 100.0;
    r.image_size_px = 256;
    r.scale_lo = r.scale_hi = 1.0;
    const double bound = 2.0 * 100.0 / 256.0;  // 0.78125
    CHECK(bound == 0.78125);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      const SampledTransform t = sample_random_homography(r, rng);
      CHECK(std::abs(t.affine.tx) <= bound);
      CHECK(std::abs(t.affine.ty) <= bound);
    }
  }

  SUBCASE("perspective bound is tan(max degrees)") {
    TransformRanges r;
    r.max_rotation_deg = r.max_shear_deg = 0.0;
    r.max_translation_px = 0.0;
    r.max_perspective_deg = 20.0;
    r.scale_lo = r.scale_hi = 1.0;
    const double bound = std::tan(20.0 * 3.14159265358979323846 / 180.0);
    CHECK(bound == doctest::Approx(0.36397023426620234).epsilon(1e-12));
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      const SampledTransform t = sample_random_homography(r, rng);
      CHECK(std::abs(t.perspective.h5) <= bound);
      CHECK(std::abs(t.perspective.h6) <= bound);
    }
  }

  SUBCASE("identical seeds give identical triples") {
    TransformRanges r;
    Rng a(42), b(42);
    const SampledTransform ta = sample_random_homography(r, a);
    const SampledTransform tb = sample_random_homography(r, b);
    CHECK(ta.homography.to_array() == tb.homography.to_array());
  }

  SUBCASE("sampled transforms satisfy the warpability invariants") {
    TransformRanges r;  // full paper ranges
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
      const SampledTransform t = sample_random_homography(r, rng);
      CHECK(homography_warpable(t.homography));
      CHECK(std::abs(t.perspective.h5) + std::abs(t.perspective.h6) < 1.0);
      CHECK(t.homography.to_array() ==
            concat_affine_perspective(t.affine, t.perspective).to_array());
    }
  }

  SUBCASE("unsatisfiable ranges throw after 100 attempts") {
    TransformRanges r;
    r.max_perspective_deg = 89.9;  // tan ~ 573: |h5|+|h6| < 1 nearly never
    Rng rng(11);
    CHECK_THROWS_AS(sample_random_homography(r, rng), RangeUnsatisfiable);
  }
}

TEST_CASE("affine map equals homography with zero perspective") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const double a1 = uniform_real(rng, 0.5, 2), a2 = uniform_real(rng, -1, 1);
    const double a3 = uniform_real(rng, -1, 1), a4 = uniform_real(rng, 0.5, 2);
    const double tx = uniform_real(rng, -1, 1), ty = uniform_real(rng, -1, 1);
    const HomographyParams h{a1, a2, tx, a3, a4, ty, 0, 0};
    const double x = uniform_real(rng, -1, 1), y = uniform_real(rng, -1, 1);
    const Point out = apply_homography(h, {x, y});
    CHECK(out.x == a1 * x + a2 * y + tx);  // denominator is exactly 1
    CHECK(out.y == a3 * x + a4 * y + ty);
  }
}

TEST_CASE("min denominator over the square sits at a corner") {
  const HomographyParams p{1, 0, 0, 0, 1, 0, 0.3, -0.2};
  CHECK(min_denominator_on_square(p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(homography_warpable(p));
  const HomographyParams bad{1, 0, 0, 0, 1, 0, 0.6, -0.38};
  CHECK(min_denominator_on_square(bad) < kDenomFloor);
  CHECK(!homography_warpable(bad));
}
