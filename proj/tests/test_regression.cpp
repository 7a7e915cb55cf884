#include <doctest.h>

#include "homalign/datagen.hpp"
#include "homalign/regression.hpp"

using namespace homalign;

namespace {

nn::Tensor random_corr(int fh, int fw, uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t({fh, fw, fh * fw});
  for (double& v : t.data) v = uniform_real(rng, -1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("zero-weight heads regress the identity") {
  const nn::Tensor corr = random_corr(4, 4, 1);
  CHECK(regress(corr, make_head_zero(6, 4, 4)) ==
        std::vector<double>{1, 0, 0, 0, 1, 0});
  CHECK(regress(corr, make_head_zero(2, 4, 4)) == std::vector<double>{0, 0});
  CHECK(regress(corr, make_head_zero(8, 4, 4)) ==
        std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0});
}

TEST_CASE("head output sizes follow the DoF") {
  Rng rng(2);
  const nn::Tensor corr = random_corr(4, 4, 3);
  CHECK(regress(corr, make_head(6, 4, 4, rng)).size() == 6);
  CHECK(regress(corr, make_head(2, 4, 4, rng)).size() == 2);
  CHECK(regress(corr, make_head(8, 4, 4, rng)).size() == 8);
}

TEST_CASE("homography head carries the two extra hidden layers") {
  const RegressionHead h8 = make_head_zero(8, 4, 4);
  REQUIRE(h8.fcs.size() == 3);
  CHECK(h8.fcs[0].out == 128);
  CHECK(h8.fcs[1].out == 64);
  CHECK(h8.fcs[2].out == 8);
  CHECK(make_head_zero(6, 4, 4).fcs.size() == 1);
  CHECK(make_head_zero(2, 4, 4).fcs.size() == 1);
}

TEST_CASE("regress is deterministic for fixed weights and input") {
  Rng rng(5);
  const RegressionHead head = make_head(8, 4, 4, rng);
  const nn::Tensor corr = random_corr(4, 4, 6);
  const std::vector<double> a = regress(corr, head);
  const std::vector<double> b = regress(corr, head);
  CHECK(a == b);
}

TEST_CASE("regress rejects mismatched correlation shapes") {
  const RegressionHead head = make_head_zero(6, 4, 4);
  CHECK_THROWS_AS(regress(random_corr(2, 2, 7), head), DimensionMismatch);
}

TEST_CASE("ensemble is a symmetric mean at lambda 0.5") {
  const HomographyParams t{1, 0, 0.2, 0, 1, 0, 0, 0};
  const HomographyParams id{};

  SUBCASE("idempotent on equal inputs") {
    CHECK(ensemble(t, t).to_array() == t.to_array());
  }
  SUBCASE("mean of identity and translation") {
    const HomographyParams e = ensemble(id, t);
    CHECK(e.tx == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(e.h1 == 1.0);
  }
  SUBCASE("commutative bit-exactly") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
      std::array<double, 8> a, b;
      for (double& v : a) v = uniform_real(rng, -1, 1);
      for (double& v : b) v = uniform_real(rng, -1, 1);
      const HomographyParams pa = HomographyParams::from_array(a);
      const HomographyParams pb = HomographyParams::from_array(b);
      CHECK(ensemble(pa, pb).to_array() == ensemble(pb, pa).to_array());
    }
  }
  SUBCASE("linear in its arguments") {
    const HomographyParams e = ensemble(t, id, 0.25);
    CHECK(e.tx == doctest::Approx(0.25 * 0.2).epsilon(1e-15));
  }
}

TEST_CASE("zero-weight pipeline is an end-to-end no-op") {
  const ModelState m = make_zero_model(1, 4, 4);
  const Image img = synthetic_texture(32, 32, 1, 8);
  const Image img2 = synthetic_texture(32, 32, 1, 9);

  const PipelineOutput out = forward_pipeline(img, img, img2, m);
  CHECK(out.theta_aff.to_array() == std::array<double, 6>{1, 0, 0, 0, 1, 0});
  CHECK(out.theta_pers.h5 == 0.0);
  CHECK(out.theta_pers.h6 == 0.0);
  CHECK(out.theta_hom.to_array() ==
        std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});
  CHECK(out.theta_en.to_array() ==
        std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});

  SUBCASE("guide is the concatenation of the two regressions") {
    CHECK(out.theta_guide.to_array() ==
          concat_affine_perspective(out.theta_aff, out.theta_pers).to_array());
  }
  SUBCASE("inference mode matches") {
    const PipelineOutput inf = infer_alignment(img, img2, m);
    CHECK(inf.theta_en.to_array() ==
          std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});
  }
}

TEST_CASE("forward_pipeline is deterministic and guide-consistent") {
  const ModelState m = make_model(1, 4, 4, 77);
  const Image a = synthetic_texture(32, 32, 1, 10);
  const Image b = synthetic_texture(32, 32, 1, 11);
  const Image c = synthetic_texture(32, 32, 1, 12);
  const PipelineOutput o1 = forward_pipeline(a, b, c, m);
  const PipelineOutput o2 = forward_pipeline(a, b, c, m);
  CHECK(o1.theta_hom.to_array() == o2.theta_hom.to_array());
  CHECK(o1.theta_en.to_array() == o2.theta_en.to_array());
  CHECK(o1.theta_guide.to_array() ==
        concat_affine_perspective(o1.theta_aff, o1.theta_pers).to_array());
}
