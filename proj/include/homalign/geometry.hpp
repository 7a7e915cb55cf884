#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "homalign/errors.hpp"

namespace homalign {

// Coordinates are normalized so that both image axes span [-1, 1]:
// pixel (col c, row r) of an h x w image sits at
//   x = 2c/(w-1) - 1,  y = 2r/(h-1) - 1.
// Transform parameters are dimensionless in this coordinate system.

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// 6-parameter affine transform [a1, a2, tx, a3, a4, ty].
struct AffineParams {
  double a1 = 1.0, a2 = 0.0, tx = 0.0;
  double a3 = 0.0, a4 = 1.0, ty = 0.0;

  std::array<double, 6> to_array() const { return {a1, a2, tx, a3, a4, ty}; }
  static AffineParams from_array(const std::array<double, 6>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  double det() const { return a1 * a4 - a2 * a3; }
};

/// The two third-row coefficients [h5, h6] producing forward/backward tilt.
struct PerspectiveParams {
  double h5 = 0.0;
  double h6 = 0.0;

  std::array<double, 2> to_array() const { return {h5, h6}; }
  static PerspectiveParams from_array(const std::array<double, 2>& v) {
    return {v[0], v[1]};
  }
};

/// 8-parameter homography [h1, h2, tx, h3, h4, ty, h5, h6]; the 3x3 matrix
/// has its last entry fixed to 1.
struct HomographyParams {
  double h1 = 1.0, h2 = 0.0, tx = 0.0;
  double h3 = 0.0, h4 = 1.0, ty = 0.0;
  double h5 = 0.0, h6 = 0.0;

  std::array<double, 8> to_array() const {
    return {h1, h2, tx, h3, h4, ty, h5, h6};
  }
  static HomographyParams from_array(const std::array<double, 8>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  }
};

/// Row-major 2x3 matrix.
using Mat23 = std::array<double, 6>;
/// Row-major 3x3 matrix.
using Mat33 = std::array<double, 9>;

/// Regular n x n point grid spanning [-1,1]^2, row-major.
struct Grid {
  int n = 0;
  std::vector<Point> points;

  static Grid uniform(int n);
};

/// Bounds for random transform sampling. Angles in degrees, translation in
/// pixels at the stated image size (converted to normalized units as
/// 2*px/image_size_px).
struct TransformRanges {
  double max_rotation_deg = 180.0;
  double max_shear_deg = 60.0;
  double max_perspective_deg = 20.0;
  double max_translation_px = 100.0;
  int image_size_px = 256;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
};

struct SampledTransform {
  AffineParams affine;
  PerspectiveParams perspective;
  HomographyParams homography;
};

// Thresholds shared by validity checks.
inline constexpr double kDetEps = 1e-8;       // |det| below this is singular
inline constexpr double kDenomFloor = 0.05;   // min h5*x+h6*y+1 over [-1,1]^2
inline constexpr double kApplyDenomEps = 1e-6;

Mat23 affine_to_matrix(const AffineParams& p);
Mat33 homography_to_matrix(const HomographyParams& p);

/// Builds the 8-vector [a1,a2,tx,a3,a4,ty,h5,h6]; the affine block and the
/// perspective block are concatenated, not matrix-multiplied.
HomographyParams concat_affine_perspective(const AffineParams& a,
                                           const PerspectiveParams& p);

/// Projective application with homogeneous division:
///   x' = (h1 x + h2 y + tx) / (h5 x + h6 y + 1), likewise y'.
/// Throws DegenerateDenominator when the denominator is <= kApplyDenomEps.
Point apply_homography(const HomographyParams& p, Point pt);

/// Pointwise apply_homography over the grid, row-major output.
std::vector<Point> transform_grid(const HomographyParams& p, const Grid& g);

/// Matrix inverse rescaled so entry (3,3) = 1, repacked to 8 parameters.
/// Throws SingularMatrix when |det| <= kDetEps or the rescale is impossible.
HomographyParams invert_homography(const HomographyParams& p);

double homography_det(const HomographyParams& p);
/// Minimum of h5*x + h6*y + 1 over [-1,1]^2 (attained at a corner).
double min_denominator_on_square(const HomographyParams& p);
/// True when the transform satisfies the warpability invariants
/// (finite, |det| > kDetEps, denominator > kDenomFloor on the square).
bool homography_warpable(const HomographyParams& p);

using Rng = std::mt19937_64;

/// Uniform double in [lo, hi) drawn from 53 random bits; independent of
/// std::uniform_real_distribution so streams are stable.
double uniform_real(Rng& rng, double lo, double hi);

/// Draws (affine, perspective, homography) with the affine part composed as
/// scale -> shear -> rotation plus translation, and h5,h6 uniform in
/// +-tan(max_perspective_deg). Rejects and resamples transforms violating
/// the warpability invariants; throws RangeUnsatisfiable after 100 attempts.
SampledTransform sample_random_homography(const TransformRanges& r, Rng& rng);

}  // namespace homalign
