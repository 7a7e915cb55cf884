#include "homalign/geometry.hpp"

#include <cmath>
#include <string>

namespace homalign {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool all_finite(const std::array<double, 8>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

Grid Grid::uniform(int n) {
  if (n < 2) throw Error("Grid::uniform: n must be >= 2, got " + std::to_string(n));
  Grid g;
  g.n = n;
  g.points.reserve(static_cast<size_t>(n) * n);
  const double step = 2.0 / (n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      g.points.push_back({-1.0 + step * j, -1.0 + step * i});
    }
  }
  return g;
}

Mat23 affine_to_matrix(const AffineParams& p) {
  return {p.a1, p.a2, p.tx, p.a3, p.a4, p.ty};
}

Mat33 homography_to_matrix(const HomographyParams& p) {
  return {p.h1, p.h2, p.tx, p.h3, p.h4, p.ty, p.h5, p.h6, 1.0};
}

HomographyParams concat_affine_perspective(const AffineParams& a,
                                           const PerspectiveParams& p) {
  return {a.a1, a.a2, a.tx, a.a3, a.a4, a.ty, p.h5, p.h6};
}

Point apply_homography(const HomographyParams& p, Point pt) {
  const double denom = p.h5 * pt.x + p.h6 * pt.y + 1.0;
  if (!(denom > kApplyDenomEps)) {
    throw DegenerateDenominator("apply_homography: denominator " +
                                std::to_string(denom) + " at point (" +
                                std::to_string(pt.x) + ", " +
                                std::to_string(pt.y) + ")");
  }
  return {(p.h1 * pt.x + p.h2 * pt.y + p.tx) / denom,
          (p.h3 * pt.x + p.h4 * pt.y + p.ty) / denom};
}

std::vector<Point> transform_grid(const HomographyParams& p, const Grid& g) {
  std::vector<Point> out;
  out.reserve(g.points.size());
  for (size_t k = 0; k < g.points.size(); ++k) {
    const Point& pt = g.points[k];
    const double denom = p.h5 * pt.x + p.h6 * pt.y + 1.0;
    if (!(denom > kApplyDenomEps)) {
      const int i = g.n > 0 ? static_cast<int>(k) / g.n : 0;
      const int j = g.n > 0 ? static_cast<int>(k) % g.n : 0;
      throw DegenerateDenominator(
          "transform_grid: degenerate denominator at grid index (" +
          std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    out.push_back({(p.h1 * pt.x + p.h2 * pt.y + p.tx) / denom,
                   (p.h3 * pt.x + p.h4 * pt.y + p.ty) / denom});
  }
  return out;
}

double homography_det(const HomographyParams& p) {
  const Mat33 m = homography_to_matrix(p);
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

HomographyParams invert_homography(const HomographyParams& p) {
  const Mat33 m = homography_to_matrix(p);
  const double det = homography_det(p);
  if (!std::isfinite(det) || std::abs(det) <= kDetEps) {
    throw SingularMatrix("invert_homography: |det| = " +
                         std::to_string(std::abs(det)));
  }
  // Adjugate; the determinant cancels when rescaling entry (3,3) to 1.
  Mat33 adj;
  adj[0] = m[4] * m[8] - m[5] * m[7];
  adj[1] = m[2] * m[7] - m[1] * m[8];
  adj[2] = m[1] * m[5] - m[2] * m[4];
  adj[3] = m[5] * m[6] - m[3] * m[8];
  adj[4] = m[0] * m[8] - m[2] * m[6];
  adj[5] = m[2] * m[3] - m[0] * m[5];
  adj[6] = m[3] * m[7] - m[4] * m[6];
  adj[7] = m[1] * m[6] - m[0] * m[7];
  adj[8] = m[0] * m[4] - m[1] * m[3];
  if (std::abs(adj[8]) <= kDetEps * std::abs(det)) {
    throw SingularMatrix(
        "invert_homography: inverse cannot be rescaled to unit (3,3) entry");
  }
  const double s = adj[8];
  return {adj[0] / s, adj[1] / s, adj[2] / s, adj[3] / s,
          adj[4] / s, adj[5] / s, adj[6] / s, adj[7] / s};
}

double min_denominator_on_square(const HomographyParams& p) {
  // h5*x + h6*y + 1 is affine in (x, y); its minimum over the square lies
  // at a corner.
  double m = 1.0 + p.h5 + p.h6;
  m = std::min(m, 1.0 + p.h5 - p.h6);
  m = std::min(m, 1.0 - p.h5 + p.h6);
  m = std::min(m, 1.0 - p.h5 - p.h6);
  return m;
}

bool homography_warpable(const HomographyParams& p) {
  if (!all_finite(p.to_array())) return false;
  if (std::abs(homography_det(p)) <= kDetEps) return false;
  return min_denominator_on_square(p) > kDenomFloor;
}

double uniform_real(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

SampledTransform sample_random_homography(const TransformRanges& r, Rng& rng) {
  if (r.max_rotation_deg < 0 || r.max_shear_deg < 0 ||
      r.max_perspective_deg < 0 || r.max_translation_px < 0 ||
      r.scale_lo <= 0 || r.scale_lo > r.scale_hi || r.image_size_px < 2) {
    throw Error("sample_random_homography: invalid TransformRanges");
  }
  const double t_max = 2.0 * r.max_translation_px / r.image_size_px;
  const double p_max = std::tan(r.max_perspective_deg * kPi / 180.0);

  for (int attempt = 0; attempt < 100; ++attempt) {
    const double theta =
        uniform_real(rng, -r.max_rotation_deg, r.max_rotation_deg) * kPi / 180.0;
    const double phi =
        uniform_real(rng, -r.max_shear_deg, r.max_shear_deg) * kPi / 180.0;
    const double s = uniform_real(rng, r.scale_lo, r.scale_hi);
    const double tx = uniform_real(rng, -t_max, t_max);
    const double ty = uniform_real(rng, -t_max, t_max);

    // Linear part: scale, then shear, then rotation (M = R * Sh * S).
    const double c = std::cos(theta), sn = std::sin(theta);
    const double sh = std::tan(phi);
    AffineParams a;
    a.a1 = s * c;
    a.a2 = s * (c * sh - sn);
    a.a3 = s * sn;
    a.a4 = s * (sn * sh + c);
    a.tx = tx;
    a.ty = ty;

    PerspectiveParams persp;
    persp.h5 = uniform_real(rng, -p_max, p_max);
    persp.h6 = uniform_real(rng, -p_max, p_max);

    const HomographyParams h = concat_affine_perspective(a, persp);

    if (std::abs(a.det()) <= kDetEps) continue;
    if (std::abs(persp.h5) + std::abs(persp.h6) >= 1.0) continue;
    if (!homography_warpable(h)) continue;
    return {a, persp, h};
  }
  throw RangeUnsatisfiable(
      "sample_random_homography: no valid transform in 100 attempts");
}

}  // namespace homalign
