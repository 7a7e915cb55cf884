// Independent re-evaluations used as test oracles. These deliberately go
// through the explicit 3x3 homogeneous matrix product rather than the
// library's direct formula, so the two routes can be compared.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "homalign/geometry.hpp"

namespace oracles {

struct Pt {
  double x, y;
};

inline Pt apply_matrix(const std::array<double, 9>& m, double x, double y) {
  const double hx = m[0] * x + m[1] * y + m[2] * 1.0;
  const double hy = m[3] * x + m[4] * y + m[5] * 1.0;
  const double hz = m[6] * x + m[7] * y + m[8] * 1.0;
  return {hx / hz, hy / hz};
}

inline Pt apply(const homalign::HomographyParams& p, double x, double y) {
  return apply_matrix({p.h1, p.h2, p.tx, p.h3, p.h4, p.ty, p.h5, p.h6, 1.0},
                      x, y);
}

inline double grid_loss(const homalign::HomographyParams& pred,
                        const homalign::HomographyParams& gt, int n) {
  const double step = 2.0 / (n - 1);
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = -1.0 + step * j;
      const double y = -1.0 + step * i;
      const Pt a = apply(pred, x, y);
      const Pt b = apply(gt, x, y);
      sum += (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
      ++count;
    }
  }
  return sum / count;
}

inline double pck(const std::vector<homalign::Point>& points,
                  const homalign::HomographyParams& pred,
                  const homalign::HomographyParams& gt, int h, int w,
                  double tau) {
  const double tol = tau * (h > w ? h : w);
  int good = 0;
  for (const homalign::Point& p : points) {
    const Pt a = apply(pred, p.x, p.y);
    const Pt b = apply(gt, p.x, p.y);
    const double ax = (a.x + 1.0) * (w - 1) / 2.0;
    const double ay = (a.y + 1.0) * (h - 1) / 2.0;
    const double bx = (b.x + 1.0) * (w - 1) / 2.0;
    const double by = (b.y + 1.0) * (h - 1) / 2.0;
    const double dist = std::hypot(ax - bx, ay - by);
    if (dist < tol) ++good;
  }
  return static_cast<double>(good) / points.size();
}

/// Moderate random transform for property tests; always warpable.
inline homalign::HomographyParams random_valid(homalign::Rng& rng) {
  homalign::TransformRanges r;
  r.max_rotation_deg = 60.0;
  r.max_shear_deg = 20.0;
  r.max_perspective_deg = 10.0;
  r.max_translation_px = 40.0;
  r.image_size_px = 256;
  r.scale_lo = 0.8;
  r.scale_hi = 1.2;
  return homalign::sample_random_homography(r, rng).homography;
}

}  // namespace oracles
