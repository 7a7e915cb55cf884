#include "homalign/image.hpp"

#include <cmath>
#include <string>

namespace homalign {

namespace {

// Denormalized coordinates within this distance of a pixel center are
// snapped onto it, so integer-offset warps (including identity) reproduce
// source pixels bit-exactly instead of mixing in 1e-16-weighted neighbors.
constexpr double kCenterSnap = 1e-9;

double snap(double v) {
  const double r = std::nearbyint(v);
  return std::abs(v - r) < kCenterSnap ? r : v;
}

}  // namespace

std::array<double, 3> bilinear_sample(const Image& img, Point pt) {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  const double px = snap(x_to_col(pt.x, img.w));
  const double py = snap(y_to_row(pt.y, img.h));
  const double fx0 = std::floor(px);
  const double fy0 = std::floor(py);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = px - fx0;
  const double ay = py - fy0;
  const double wgt[4] = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay),
                         (1.0 - ax) * ay, ax * ay};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (wgt[k] == 0.0) continue;
    if (xs[k] < 0 || xs[k] >= img.w || ys[k] < 0 || ys[k] >= img.h) continue;
    for (int ch = 0; ch < img.d; ++ch) {
      out[ch] += wgt[k] * img.at(ys[k], xs[k], ch);
    }
  }
  return out;
}

Image warp_image(const Image& img, const HomographyParams& p) {
  const HomographyParams inv = invert_homography(p);
  Image out(img.h, img.w, img.d);
  for (int r = 0; r < img.h; ++r) {
    const double y = row_to_y(r, img.h);
    for (int c = 0; c < img.w; ++c) {
      const double x = col_to_x(c, img.w);
      const double denom = inv.h5 * x + inv.h6 * y + 1.0;
      if (!(denom > kApplyDenomEps)) continue;  // behind the horizon: fill 0
      const Point src{(inv.h1 * x + inv.h2 * y + inv.tx) / denom,
                      (inv.h3 * x + inv.h4 * y + inv.ty) / denom};
      const std::array<double, 3> v = bilinear_sample(img, src);
      for (int ch = 0; ch < img.d; ++ch) out.at(r, c, ch) = v[ch];
    }
  }
  return out;
}

Image checkerboard_overlay(const Image& a, const Image& b, int tiles) {
  if (!a.same_dims(b)) {
    throw DimensionMismatch("checkerboard_overlay: images are " +
                            std::to_string(a.h) + "x" + std::to_string(a.w) +
                            "x" + std::to_string(a.d) + " vs " +
                            std::to_string(b.h) + "x" + std::to_string(b.w) +
                            "x" + std::to_string(b.d));
  }
  if (tiles < 1) throw Error("checkerboard_overlay: tiles must be >= 1");
  const int th = (a.h + tiles - 1) / tiles;
  const int tw = (a.w + tiles - 1) / tiles;
  Image out(a.h, a.w, a.d);
  for (int r = 0; r < a.h; ++r) {
    for (int c = 0; c < a.w; ++c) {
      const bool from_a = ((r / th) + (c / tw)) % 2 == 0;
      const Image& src = from_a ? a : b;
      for (int ch = 0; ch < a.d; ++ch) out.at(r, c, ch) = src.at(r, c, ch);
    }
  }
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 2 || out_w < 2) throw Error("resize_bilinear: output dims must be >= 2");
  Image out(out_h, out_w, img.d);
  for (int r = 0; r < out_h; ++r) {
    const double y = row_to_y(r, out_h);
    for (int c = 0; c < out_w; ++c) {
      const double x = col_to_x(c, out_w);
      const std::array<double, 3> v = bilinear_sample(img, {x, y});
      for (int ch = 0; ch < img.d; ++ch) out.at(r, c, ch) = v[ch];
    }
  }
  return out;
}

}  // namespace homalign
