#pragma once

#include <array>
#include <vector>

#include "homalign/geometry.hpp"

namespace homalign {

/// Dense h x w x d raster of intensities in [0,1], row-major, d in {1,3}.
struct Image {
  int h = 0;
  int w = 0;
  int d = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h_, int w_, int d_, double fill = 0.0)
      : h(h_), w(w_), d(d_),
        data(static_cast<size_t>(h_) * w_ * d_, fill) {}

  double& at(int r, int c, int ch) {
    return data[(static_cast<size_t>(r) * w + c) * d + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<size_t>(r) * w + c) * d + ch];
  }
  bool same_dims(const Image& o) const {
    return h == o.h && w == o.w && d == o.d;
  }
};

// Pixel <-> normalized coordinate maps (image spans [-1,1] on each axis).
inline double col_to_x(int c, int w) { return 2.0 * c / (w - 1) - 1.0; }
inline double row_to_y(int r, int h) { return 2.0 * r / (h - 1) - 1.0; }
inline double x_to_col(double x, int w) { return (x + 1.0) * (w - 1) / 2.0; }
inline double y_to_row(double y, int h) { return (y + 1.0) * (h - 1) / 2.0; }

/// Bilinear interpolation at a normalized point; pixels outside the image
/// contribute the fill value 0. Channels beyond img.d are returned as 0.
std::array<double, 3> bilinear_sample(const Image& img, Point pt);

/// Inverse warping: every output pixel samples the source at the
/// inverse-transformed location. Output dims equal input dims.
Image warp_image(const Image& img, const HomographyParams& p);

/// Alternating tiles x tiles blocks taken from a and b; block (0,0) from a.
/// Non-square sizes use ceil-division tile extents.
Image checkerboard_overlay(const Image& a, const Image& b, int tiles);

/// Bilinear resampling to a new size (plumbing for mismatched sources).
Image resize_bilinear(const Image& img, int out_h, int out_w);

}  // namespace homalign
