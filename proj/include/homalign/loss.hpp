#pragma once

#include "homalign/geometry.hpp"
#include "homalign/regression.hpp"

namespace homalign {

/// Weights (alpha, beta, gamma, delta) for the affine, perspective,
/// homography and ensemble terms. Defaults (0.3, 0.4, 0.1, 0.2).
struct LossWeights {
  double alpha = 0.3;
  double beta = 0.4;
  double gamma = 0.1;
  double delta = 0.2;
};

struct LossBreakdown {
  double l_aff = 0.0;
  double l_pers = 0.0;
  double l_hom = 0.0;
  double l_en = 0.0;
  double total = 0.0;
};

/// Ground-truth labels of one training pair.
struct PairLabels {
  AffineParams affine;
  PerspectiveParams perspective;
  HomographyParams homography;
};

/// Embeds an affine transform as a homography with zero perspective, so one
/// grid-loss implementation serves the affine, homography and ensemble terms.
HomographyParams lift_affine(const AffineParams& a);

/// Mean over the grid of squared Euclidean distances between the two
/// transformed point sets.
double grid_loss(const HomographyParams& pred, const HomographyParams& gt,
                 const Grid& g);

/// Analytic d(grid_loss)/d(pred parameters).
std::array<double, 8> grid_loss_grad(const HomographyParams& pred,
                                     const HomographyParams& gt,
                                     const Grid& g);

/// ((h5_hat - h5)^2 + (h6_hat - h6)^2) / 2
double perspective_mse(const PerspectiveParams& pred,
                       const PerspectiveParams& gt);
std::array<double, 2> perspective_mse_grad(const PerspectiveParams& pred,
                                           const PerspectiveParams& gt);

/// l_aff on lifted affine params, l_pers as MSE, l_hom and l_en as grid
/// losses against the ground-truth homography; total is the weighted sum.
LossBreakdown total_loss(const PipelineOutput& out, const PairLabels& gt,
                         const Grid& g, const LossWeights& w);

}  // namespace homalign
