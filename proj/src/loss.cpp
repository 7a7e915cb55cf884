#include "homalign/loss.hpp"

namespace homalign {

HomographyParams lift_affine(const AffineParams& a) {
  return concat_affine_perspective(a, PerspectiveParams{});
}

double grid_loss(const HomographyParams& pred, const HomographyParams& gt,
                 const Grid& g) {
  const std::vector<Point> tp = transform_grid(pred, g);
  const std::vector<Point> tg = transform_grid(gt, g);
  double sum = 0.0;
  for (size_t i = 0; i < tp.size(); ++i) {
    const double dx = tp[i].x - tg[i].x;
    const double dy = tp[i].y - tg[i].y;
    sum += dx * dx + dy * dy;
  }
  return sum / static_cast<double>(tp.size());
}

std::array<double, 8> grid_loss_grad(const HomographyParams& pred,
                                     const HomographyParams& gt,
                                     const Grid& g) {
  std::array<double, 8> grad{};
  const std::vector<Point> tg = transform_grid(gt, g);
  for (size_t i = 0; i < g.points.size(); ++i) {
    const double x = g.points[i].x, y = g.points[i].y;
    const double denom = pred.h5 * x + pred.h6 * y + 1.0;
    if (!(denom > kApplyDenomEps)) {
      throw DegenerateDenominator("grid_loss_grad: degenerate denominator");
    }
    const double X = (pred.h1 * x + pred.h2 * y + pred.tx) / denom;
    const double Y = (pred.h3 * x + pred.h4 * y + pred.ty) / denom;
    const double ex = X - tg[i].x;
    const double ey = Y - tg[i].y;
    // dX/dh1 = x/denom, dX/dh5 = -X*x/denom, etc.
    grad[0] += 2.0 * ex * x / denom;
    grad[1] += 2.0 * ex * y / denom;
    grad[2] += 2.0 * ex / denom;
    grad[3] += 2.0 * ey * x / denom;
    grad[4] += 2.0 * ey * y / denom;
    grad[5] += 2.0 * ey / denom;
    const double mix = ex * X + ey * Y;
    grad[6] += -2.0 * mix * x / denom;
    grad[7] += -2.0 * mix * y / denom;
  }
  const double inv_n = 1.0 / static_cast<double>(g.points.size());
  for (double& v : grad) v *= inv_n;
  return grad;
}

double perspective_mse(const PerspectiveParams& pred,
                       const PerspectiveParams& gt) {
  const double d5 = pred.h5 - gt.h5;
  const double d6 = pred.h6 - gt.h6;
  return (d5 * d5 + d6 * d6) / 2.0;
}

std::array<double, 2> perspective_mse_grad(const PerspectiveParams& pred,
                                           const PerspectiveParams& gt) {
  return {pred.h5 - gt.h5, pred.h6 - gt.h6};
}

LossBreakdown total_loss(const PipelineOutput& out, const PairLabels& gt,
                         const Grid& g, const LossWeights& w) {
  LossBreakdown b;
  b.l_aff = grid_loss(lift_affine(out.theta_aff), lift_affine(gt.affine), g);
  b.l_pers = perspective_mse(out.theta_pers, gt.perspective);
  b.l_hom = grid_loss(out.theta_hom, gt.homography, g);
  b.l_en = grid_loss(out.theta_en, gt.homography, g);
  b.total = w.alpha * b.l_aff + w.beta * b.l_pers + w.gamma * b.l_hom +
            w.delta * b.l_en;
  return b;
}

}  // namespace homalign
