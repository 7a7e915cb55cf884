#include "homalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "homalign/image.hpp"
#include "homalign/loss.hpp"

namespace homalign {

namespace {

size_t pck_correct_count(const KeypointSet& kp,
                         const HomographyParams& theta_hat,
                         const HomographyParams& theta_gt,
                         const PckConfig& cfg, double tau) {
  const double tol = tau * std::max(cfg.h, cfg.w);
  size_t correct = 0;
  for (const Point& p : kp.points) {
    const Point a = apply_homography(theta_hat, p);
    const Point b = apply_homography(theta_gt, p);
    const double dx = x_to_col(a.x, cfg.w) - x_to_col(b.x, cfg.w);
    const double dy = y_to_row(a.y, cfg.h) - y_to_row(b.y, cfg.h);
    if (std::sqrt(dx * dx + dy * dy) < tol) ++correct;
  }
  return correct;
}

}  // namespace

double pck(const KeypointSet& kp, const HomographyParams& theta_hat,
           const HomographyParams& theta_gt, const PckConfig& cfg,
           double tau) {
  if (kp.points.empty()) throw Error("pck: keypoint set is empty");
  return static_cast<double>(pck_correct_count(kp, theta_hat, theta_gt, cfg, tau)) /
         static_cast<double>(kp.points.size());
}

TransformRanges scale_ranges(const TransformRanges& r, double scale_up) {
  TransformRanges s = r;
  s.max_rotation_deg = std::min(180.0, r.max_rotation_deg * scale_up);
  s.max_shear_deg = std::min(85.0, r.max_shear_deg * scale_up);
  // The perspective invariant needs |h5|+|h6| < 1, i.e. 2*tan(deg) < 1,
  // with extra room for the denominator floor.
  s.max_perspective_deg =
      std::min(25.0, r.max_perspective_deg * scale_up);
  s.max_translation_px = r.max_translation_px * scale_up;
  s.scale_lo = std::max(0.05, 1.0 - (1.0 - r.scale_lo) * scale_up);
  s.scale_hi = 1.0 + (r.scale_hi - 1.0) * scale_up;
  return s;
}

std::vector<TestRecord> make_test_set(const std::vector<Image>& sources,
                                      const TransformRanges& train_ranges,
                                      double scale_up, int n_keypoints,
                                      Rng& rng) {
  if (scale_up < 1.0) throw Error("make_test_set: scale_up must be >= 1");
  if (n_keypoints < 1) throw Error("make_test_set: n_keypoints must be >= 1");
  const TransformRanges ranges = scale_ranges(train_ranges, scale_up);
  std::vector<TestRecord> out;
  out.reserve(sources.size());
  for (const Image& src : sources) {
    TestRecord rec;
    rec.pair = generate_pair(src, ranges, rng);
    rec.keypoints.points.reserve(n_keypoints);
    for (int k = 0; k < n_keypoints; ++k) {
      const double x = uniform_real(rng, -0.8, 0.8);
      const double y = uniform_real(rng, -0.8, 0.8);
      rec.keypoints.points.push_back({x, y});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<EvalRow> evaluate_model(const ModelState& m,
                                    const std::vector<TestRecord>& records,
                                    const PckConfig& cfg,
                                    double ensemble_weight,
                                    bool macro_average) {
  if (records.empty()) throw EmptyDataset("evaluate_model: no test records");

  const std::vector<std::string> methods = {"identity", "affine", "hom",
                                            "ensemble"};
  // correct[method][tau] and totals, or per-record ratios for macro.
  std::vector<std::vector<double>> ratio_sum(methods.size(),
                                             std::vector<double>(cfg.taus.size(), 0.0));
  std::vector<std::vector<size_t>> correct(methods.size(),
                                           std::vector<size_t>(cfg.taus.size(), 0));
  size_t total_points = 0;

  for (const TestRecord& rec : records) {
    const PipelineOutput out = infer_alignment(
        rec.pair.source, rec.pair.homography_target, m, ensemble_weight);
    const HomographyParams thetas[4] = {
        HomographyParams{},                // identity baseline
        lift_affine(out.theta_aff),
        out.theta_hom,
        out.theta_en,
    };
    total_points += rec.keypoints.count();
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      for (size_t ti = 0; ti < cfg.taus.size(); ++ti) {
        const size_t n = pck_correct_count(rec.keypoints, thetas[mi],
                                           rec.pair.gt_homography, cfg,
                                           cfg.taus[ti]);
        correct[mi][ti] += n;
        ratio_sum[mi][ti] +=
            static_cast<double>(n) / static_cast<double>(rec.keypoints.count());
      }
    }
  }

  std::vector<EvalRow> rows;
  for (size_t mi = 0; mi < methods.size(); ++mi) {
    for (size_t ti = 0; ti < cfg.taus.size(); ++ti) {
      EvalRow row;
      row.method = methods[mi];
      row.tau = cfg.taus[ti];
      row.pck = macro_average
                    ? ratio_sum[mi][ti] / static_cast<double>(records.size())
                    : static_cast<double>(correct[mi][ti]) /
                          static_cast<double>(total_points);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string render_report_tsv(const std::vector<EvalRow>& rows) {
  std::string out = "method\ttau\tpck\n";
  char buf[96];
  for (const EvalRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%g\t%.6f\n", r.method.c_str(), r.tau,
                  r.pck);
    out += buf;
  }
  return out;
}

void print_report_aligned(const std::vector<EvalRow>& rows, std::ostream& os) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-10s %8s %8s\n", "method", "tau", "pck");
  os << buf;
  for (const EvalRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %8g %8.4f\n", r.method.c_str(),
                  r.tau, r.pck);
    os << buf;
  }
}

}  // namespace homalign
