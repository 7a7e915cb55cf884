#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "homalign/datagen.hpp"
#include "homalign/regression.hpp"

namespace homalign {

struct KeypointSet {
  std::vector<Point> points;

  size_t count() const { return points.size(); }
};

struct PckConfig {
  std::vector<double> taus{0.05, 0.03, 0.01};
  int h = 256;
  int w = 256;
};

/// Fraction of keypoints whose images under the predicted and ground-truth
/// transforms land within tau*max(h,w) pixels of each other (strict
/// inequality). Distances are measured in pixel space via the normalized
/// coordinate map.
double pck(const KeypointSet& kp, const HomographyParams& theta_hat,
           const HomographyParams& theta_gt, const PckConfig& cfg, double tau);

struct TestRecord {
  TrainingPair pair;
  KeypointSet keypoints;
};

/// train_ranges widened by scale_up, capped where type invariants bound the
/// result (rotation at 180 deg, shear below 90, perspective so that
/// |h5|+|h6| stays clear of 1).
TransformRanges scale_ranges(const TransformRanges& r, double scale_up);

/// One record per source image: a generated pair plus n_keypoints points
/// sampled uniformly in the central 80% of the square.
std::vector<TestRecord> make_test_set(const std::vector<Image>& sources,
                                      const TransformRanges& train_ranges,
                                      double scale_up, int n_keypoints,
                                      Rng& rng);

struct EvalRow {
  std::string method;  // identity | affine | hom | ensemble
  double tau = 0.0;
  double pck = 0.0;
};

/// Runs inference-mode alignment on every record and reports PCK per method
/// and tolerance. Micro-average (total correct keypoints over total
/// keypoints) by default; macro_average switches to the mean of per-record
/// ratios.
std::vector<EvalRow> evaluate_model(const ModelState& m,
                                    const std::vector<TestRecord>& records,
                                    const PckConfig& cfg,
                                    double ensemble_weight = 0.5,
                                    bool macro_average = false);

/// TSV with header "method\ttau\tpck".
std::string render_report_tsv(const std::vector<EvalRow>& rows);
/// Aligned human-readable table.
void print_report_aligned(const std::vector<EvalRow>& rows, std::ostream& os);

}  // namespace homalign
