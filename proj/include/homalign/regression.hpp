#pragma once

#include <set>
#include <vector>

#include "homalign/features.hpp"

namespace homalign {

/// Regression network mapping a correlation volume to transform parameters:
/// conv 7x7 (h'*w' -> 128) + ReLU, conv 5x5 (128 -> 64) + ReLU, then fully
/// connected layers to dof outputs. The 8-DoF head carries two extra hidden
/// fully connected layers (128 and 64 units, ReLU).
struct RegressionHead {
  int dof = 0;
  int fh = 0, fw = 0;  // expected correlation-map spatial dims
  nn::Conv2d conv1;
  nn::Conv2d conv2;
  std::vector<nn::Dense> fcs;
};

RegressionHead make_head(int dof, int fh, int fw, Rng& rng);
RegressionHead make_head_zero(int dof, int fh, int fw);

struct HeadTrace {
  nn::Tensor x0;        // correlation input
  nn::Tensor z1, z2;    // conv pre-activations
  nn::Tensor p1;        // post-ReLU conv1 output (conv2 input)
  nn::Tensor flat;      // flattened conv2 post-ReLU
  std::vector<nn::Tensor> fc_in;  // input to each fc
  std::vector<nn::Tensor> fc_z;   // fc pre-activations
};

struct HeadGrads {
  nn::Tensor dw_conv1, db_conv1, dw_conv2, db_conv2;
  std::vector<nn::Tensor> dw_fc, db_fc;

  static HeadGrads zeros_like(const RegressionHead& head);
};

/// Raw network output plus the identity offset for the head's DoF
/// (affine [1,0,0,0,1,0], perspective [0,0], homography [1,0,0,0,1,0,0,0]),
/// so a zero-weight head regresses the identity transform.
std::vector<double> regress(const nn::Tensor& corr, const RegressionHead& head);
std::vector<double> regress_traced(const nn::Tensor& corr,
                                   const RegressionHead& head,
                                   HeadTrace& trace);
/// dtheta has length dof; accumulates weight grads, optionally writes the
/// gradient w.r.t. the correlation input.
void head_backward(const RegressionHead& head, const HeadTrace& trace,
                   const std::vector<double>& dtheta, HeadGrads* grads,
                   nn::Tensor* dcorr);

std::vector<double> identity_offset(int dof);

enum class Component { Extractor, AffineHead, PerspectiveHead, HomographyHead };

/// All trainable weights: shared feature extractor plus the three heads.
struct ModelState {
  ExtractorWeights extractor;
  RegressionHead affine_head;
  RegressionHead perspective_head;
  RegressionHead homography_head;
  std::set<Component> frozen;
};

/// Fresh Glorot-initialized model for inputs with the given channel count
/// whose extracted feature maps are fh x fw.
ModelState make_model(int input_channels, int fh, int fw, uint64_t seed);
/// Zero weights everywhere; the pipeline then outputs identity transforms.
ModelState make_zero_model(int input_channels, int fh, int fw);

struct PipelineOutput {
  AffineParams theta_aff;
  PerspectiveParams theta_pers;
  HomographyParams theta_hom;
  HomographyParams theta_guide;  // concat(theta_aff, theta_pers)
  HomographyParams theta_en;     // ensemble of theta_hom and theta_guide
};

/// Blend of the directly regressed homography with the guide:
/// lambda*hom + (1-lambda)*guide, elementwise; lambda 0.5 is the mean.
HomographyParams ensemble(const HomographyParams& hom,
                          const HomographyParams& guide, double lambda = 0.5);

/// Training-mode forward over a (source, affine target, homography target)
/// triplet: affine from corr(F(IS),F(ITa)), perspective from
/// corr(F(ITa),F(ITh)), homography from corr(F(IS),F(ITh)).
PipelineOutput forward_pipeline(const Image& IS, const Image& ITa,
                                const Image& ITh, const ModelState& m,
                                double ensemble_weight = 0.5);

/// Inference over a plain (source, target) pair: the affine target is
/// synthesized by warping the source with the regressed affine parameters
/// before the perspective stage.
PipelineOutput infer_alignment(const Image& source, const Image& target,
                               const ModelState& m,
                               double ensemble_weight = 0.5);

}  // namespace homalign
