#include "homalign/regression.hpp"

#include <string>

namespace homalign {

namespace {

constexpr int kConv1Out = 128;
constexpr int kConv2Out = 64;
constexpr int kHidden1 = 128;
constexpr int kHidden2 = 64;

RegressionHead build_head(int dof, int fh, int fw, Rng* rng) {
  if (dof != 6 && dof != 2 && dof != 8) {
    throw Error("regression head: dof must be 2, 6 or 8");
  }
  RegressionHead head;
  head.dof = dof;
  head.fh = fh;
  head.fw = fw;
  const int cin = fh * fw;
  head.conv1 = nn::Conv2d::make(7, 7, cin, kConv1Out);
  head.conv2 = nn::Conv2d::make(5, 5, kConv1Out, kConv2Out);
  const int flat = fh * fw * kConv2Out;
  if (dof == 8) {
    head.fcs.push_back(nn::Dense::make(flat, kHidden1));
    head.fcs.push_back(nn::Dense::make(kHidden1, kHidden2));
    head.fcs.push_back(nn::Dense::make(kHidden2, dof));
  } else {
    head.fcs.push_back(nn::Dense::make(flat, dof));
  }
  if (rng) {
    nn::glorot_uniform(head.conv1.weight, 49 * cin, 49 * kConv1Out, *rng);
    nn::glorot_uniform(head.conv2.weight, 25 * kConv1Out, 25 * kConv2Out, *rng);
    for (nn::Dense& fc : head.fcs) {
      nn::glorot_uniform(fc.weight, fc.in, fc.out, *rng);
    }
  }
  return head;
}

}  // namespace

RegressionHead make_head(int dof, int fh, int fw, Rng& rng) {
  return build_head(dof, fh, fw, &rng);
}

RegressionHead make_head_zero(int dof, int fh, int fw) {
  return build_head(dof, fh, fw, nullptr);
}

HeadGrads HeadGrads::zeros_like(const RegressionHead& head) {
  HeadGrads g;
  g.dw_conv1 = nn::Tensor(head.conv1.weight.shape);
  g.db_conv1 = nn::Tensor(head.conv1.bias.shape);
  g.dw_conv2 = nn::Tensor(head.conv2.weight.shape);
  g.db_conv2 = nn::Tensor(head.conv2.bias.shape);
  for (const nn::Dense& fc : head.fcs) {
    g.dw_fc.emplace_back(fc.weight.shape);
    g.db_fc.emplace_back(fc.bias.shape);
  }
  return g;
}

std::vector<double> identity_offset(int dof) {
  switch (dof) {
    case 6: return {1, 0, 0, 0, 1, 0};
    case 2: return {0, 0};
    case 8: return {1, 0, 0, 0, 1, 0, 0, 0};
    default: throw Error("identity_offset: dof must be 2, 6 or 8");
  }
}

std::vector<double> regress_traced(const nn::Tensor& corr,
                                   const RegressionHead& head,
                                   HeadTrace& trace) {
  if (corr.shape.size() != 3 || corr.shape[0] != head.fh ||
      corr.shape[1] != head.fw || corr.shape[2] != head.fh * head.fw) {
    throw DimensionMismatch("regress: correlation map shape mismatch");
  }
  trace.x0 = corr;
  trace.z1 = nn::conv2d_forward(head.conv1, trace.x0);
  trace.p1 = nn::relu_forward(trace.z1);
  trace.z2 = nn::conv2d_forward(head.conv2, trace.p1);
  nn::Tensor r2 = nn::relu_forward(trace.z2);
  trace.flat = nn::Tensor({static_cast<int>(r2.numel())});
  trace.flat.data = r2.data;

  trace.fc_in.clear();
  trace.fc_z.clear();
  nn::Tensor cur = trace.flat;
  for (size_t i = 0; i < head.fcs.size(); ++i) {
    trace.fc_in.push_back(cur);
    nn::Tensor z = nn::dense_forward(head.fcs[i], cur);
    trace.fc_z.push_back(z);
    cur = (i + 1 < head.fcs.size()) ? nn::relu_forward(z) : z;
  }

  std::vector<double> theta = identity_offset(head.dof);
  for (int i = 0; i < head.dof; ++i) theta[i] += cur.data[i];
  return theta;
}

std::vector<double> regress(const nn::Tensor& corr, const RegressionHead& head) {
  HeadTrace trace;
  return regress_traced(corr, head, trace);
}

void head_backward(const RegressionHead& head, const HeadTrace& trace,
                   const std::vector<double>& dtheta, HeadGrads* grads,
                   nn::Tensor* dcorr) {
  nn::Tensor cur({head.dof});
  cur.data.assign(dtheta.begin(), dtheta.end());

  for (int i = static_cast<int>(head.fcs.size()) - 1; i >= 0; --i) {
    if (i + 1 < static_cast<int>(head.fcs.size())) {
      cur = nn::relu_backward(trace.fc_z[i], cur);
    }
    nn::Tensor dx;
    nn::dense_backward(head.fcs[i], trace.fc_in[i],
                       cur, grads ? &grads->dw_fc[i] : nullptr,
                       grads ? &grads->db_fc[i] : nullptr, &dx);
    cur = std::move(dx);
  }

  nn::Tensor dr2 = nn::Tensor(trace.z2.shape);
  dr2.data = cur.data;  // unflatten
  nn::Tensor dz2 = nn::relu_backward(trace.z2, dr2);
  nn::Tensor dp1;
  nn::conv2d_backward(head.conv2, trace.p1, dz2,
                      grads ? &grads->dw_conv2 : nullptr,
                      grads ? &grads->db_conv2 : nullptr, &dp1);
  nn::Tensor dz1 = nn::relu_backward(trace.z1, dp1);
  nn::conv2d_backward(head.conv1, trace.x0, dz1,
                      grads ? &grads->dw_conv1 : nullptr,
                      grads ? &grads->db_conv1 : nullptr, dcorr);
}

ModelState make_model(int input_channels, int fh, int fw, uint64_t seed) {
  Rng rng(seed);
  ModelState m;
  m.extractor = make_extractor(input_channels, rng);
  m.affine_head = make_head(6, fh, fw, rng);
  m.perspective_head = make_head(2, fh, fw, rng);
  m.homography_head = make_head(8, fh, fw, rng);
  return m;
}

ModelState make_zero_model(int input_channels, int fh, int fw) {
  ModelState m;
  m.extractor = make_extractor_zero(input_channels);
  m.affine_head = make_head_zero(6, fh, fw);
  m.perspective_head = make_head_zero(2, fh, fw);
  m.homography_head = make_head_zero(8, fh, fw);
  return m;
}

HomographyParams ensemble(const HomographyParams& hom,
                          const HomographyParams& guide, double lambda) {
  const std::array<double, 8> a = hom.to_array();
  const std::array<double, 8> b = guide.to_array();
  std::array<double, 8> out;
  for (int i = 0; i < 8; ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return HomographyParams::from_array(out);
}

namespace {

AffineParams to_affine(const std::vector<double>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

PerspectiveParams to_perspective(const std::vector<double>& v) {
  return {v[0], v[1]};
}

HomographyParams to_homography(const std::vector<double>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

nn::Tensor features_of(const Image& img, const ModelState& m) {
  return normalize_features(extract_features(img, m.extractor));
}

}  // namespace

PipelineOutput forward_pipeline(const Image& IS, const Image& ITa,
                                const Image& ITh, const ModelState& m,
                                double ensemble_weight) {
  if (!IS.same_dims(ITa) || !IS.same_dims(ITh)) {
    throw DimensionMismatch("forward_pipeline: images must share dims");
  }
  const nn::Tensor fS = features_of(IS, m);
  const nn::Tensor fTa = features_of(ITa, m);
  const nn::Tensor fTh = features_of(ITh, m);

  PipelineOutput out;
  out.theta_aff = to_affine(regress(correlation_map(fS, fTa), m.affine_head));
  out.theta_pers =
      to_perspective(regress(correlation_map(fTa, fTh), m.perspective_head));
  out.theta_hom =
      to_homography(regress(correlation_map(fS, fTh), m.homography_head));
  out.theta_guide = concat_affine_perspective(out.theta_aff, out.theta_pers);
  out.theta_en = ensemble(out.theta_hom, out.theta_guide, ensemble_weight);
  return out;
}

PipelineOutput infer_alignment(const Image& source, const Image& target,
                               const ModelState& m, double ensemble_weight) {
  if (!source.same_dims(target)) {
    throw DimensionMismatch("infer_alignment: images must share dims");
  }
  const nn::Tensor fS = features_of(source, m);
  const nn::Tensor fT = features_of(target, m);

  PipelineOutput out;
  out.theta_aff = to_affine(regress(correlation_map(fS, fT), m.affine_head));

  const HomographyParams aff_lift =
      concat_affine_perspective(out.theta_aff, PerspectiveParams{});
  const Image warped = warp_image(source, aff_lift);
  const nn::Tensor fW = features_of(warped, m);

  out.theta_pers =
      to_perspective(regress(correlation_map(fW, fT), m.perspective_head));
  out.theta_hom =
      to_homography(regress(correlation_map(fS, fT), m.homography_head));
  out.theta_guide = concat_affine_perspective(out.theta_aff, out.theta_pers);
  out.theta_en = ensemble(out.theta_hom, out.theta_guide, ensemble_weight);
  return out;
}

}  // namespace homalign
