#include "homalign/features.hpp"

#include <string>

namespace homalign {

namespace {

constexpr int kChannels1 = 16;
constexpr int kChannels2 = 32;
constexpr int kChannels3 = 64;

nn::Conv2d make_conv(int cin, int cout, Rng* rng) {
  nn::Conv2d conv = nn::Conv2d::make(3, 3, cin, cout);
  if (rng) {
    nn::glorot_uniform(conv.weight, 9 * cin, 9 * cout, *rng);
    // Slightly positive bias: zero-filled warp borders otherwise leave whole
    // regions exactly on the ReLU kink, where the loss is not differentiable.
    for (double& b : conv.bias.data) b = 0.01;
  }
  return conv;
}

}  // namespace

ExtractorWeights make_extractor(int input_channels, Rng& rng) {
  ExtractorWeights w;
  w.conv1 = make_conv(input_channels, kChannels1, &rng);
  w.conv2 = make_conv(kChannels1, kChannels2, &rng);
  w.conv3 = make_conv(kChannels2, kChannels3, &rng);
  return w;
}

ExtractorWeights make_extractor_zero(int input_channels) {
  ExtractorWeights w;
  w.conv1 = make_conv(input_channels, kChannels1, nullptr);
  w.conv2 = make_conv(kChannels1, kChannels2, nullptr);
  w.conv3 = make_conv(kChannels2, kChannels3, nullptr);
  return w;
}

ExtractorGrads ExtractorGrads::zeros_like(const ExtractorWeights& w) {
  ExtractorGrads g;
  g.dw1 = nn::Tensor(w.conv1.weight.shape);
  g.db1 = nn::Tensor(w.conv1.bias.shape);
  g.dw2 = nn::Tensor(w.conv2.weight.shape);
  g.db2 = nn::Tensor(w.conv2.bias.shape);
  g.dw3 = nn::Tensor(w.conv3.weight.shape);
  g.db3 = nn::Tensor(w.conv3.bias.shape);
  return g;
}

nn::Tensor image_to_tensor(const Image& img) {
  nn::Tensor t({img.h, img.w, img.d});
  t.data.assign(img.data.begin(), img.data.end());
  return t;
}

nn::Tensor extract_features_traced(const nn::Tensor& x,
                                   const ExtractorWeights& w,
                                   ExtractorTrace& trace) {
  trace.x0 = x;
  trace.z1 = nn::conv2d_forward(w.conv1, trace.x0);
  nn::Tensor r1 = nn::relu_forward(trace.z1);
  trace.r1_shape = r1.shape;
  trace.p1 = nn::maxpool2_forward(r1, &trace.arg1);

  trace.z2 = nn::conv2d_forward(w.conv2, trace.p1);
  nn::Tensor r2 = nn::relu_forward(trace.z2);
  trace.r2_shape = r2.shape;
  trace.p2 = nn::maxpool2_forward(r2, &trace.arg2);

  trace.z3 = nn::conv2d_forward(w.conv3, trace.p2);
  nn::Tensor r3 = nn::relu_forward(trace.z3);
  trace.r3_shape = r3.shape;
  trace.out = nn::maxpool2_forward(r3, &trace.arg3);
  return trace.out;
}

nn::Tensor extract_features(const Image& img, const ExtractorWeights& w) {
  if (img.h % 8 != 0 || img.w % 8 != 0) {
    throw DimensionNotDivisible("extract_features: image dims " +
                                std::to_string(img.h) + "x" +
                                std::to_string(img.w) +
                                " not divisible by 8");
  }
  if (img.d != w.input_channels()) {
    throw DimensionMismatch("extract_features: image has " +
                            std::to_string(img.d) + " channels, extractor expects " +
                            std::to_string(w.input_channels()));
  }
  ExtractorTrace trace;
  return extract_features_traced(image_to_tensor(img), w, trace);
}

void extractor_backward(const ExtractorWeights& w, const ExtractorTrace& trace,
                        const nn::Tensor& dout, ExtractorGrads& grads) {
  nn::Tensor dr3 = nn::maxpool2_backward(dout, trace.arg3, trace.r3_shape);
  nn::Tensor dz3 = nn::relu_backward(trace.z3, dr3);
  nn::Tensor dp2;
  nn::conv2d_backward(w.conv3, trace.p2, dz3, &grads.dw3, &grads.db3, &dp2);

  nn::Tensor dr2 = nn::maxpool2_backward(dp2, trace.arg2, trace.r2_shape);
  nn::Tensor dz2 = nn::relu_backward(trace.z2, dr2);
  nn::Tensor dp1;
  nn::conv2d_backward(w.conv2, trace.p1, dz2, &grads.dw2, &grads.db2, &dp1);

  nn::Tensor dr1 = nn::maxpool2_backward(dp1, trace.arg1, trace.r1_shape);
  nn::Tensor dz1 = nn::relu_backward(trace.z1, dr1);
  nn::conv2d_backward(w.conv1, trace.x0, dz1, &grads.dw1, &grads.db1, nullptr);
}

nn::Tensor normalize_features(const nn::Tensor& f) {
  return nn::l2_normalize_forward(f);
}

nn::Tensor correlation_map(const nn::Tensor& fS, const nn::Tensor& fT) {
  return nn::correlation_forward(fS, fT);
}

}  // namespace homalign
