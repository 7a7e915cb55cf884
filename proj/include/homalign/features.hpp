#pragma once

#include "homalign/image.hpp"
#include "homalign/nn.hpp"

namespace homalign {

/// Three conv blocks (3x3 stride 1, zero padding, ReLU, 2x2 max pool),
/// channels d -> 16 -> 32 -> 64; total downsampling factor 8.
struct ExtractorWeights {
  nn::Conv2d conv1, conv2, conv3;

  int input_channels() const { return conv1.cin; }
};

/// Glorot-initialized extractor (biases zero).
ExtractorWeights make_extractor(int input_channels, Rng& rng);
/// All-zero weights; produces all-zero feature maps.
ExtractorWeights make_extractor_zero(int input_channels);

/// Activations recorded by a forward pass, consumed by the backward pass.
struct ExtractorTrace {
  nn::Tensor x0;            // input
  nn::Tensor z1, z2, z3;    // conv pre-activations
  nn::Tensor p1, p2;        // pooled block outputs feeding the next conv
  std::vector<int> arg1, arg2, arg3;  // pooling argmax
  std::vector<int> r1_shape, r2_shape, r3_shape;
  nn::Tensor out;           // pooled output of block 3
};

struct ExtractorGrads {
  nn::Tensor dw1, db1, dw2, db2, dw3, db3;

  static ExtractorGrads zeros_like(const ExtractorWeights& w);
};

nn::Tensor image_to_tensor(const Image& img);

/// F: {h,w,d} image -> {h/8, w/8, 64} feature map.
/// Throws DimensionNotDivisible unless h and w are divisible by 8.
nn::Tensor extract_features(const Image& img, const ExtractorWeights& w);
nn::Tensor extract_features_traced(const nn::Tensor& x,
                                   const ExtractorWeights& w,
                                   ExtractorTrace& trace);
/// Accumulates weight gradients; returns nothing for the input (images are
/// leaves). dout is the gradient at the extractor output.
void extractor_backward(const ExtractorWeights& w, const ExtractorTrace& trace,
                        const nn::Tensor& dout, ExtractorGrads& grads);

/// Per-location L2 normalization; zero vectors are left zero.
nn::Tensor normalize_features(const nn::Tensor& f);

/// Dense cosine-similarity volume between two normalized feature maps:
/// entry (i,j,k) = dot(fT(i,j,:), fS(flat location k,:)).
nn::Tensor correlation_map(const nn::Tensor& fS, const nn::Tensor& fT);

}  // namespace homalign
