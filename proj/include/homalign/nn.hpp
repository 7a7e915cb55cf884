#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "homalign/errors.hpp"
#include "homalign/geometry.hpp"

namespace homalign::nn {

/// 64-byte-aligned storage: every tensor base sees the same SIMD alignment,
/// so vectorized kernels sum in the same order on every run and training
/// stays bit-reproducible.
template <typename T>
struct Aligned64Allocator {
  using value_type = T;

  Aligned64Allocator() = default;
  template <typename U>
  Aligned64Allocator(const Aligned64Allocator<U>&) {}

  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
  }
  void deallocate(T* p, size_t n) {
    ::operator delete(p, n * sizeof(T), std::align_val_t(64));
  }
  bool operator==(const Aligned64Allocator&) const { return true; }
  bool operator!=(const Aligned64Allocator&) const { return false; }
};

using AlignedVec = std::vector<double, Aligned64Allocator<double>>;

/// Dense row-major tensor of doubles. Spatial tensors use HWC layout.
struct Tensor {
  std::vector<int> shape;
  AlignedVec data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }
  size_t numel() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// 2-D convolution, stride 1, zero "same" padding (odd kernels only).
/// Weight is stored as a [kh*kw*cin, cout] matrix so forward is one GEMM
/// over im2col columns; shape metadata keeps the logical [kh,kw,cin,cout].
struct Conv2d {
  int kh = 0, kw = 0, cin = 0, cout = 0;
  Tensor weight;  // shape {kh, kw, cin, cout}
  Tensor bias;    // shape {cout}

  static Conv2d make(int kh, int kw, int cin, int cout);
};

/// Fully connected layer; weight shape {in, out}.
struct Dense {
  int in = 0, out = 0;
  Tensor weight;
  Tensor bias;

  static Dense make(int in, int out);
};

// ---- forward / backward kernels ------------------------------------------

/// x: {h,w,cin} -> {h,w,cout}
Tensor conv2d_forward(const Conv2d& conv, const Tensor& x);
/// Accumulates into dw/db when given; writes dx when given (not accumulated).
void conv2d_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy,
                     Tensor* dw, Tensor* db, Tensor* dx);

Tensor relu_forward(const Tensor& x);
/// Gradient passes where the pre-activation x is > 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// 2x2 max pooling, stride 2; ties resolve to the first index in row-major
/// scan order. argmax records the flat input index feeding each output.
Tensor maxpool2_forward(const Tensor& x, std::vector<int>* argmax);
Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax,
                         const std::vector<int>& input_shape);

/// Per-location L2 normalization over channels; zero vectors stay zero.
Tensor l2_normalize_forward(const Tensor& x);
Tensor l2_normalize_backward(const Tensor& x, const Tensor& dy);

/// Dense correlation: out(i,j,k) = dot(fT(i,j,:), fS at flat location k).
/// fS, fT: {h,w,c} with identical shapes -> {h,w,h*w}.
Tensor correlation_forward(const Tensor& fS, const Tensor& fT);
/// Accumulates into dfS/dfT when given.
void correlation_backward(const Tensor& fS, const Tensor& fT,
                          const Tensor& dcorr, Tensor* dfS, Tensor* dfT);

/// x: flat {in} -> {out}
Tensor dense_forward(const Dense& fc, const Tensor& x);
void dense_backward(const Dense& fc, const Tensor& x, const Tensor& dy,
                    Tensor* dw, Tensor* db, Tensor* dx);

/// Uniform init in +-sqrt(6/(fan_in+fan_out)).
void glorot_uniform(Tensor& w, int fan_in, int fan_out, Rng& rng);

}  // namespace homalign::nn
