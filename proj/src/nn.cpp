#include "homalign/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace homalign::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionMismatch(msg);
}

// Gathers padded patches: rows index output positions (h*w), columns index
// (dr, dc, ci). Out-of-image taps stay zero.
void im2col(const Tensor& x, int kh, int kw, MatRM& cols) {
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  const int ph = kh / 2, pw = kw / 2;
  cols.setZero(h * w, kh * kw * c);
  for (int r = 0; r < h; ++r) {
    for (int dr = 0; dr < kh; ++dr) {
      const int sr = r + dr - ph;
      if (sr < 0 || sr >= h) continue;
      for (int dc = 0; dc < kw; ++dc) {
        // Contiguous run of columns col0..col1 with valid source column.
        const int c0 = std::max(0, pw - dc);
        const int c1 = std::min(w, w + pw - dc);
        if (c0 >= c1) continue;
        const double* src = &x.data[(static_cast<size_t>(sr) * w + (c0 + dc - pw)) * c];
        for (int cc = c0; cc < c1; ++cc) {
          double* dst = cols.data() +
                        (static_cast<size_t>(r) * w + cc) * cols.cols() +
                        (static_cast<size_t>(dr) * kw + dc) * c;
          std::copy(src, src + c, dst);
          src += c;
        }
      }
    }
  }
}

// Scatter-add of column gradients back onto the input raster.
void col2im(const MatRM& dcols, int h, int w, int c, int kh, int kw,
            Tensor& dx) {
  const int ph = kh / 2, pw = kw / 2;
  for (int r = 0; r < h; ++r) {
    for (int dr = 0; dr < kh; ++dr) {
      const int sr = r + dr - ph;
      if (sr < 0 || sr >= h) continue;
      for (int dc = 0; dc < kw; ++dc) {
        const int c0 = std::max(0, pw - dc);
        const int c1 = std::min(w, w + pw - dc);
        for (int cc = c0; cc < c1; ++cc) {
          const double* src = dcols.data() +
                              (static_cast<size_t>(r) * w + cc) * dcols.cols() +
                              (static_cast<size_t>(dr) * kw + dc) * c;
          double* dst =
              &dx.data[(static_cast<size_t>(sr) * w + (cc + dc - pw)) * c];
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace

Conv2d Conv2d::make(int kh, int kw, int cin, int cout) {
  Conv2d conv;
  conv.kh = kh;
  conv.kw = kw;
  conv.cin = cin;
  conv.cout = cout;
  conv.weight = Tensor({kh, kw, cin, cout});
  conv.bias = Tensor({cout});
  return conv;
}

Dense Dense::make(int in, int out) {
  Dense fc;
  fc.in = in;
  fc.out = out;
  fc.weight = Tensor({in, out});
  fc.bias = Tensor({out});
  return fc;
}

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x) {
  require(x.shape.size() == 3 && x.shape[2] == conv.cin,
          "conv2d_forward: input channel mismatch");
  const int h = x.shape[0], w = x.shape[1];
  MatRM cols;
  im2col(x, conv.kh, conv.kw, cols);
  Tensor y({h, w, conv.cout});
  MapRM ym(y.data.data(), h * w, conv.cout);
  CMapRM wm(conv.weight.data.data(), conv.kh * conv.kw * conv.cin, conv.cout);
  ym.noalias() = cols * wm;
  CMapVec bm(conv.bias.data.data(), conv.cout);
  ym.rowwise() += bm.transpose();
  return y;
}

void conv2d_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy,
                     Tensor* dw, Tensor* db, Tensor* dx) {
  const int h = x.shape[0], w = x.shape[1];
  require(dy.shape.size() == 3 && dy.shape[0] == h && dy.shape[1] == w &&
              dy.shape[2] == conv.cout,
          "conv2d_backward: dy shape mismatch");
  const int kcols = conv.kh * conv.kw * conv.cin;
  CMapRM dym(dy.data.data(), h * w, conv.cout);
  if (dw || db) {
    MatRM cols;
    im2col(x, conv.kh, conv.kw, cols);
    if (dw) {
      MapRM dwm(dw->data.data(), kcols, conv.cout);
      dwm.noalias() += cols.transpose() * dym;
    }
    if (db) {
      // Fixed-order accumulation (alignment-independent).
      for (int p = 0; p < h * w; ++p) {
        const double* row = &dy.data[static_cast<size_t>(p) * conv.cout];
        for (int co = 0; co < conv.cout; ++co) db->data[co] += row[co];
      }
    }
  }
  if (dx) {
    CMapRM wm(conv.weight.data.data(), kcols, conv.cout);
    MatRM dcols(h * w, kcols);
    dcols.noalias() = dym * wm.transpose();
    *dx = Tensor(x.shape);
    col2im(dcols, h, w, conv.cin, conv.kh, conv.kw, *dx);
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  }
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
  }
  return dx;
}

Tensor maxpool2_forward(const Tensor& x, std::vector<int>* argmax) {
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  require(h % 2 == 0 && w % 2 == 0, "maxpool2_forward: odd spatial dims");
  const int oh = h / 2, ow = w / 2;
  Tensor y({oh, ow, c});
  if (argmax) argmax->assign(static_cast<size_t>(oh) * ow * c, 0);
  for (int r = 0; r < oh; ++r) {
    for (int cc = 0; cc < ow; ++cc) {
      for (int ci = 0; ci < c; ++ci) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = 0;
        for (int dr = 0; dr < 2; ++dr) {
          for (int dc = 0; dc < 2; ++dc) {
            const int idx =
                ((2 * r + dr) * w + (2 * cc + dc)) * c + ci;
            if (x.data[idx] > best) {  // strict: first max wins ties
              best = x.data[idx];
              best_idx = idx;
            }
          }
        }
        const size_t out_idx = (static_cast<size_t>(r) * ow + cc) * c + ci;
        y.data[out_idx] = best;
        if (argmax) (*argmax)[out_idx] = best_idx;
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax,
                         const std::vector<int>& input_shape) {
  Tensor dx(input_shape);
  for (size_t i = 0; i < dy.data.size(); ++i) {
    dx.data[argmax[i]] += dy.data[i];
  }
  return dx;
}

Tensor l2_normalize_forward(const Tensor& x) {
  const int c = x.shape.back();
  Tensor y(x.shape);
  const size_t locs = x.numel() / c;
  for (size_t l = 0; l < locs; ++l) {
    const double* v = &x.data[l * c];
    double sq = 0.0;
    for (int i = 0; i < c; ++i) sq += v[i] * v[i];
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    double* o = &y.data[l * c];
    for (int i = 0; i < c; ++i) o[i] = v[i] * inv;
  }
  return y;
}

Tensor l2_normalize_backward(const Tensor& x, const Tensor& dy) {
  const int c = x.shape.back();
  Tensor dx(x.shape);
  const size_t locs = x.numel() / c;
  for (size_t l = 0; l < locs; ++l) {
    const double* v = &x.data[l * c];
    const double* g = &dy.data[l * c];
    double sq = 0.0;
    for (int i = 0; i < c; ++i) sq += v[i] * v[i];
    if (sq == 0.0) continue;  // constant-zero output: zero subgradient
    const double norm = std::sqrt(sq);
    double vg = 0.0;
    for (int i = 0; i < c; ++i) vg += v[i] * g[i];
    const double inv = 1.0 / norm;
    const double inv3 = inv / sq;
    double* o = &dx.data[l * c];
    for (int i = 0; i < c; ++i) o[i] = g[i] * inv - v[i] * vg * inv3;
  }
  return dx;
}

Tensor correlation_forward(const Tensor& fS, const Tensor& fT) {
  require(fS.same_shape(fT) && fS.shape.size() == 3,
          "correlation_forward: feature maps must share shape");
  const int h = fS.shape[0], w = fS.shape[1], c = fS.shape[2];
  const int p = h * w;
  Tensor out({h, w, p});
  CMapRM sm(fS.data.data(), p, c);
  CMapRM tm(fT.data.data(), p, c);
  MapRM om(out.data.data(), p, p);
  om.noalias() = tm * sm.transpose();
  return out;
}

void correlation_backward(const Tensor& fS, const Tensor& fT,
                          const Tensor& dcorr, Tensor* dfS, Tensor* dfT) {
  const int h = fS.shape[0], w = fS.shape[1], c = fS.shape[2];
  const int p = h * w;
  CMapRM sm(fS.data.data(), p, c);
  CMapRM tm(fT.data.data(), p, c);
  CMapRM dm(dcorr.data.data(), p, p);
  if (dfT) {
    MapRM g(dfT->data.data(), p, c);
    g.noalias() += dm * sm;
  }
  if (dfS) {
    MapRM g(dfS->data.data(), p, c);
    g.noalias() += dm.transpose() * tm;
  }
}

Tensor dense_forward(const Dense& fc, const Tensor& x) {
  require(static_cast<int>(x.numel()) == fc.in, "dense_forward: input size");
  Tensor y({fc.out});
  CMapRM wm(fc.weight.data.data(), fc.in, fc.out);
  CMapVec xv(x.data.data(), fc.in);
  MapVec yv(y.data.data(), fc.out);
  yv.noalias() = wm.transpose() * xv;
  CMapVec bv(fc.bias.data.data(), fc.out);
  yv += bv;
  return y;
}

void dense_backward(const Dense& fc, const Tensor& x, const Tensor& dy,
                    Tensor* dw, Tensor* db, Tensor* dx) {
  CMapVec xv(x.data.data(), fc.in);
  CMapVec gv(dy.data.data(), fc.out);
  if (dw) {
    MapRM dwm(dw->data.data(), fc.in, fc.out);
    dwm.noalias() += xv * gv.transpose();
  }
  if (db) {
    MapVec dbv(db->data.data(), fc.out);
    dbv.noalias() += gv;
  }
  if (dx) {
    *dx = Tensor(x.shape);
    CMapRM wm(fc.weight.data.data(), fc.in, fc.out);
    MapVec dxv(dx->data.data(), fc.in);
    dxv.noalias() = wm * gv;
  }
}

void glorot_uniform(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w.data) v = uniform_real(rng, -bound, bound);
}

}  // namespace homalign::nn
