// Copyright 2026 The Madanet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "madanet/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>

namespace madanet::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Var<T> elementwise_binary(const Var<T>& a, const Var<T>& b, T sign_b,
                          const char* name) {
  require_same_shape(a.shape(), b.shape(), name);
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += sign_b * pb[i];
  return make_result<T>(std::move(out), {a, b},
                        [a, b, sign_b](const Tensor<T>& g) {
                          if (auto* ga = a.grad_sink()) accumulate(*ga, g);
                          if (auto* gb = b.grad_sink()) {
                            T* d = gb->data();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              d[i] += sign_b * g[i];
                          }
                        });
}

// ---------------------------------------------------------------- im2col

template <typename T>
void im2col(const T* x, int channels, int height, int width, int kh, int kw,
            ConvGeometry g, int out_h, int out_w, T* col) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* dst = col + (static_cast<std::size_t>(c * kh + i) * kw + j) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          T* row = dst + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(row, row + out_w, T(0));
            continue;
          }
          const T* srow = src + iy * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + j;
            row[ox] = (ix >= 0 && ix < width) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int kh, int kw,
            ConvGeometry g, int out_h, int out_w, T* x) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    T* dst = x + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* src =
            col + (static_cast<std::size_t>(c * kh + i) * kw + j) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= height) continue;
          const T* row = src + oy * out_w;
          T* drow = dst + iy * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + j;
            if (ix >= 0 && ix < width) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

// ------------------------------------------------------- bilinear support

// Four-neighbor sample with zero padding; an index of -1 marks a corner that
// lies outside the image.
template <typename T>
struct BilinearPoint {
  int idx[4] = {-1, -1, -1, -1};
  T w[4] = {0, 0, 0, 0};
  // d(value)/dy = sum dy[k] * v[k], d(value)/dx = sum dx[k] * v[k]
  T dy[4] = {0, 0, 0, 0};
  T dx[4] = {0, 0, 0, 0};
};

template <typename T>
BilinearPoint<T> bilinear_point(int height, int width, T y, T x) {
  BilinearPoint<T> p;
  if (y <= T(-1) || y >= T(height) || x <= T(-1) || x >= T(width)) return p;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = y0 + 1;
  const int x1 = x0 + 1;
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  const bool vy0 = y0 >= 0, vy1 = y1 < height, vx0 = x0 >= 0, vx1 = x1 < width;
  if (vy0 && vx0) p.idx[0] = y0 * width + x0;
  if (vy0 && vx1) p.idx[1] = y0 * width + x1;
  if (vy1 && vx0) p.idx[2] = y1 * width + x0;
  if (vy1 && vx1) p.idx[3] = y1 * width + x1;
  p.w[0] = hy * hx;
  p.w[1] = hy * lx;
  p.w[2] = ly * hx;
  p.w[3] = ly * lx;
  p.dy[0] = -hx;
  p.dy[1] = -lx;
  p.dy[2] = hx;
  p.dy[3] = lx;
  p.dx[0] = -hy;
  p.dx[1] = hy;
  p.dx[2] = -ly;
  p.dx[3] = ly;
  return p;
}

template <typename T>
inline T sample(const BilinearPoint<T>& p, const T* plane) {
  T v = 0;
  for (int k = 0; k < 4; ++k)
    if (p.idx[k] >= 0) v += p.w[k] * plane[p.idx[k]];
  return v;
}

// ------------------------------------------------------ separable resize

struct ResampleAxis {
  int in = 0;
  int out = 0;
  int taps = 0;
  std::vector<int> index;      // out * taps
  std::vector<double> weight;  // out * taps
};

ResampleAxis bilinear_axis(int in, int out) {
  ResampleAxis a{in, out, 2, std::vector<int>(out * 2),
                 std::vector<double>(out * 2)};
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l = src - i0;
    a.index[o * 2] = i0;
    a.index[o * 2 + 1] = i1;
    a.weight[o * 2] = 1.0 - l;
    a.weight[o * 2 + 1] = l;
  }
  return a;
}

double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

ResampleAxis bicubic_axis(int in, int out) {
  ResampleAxis a{in, out, 4, std::vector<int>(out * 4),
                 std::vector<double>(out * 4)};
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src));
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      const int idx = std::clamp(base - 1 + k, 0, in - 1);
      a.index[o * 4 + k] = idx;
      a.weight[o * 4 + k] = keys_cubic(t - (k - 1));
    }
  }
  return a;
}

template <typename T>
Var<T> separable_resample(const Var<T>& x, const ResampleAxis& ay,
                          const ResampleAxis& ax) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, ay.out, ax.out});
  AlignedVector<T> tmp(static_cast<std::size_t>(s.h) * ax.out);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      for (int iy = 0; iy < s.h; ++iy) {
        for (int ox = 0; ox < ax.out; ++ox) {
          T v = 0;
          for (int k = 0; k < ax.taps; ++k)
            v += T(ax.weight[ox * ax.taps + k]) *
                 src[iy * s.w + ax.index[ox * ax.taps + k]];
          tmp[iy * ax.out + ox] = v;
        }
      }
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < ay.out; ++oy) {
        for (int ox = 0; ox < ax.out; ++ox) {
          T v = 0;
          for (int k = 0; k < ay.taps; ++k)
            v += T(ay.weight[oy * ay.taps + k]) *
                 tmp[ay.index[oy * ay.taps + k] * ax.out + ox];
          dst[oy * ax.out + ox] = v;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [x, ay, ax](const Tensor<T>& g) {
    Tensor<T>* gx = x.grad_sink();
    if (!gx) return;
    const Shape s = x.shape();
    AlignedVector<T> tmp(static_cast<std::size_t>(s.h) * ax.out);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        std::fill(tmp.begin(), tmp.end(), T(0));
        const T* gp = g.plane(n, c);
        for (int oy = 0; oy < ay.out; ++oy)
          for (int ox = 0; ox < ax.out; ++ox)
            for (int k = 0; k < ay.taps; ++k)
              tmp[ay.index[oy * ay.taps + k] * ax.out + ox] +=
                  T(ay.weight[oy * ay.taps + k]) * gp[oy * ax.out + ox];
        T* dst = gx->plane(n, c);
        for (int iy = 0; iy < s.h; ++iy)
          for (int ox = 0; ox < ax.out; ++ox)
            for (int k = 0; k < ax.taps; ++k)
              dst[iy * s.w + ax.index[ox * ax.taps + k]] +=
                  T(ax.weight[ox * ax.taps + k]) * tmp[iy * ax.out + ox];
      }
    }
  });
}

template <typename T>
void softmax_rows(RowMat<T>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T mx = m.row(r).maxCoeff();
    double total = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const T e = std::exp(m(r, c) - mx);
      m(r, c) = e;
      total += e;
    }
    const T inv = T(1.0 / total);
    m.row(r) *= inv;
  }
}

template <typename T>
RowMat<T> attention_matrix(const T* q, const T* k, int dim, int tokens) {
  ConstMatMap<T> qm(q, dim, tokens);
  ConstMatMap<T> km(k, dim, tokens);
  RowMat<T> logits = qm.transpose() * km;
  logits *= T(1.0 / std::sqrt(static_cast<double>(dim)));
  softmax_rows(logits);
  return logits;
}

}  // namespace

// ----------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary(a, b, T(1), "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary(a, b, T(-1), "sub");
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v *= T(s);
  return make_result<T>(std::move(out), {a}, [a, s](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink())
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += T(s) * g[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink()) {
      const T* x = a.value().data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > T(0)) (*ga)[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v = T(1) / (T(1) + std::exp(-v));
  auto saved = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {a}, [a, saved](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink()) {
      const T* y = saved->data();
      for (std::size_t i = 0; i < g.size(); ++i)
        (*ga)[i] += g[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double total = 0;
  for (T v : a.value().span()) total += v;
  Tensor<T> out(Shape{}, T(total));
  return make_result<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink())
      for (auto& v : ga->span()) v += g[0];
  });
}

template <typename T>
Var<T> dot_const(const Var<T>& a, const Tensor<T>& weights) {
  require_same_shape(a.shape(), weights.shape(), "dot_const");
  double total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    total += static_cast<double>(a.value()[i]) * weights[i];
  Tensor<T> out(Shape{}, T(total));
  return make_result<T>(std::move(out), {a}, [a, weights](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink())
      for (std::size_t i = 0; i < weights.size(); ++i)
        (*ga)[i] += g[0] * weights[i];
  });
}

// ------------------------------------------------------------ reshaping

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape s = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
      throw ShapeError("concat_channels: " + ps.str() + " vs " + s.str());
    }
    channels += ps.c;
  }
  Tensor<T> out(Shape{s.n, channels, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      std::copy_n(p.value().plane(n, 0), p.shape().c * plane,
                  out.plane(n, offset));
      offset += p.shape().c;
    }
  }
  return make_result<T>(std::move(out), parts, [parts](const Tensor<T>& g) {
    const Shape gs = g.shape();
    const std::size_t plane = gs.plane();
    for (int n = 0; n < gs.n; ++n) {
      int offset = 0;
      for (const auto& p : parts) {
        if (auto* gp = p.grad_sink()) {
          const T* src = g.plane(n, offset);
          T* dst = gp->plane(n, 0);
          for (std::size_t i = 0; i < p.shape().c * plane; ++i) dst[i] += src[i];
        }
        offset += p.shape().c;
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int count) {
  const Shape s = a.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", +" +
                     std::to_string(count) + ") out of " + s.str());
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    std::copy_n(a.value().plane(n, begin), count * s.plane(), out.plane(n, 0));
  return make_result<T>(std::move(out), {a}, [a, begin, count](const Tensor<T>& g) {
    if (auto* ga = a.grad_sink()) {
      const Shape s = a.shape();
      for (int n = 0; n < s.n; ++n) {
        const T* src = g.plane(n, 0);
        T* dst = ga->plane(n, begin);
        for (std::size_t i = 0; i < count * s.plane(); ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> stack_batch(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack_batch: no inputs");
  const Shape s = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape().n != 1 || p.shape().c != s.c || p.shape().h != s.h ||
        p.shape().w != s.w) {
      throw ShapeError("stack_batch: " + p.shape().str() + " vs " + s.str());
    }
  }
  Tensor<T> out(Shape{static_cast<int>(parts.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < parts.size(); ++i)
    std::copy_n(parts[i].value().data(), s.numel(),
                out.plane(static_cast<int>(i), 0));
  return make_result<T>(std::move(out), parts, [parts](const Tensor<T>& g) {
    const std::size_t each = parts.front().shape().numel();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (auto* gp = parts[i].grad_sink()) {
        const T* src = g.data() + i * each;
        for (std::size_t j = 0; j < each; ++j) (*gp)[j] += src[j];
      }
    }
  });
}

// ---------------------------------------------------------- convolution

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              ConvGeometry geometry) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: input " + xs.str() + " vs weight " + ws.str());
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
    throw ShapeError("conv2d: bias " + bias.shape().str());
  }
  const int out_h = conv_out_extent(xs.h, ws.h, geometry.stride, geometry.pad);
  const int out_w = conv_out_extent(xs.w, ws.w, geometry.stride, geometry.pad);
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("conv2d: empty output for input " + xs.str());
  }
  const int k = ws.c * ws.h * ws.w;
  const int p = out_h * out_w;
  const bool pointwise =
      ws.h == 1 && ws.w == 1 && geometry.stride == 1 && geometry.pad == 0;
  Tensor<T> out(Shape{xs.n, ws.n, out_h, out_w});
  AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * p);
  ConstMatMap<T> wm(weight.value().data(), ws.n, k);
  for (int n = 0; n < xs.n; ++n) {
    const T* cp = x.value().plane(n, 0);
    if (!pointwise) {
      im2col(cp, xs.c, xs.h, xs.w, ws.h, ws.w, geometry, out_h, out_w,
             col.data());
      cp = col.data();
    }
    MatMap<T> om(out.plane(n, 0), ws.n, p);
    om.noalias() = wm * ConstMatMap<T>(cp, k, p);
    if (bias.defined()) {
      for (int o = 0; o < ws.n; ++o) om.row(o).array() += bias.value()[o];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      std::move(out), inputs,
      [x, weight, bias, geometry, out_h, out_w, k, p, pointwise](const Tensor<T>& g) {
        const Shape xs = x.shape();
        const Shape ws = weight.shape();
        Tensor<T>* gx = x.grad_sink();
        Tensor<T>* gw = weight.grad_sink();
        Tensor<T>* gb = bias.defined() ? bias.grad_sink() : nullptr;
        AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * p);
        ConstMatMap<T> wm(weight.value().data(), ws.n, k);
        RowMat<T> dcol;
        for (int n = 0; n < xs.n; ++n) {
          ConstMatMap<T> gm(g.plane(n, 0), ws.n, p);
          if (gb) {
            for (int o = 0; o < ws.n; ++o) (*gb)[o] += gm.row(o).sum();
          }
          if (gw) {
            const T* cp = x.value().plane(n, 0);
            if (!pointwise) {
              im2col(cp, xs.c, xs.h, xs.w, ws.h, ws.w, geometry, out_h, out_w,
                     col.data());
              cp = col.data();
            }
            MatMap<T> gwm(gw->data(), ws.n, k);
            gwm.noalias() += gm * ConstMatMap<T>(cp, k, p).transpose();
          }
          if (gx) {
            if (pointwise) {
              MatMap<T> gxm(gx->plane(n, 0), k, p);
              gxm.noalias() += wm.transpose() * gm;
            } else {
              dcol.noalias() = wm.transpose() * gm;
              col2im(dcol.data(), xs.c, xs.h, xs.w, ws.h, ws.w, geometry, out_h,
                     out_w, gx->plane(n, 0));
            }
          }
        }
      });
}

// -------------------------------------------------------- normalization

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, bool training, double momentum,
                  double eps) {
  const Shape s = x.shape();
  const Shape cs{1, s.c, 1, 1};
  if (gamma.shape() != cs || beta.shape() != cs ||
      state.running_mean.shape() != cs || state.running_var.shape() != cs) {
    throw ShapeError("batch_norm: parameters do not match input " + s.str());
  }
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  Tensor<T> out(s);
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<std::vector<T>>(s.c);
  for (int c = 0; c < s.c; ++c) {
    double mean, var;
    if (training) {
      double acc = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* px = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) acc += px[i];
      }
      mean = acc / count;
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* px = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = px[i] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      state.running_mean[c] =
          T((1.0 - momentum) * state.running_mean[c] + momentum * mean);
      state.running_var[c] =
          T((1.0 - momentum) * state.running_var[c] + momentum * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T inv = T(1.0 / std::sqrt(var + eps));
    (*inv_std)[c] = inv;
    const T gm = gamma.value()[c];
    const T bt = beta.value()[c];
    const T mu = T(mean);
    for (int n = 0; n < s.n; ++n) {
      const T* px = x.value().plane(n, c);
      T* ph = xhat->plane(n, c);
      T* po = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        ph[i] = (px[i] - mu) * inv;
        po[i] = gm * ph[i] + bt;
      }
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, training](const Tensor<T>& g) {
        const Shape s = x.shape();
        const std::size_t plane = s.plane();
        const double count = static_cast<double>(s.n) * plane;
        Tensor<T>* gx = x.grad_sink();
        Tensor<T>* gg = gamma.grad_sink();
        Tensor<T>* gb = beta.grad_sink();
        for (int c = 0; c < s.c; ++c) {
          double sum_g = 0, sum_gx = 0;
          for (int n = 0; n < s.n; ++n) {
            const T* pg = g.plane(n, c);
            const T* ph = xhat->plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += pg[i];
              sum_gx += static_cast<double>(pg[i]) * ph[i];
            }
          }
          if (gg) (*gg)[c] += T(sum_gx);
          if (gb) (*gb)[c] += T(sum_g);
          if (!gx) continue;
          const T scale = gamma.value()[c] * (*inv_std)[c];
          const T mg = T(sum_g / count);
          const T mgx = T(sum_gx / count);
          for (int n = 0; n < s.n; ++n) {
            const T* pg = g.plane(n, c);
            const T* ph = xhat->plane(n, c);
            T* pd = gx->plane(n, c);
            if (training) {
              for (std::size_t i = 0; i < plane; ++i)
                pd[i] += scale * (pg[i] - mg - ph[i] * mgx);
            } else {
              for (std::size_t i = 0; i < plane; ++i) pd[i] += scale * pg[i];
            }
          }
        }
      });
}

// ------------------------------------------------------------ resampling

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < s.h * 2; ++y)
        for (int xx = 0; xx < s.w * 2; ++xx)
          dst[y * s.w * 2 + xx] = src[(y / 2) * s.w + xx / 2];
    }
  return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
    Tensor<T>* gx = x.grad_sink();
    if (!gx) return;
    const Shape s = x.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* src = g.plane(n, c);
        T* dst = gx->plane(n, c);
        for (int y = 0; y < s.h * 2; ++y)
          for (int xx = 0; xx < s.w * 2; ++xx)
            dst[(y / 2) * s.w + xx / 2] += src[y * s.w * 2 + xx];
      }
  });
}

template <typename T>
Var<T> avg_pool2x2(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 || s.w % 2) throw ShapeError("avg_pool2x2: odd dims " + s.str());
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const T* a = src + 2 * y * s.w + 2 * xx;
          dst[y * ow + xx] = T(0.25) * (a[0] + a[1] + a[s.w] + a[s.w + 1]);
        }
    }
  return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
    Tensor<T>* gx = x.grad_sink();
    if (!gx) return;
    const Shape s = x.shape();
    const int oh = s.h / 2, ow = s.w / 2;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* src = g.plane(n, c);
        T* dst = gx->plane(n, c);
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            const T v = T(0.25) * src[y * ow + xx];
            T* a = dst + 2 * y * s.w + 2 * xx;
            a[0] += v;
            a[1] += v;
            a[s.w] += v;
            a[s.w + 1] += v;
          }
      }
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: empty output");
  return separable_resample(x, bilinear_axis(x.shape().h, out_h),
                            bilinear_axis(x.shape().w, out_w));
}

template <typename T>
Var<T> upsample_bicubic2x(const Var<T>& x) {
  return separable_resample(x, bicubic_axis(x.shape().h, x.shape().h * 2),
                            bicubic_axis(x.shape().w, x.shape().w * 2));
}

// ----------------------------------------------------- bilinear sampling

template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const Var<T>& coords) {
  const Shape xs = x.shape();
  const Shape cs = coords.shape();
  if (cs.n != xs.n || cs.c != 2 || cs.w != 1) {
    throw ShapeError("bilinear_sample: coords " + cs.str() + " for input " +
                     xs.str());
  }
  for (T v : coords.value().span()) {
    if (!std::isfinite(v)) throw NumericError("bilinear_sample: non-finite coordinate");
  }
  const int points = cs.h;
  Tensor<T> out(Shape{xs.n, xs.c, points, 1});
  for (int n = 0; n < xs.n; ++n) {
    const T* px = coords.value().plane(n, 0);
    const T* py = coords.value().plane(n, 1);
    for (int p = 0; p < points; ++p) {
      const auto bp = bilinear_point<T>(xs.h, xs.w, py[p], px[p]);
      for (int c = 0; c < xs.c; ++c) out(n, c, p, 0) = sample(bp, x.value().plane(n, c));
    }
  }
  return make_result<T>(std::move(out), {x, coords}, [x, coords](const Tensor<T>& g) {
    const Shape xs = x.shape();
    const int points = coords.shape().h;
    Tensor<T>* gx = x.grad_sink();
    Tensor<T>* gc = coords.grad_sink();
    for (int n = 0; n < xs.n; ++n) {
      const T* px = coords.value().plane(n, 0);
      const T* py = coords.value().plane(n, 1);
      for (int p = 0; p < points; ++p) {
        const auto bp = bilinear_point<T>(xs.h, xs.w, py[p], px[p]);
        T dx = 0, dy = 0;
        for (int c = 0; c < xs.c; ++c) {
          const T go = g(n, c, p, 0);
          const T* plane = x.value().plane(n, c);
          for (int k = 0; k < 4; ++k) {
            if (bp.idx[k] < 0) continue;
            if (gx) gx->plane(n, c)[bp.idx[k]] += bp.w[k] * go;
            dx += go * bp.dx[k] * plane[bp.idx[k]];
            dy += go * bp.dy[k] * plane[bp.idx[k]];
          }
        }
        if (gc) {
          (*gc)(n, 0, p, 0) += dx;
          (*gc)(n, 1, p, 0) += dy;
        }
      }
    }
  });
}

// -------------------------------------------------- deformable convolution

namespace {

template <typename T>
std::vector<BilinearPoint<T>> deform_points(const T* offsets, int height,
                                            int width, int kh, int kw,
                                            ConvGeometry g, int out_h,
                                            int out_w) {
  const int taps = kh * kw;
  const int plane = out_h * out_w;
  std::vector<BilinearPoint<T>> pts(static_cast<std::size_t>(taps) * plane);
  for (int i = 0; i < kh; ++i) {
    for (int j = 0; j < kw; ++j) {
      const int t = i * kw + j;
      const T* oy_plane = offsets + static_cast<std::size_t>(2 * t) * plane;
      const T* ox_plane = offsets + static_cast<std::size_t>(2 * t + 1) * plane;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const int p = oy * out_w + ox;
          const T y = T(oy * g.stride - g.pad + i) + oy_plane[p];
          const T x = T(ox * g.stride - g.pad + j) + ox_plane[p];
          pts[static_cast<std::size_t>(t) * plane + p] =
              bilinear_point<T>(height, width, y, x);
        }
      }
    }
  }
  return pts;
}

template <typename T>
void deform_im2col(const T* x, int channels, int height, int width, int taps,
                   int plane, const std::vector<BilinearPoint<T>>& pts, T* col) {
  for (int c = 0; c < channels; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * height * width;
    for (int t = 0; t < taps; ++t) {
      T* dst = col + (static_cast<std::size_t>(c) * taps + t) * plane;
      const BilinearPoint<T>* pp = pts.data() + static_cast<std::size_t>(t) * plane;
      for (int p = 0; p < plane; ++p) dst[p] = sample(pp[p], src);
    }
  }
}

}  // namespace

template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offsets,
                     const Var<T>& weight, const Var<T>& bias,
                     ConvGeometry geometry) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c) {
    throw ShapeError("deform_conv2d: input " + xs.str() + " vs weight " +
                     ws.str());
  }
  const int out_h = conv_out_extent(xs.h, ws.h, geometry.stride, geometry.pad);
  const int out_w = conv_out_extent(xs.w, ws.w, geometry.stride, geometry.pad);
  const int taps = ws.h * ws.w;
  if (offsets.shape() != Shape{xs.n, 2 * taps, out_h, out_w}) {
    throw ShapeError("deform_conv2d: offsets " + offsets.shape().str() +
                     ", expected " + Shape{xs.n, 2 * taps, out_h, out_w}.str());
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
    throw ShapeError("deform_conv2d: bias " + bias.shape().str());
  }
  const int k = xs.c * taps;
  const int p = out_h * out_w;
  Tensor<T> out(Shape{xs.n, ws.n, out_h, out_w});
  AlignedVector<T> col(static_cast<std::size_t>(k) * p);
  ConstMatMap<T> wm(weight.value().data(), ws.n, k);
  for (int n = 0; n < xs.n; ++n) {
    const auto pts = deform_points(offsets.value().plane(n, 0), xs.h, xs.w,
                                   ws.h, ws.w, geometry, out_h, out_w);
    deform_im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, taps, p, pts,
                  col.data());
    MatMap<T> om(out.plane(n, 0), ws.n, p);
    om.noalias() = wm * ConstMatMap<T>(col.data(), k, p);
    if (bias.defined()) {
      for (int o = 0; o < ws.n; ++o) om.row(o).array() += bias.value()[o];
    }
  }
  std::vector<Var<T>> inputs{x, offsets, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      std::move(out), inputs,
      [x, offsets, weight, bias, geometry, out_h, out_w, taps, k, p](const Tensor<T>& g) {
        const Shape xs = x.shape();
        const Shape ws = weight.shape();
        Tensor<T>* gx = x.grad_sink();
        Tensor<T>* goff = offsets.grad_sink();
        Tensor<T>* gw = weight.grad_sink();
        Tensor<T>* gb = bias.defined() ? bias.grad_sink() : nullptr;
        AlignedVector<T> col(gw ? static_cast<std::size_t>(k) * p : 0);
        ConstMatMap<T> wm(weight.value().data(), ws.n, k);
        RowMat<T> dcol;
        for (int n = 0; n < xs.n; ++n) {
          ConstMatMap<T> gm(g.plane(n, 0), ws.n, p);
          if (gb) {
            for (int o = 0; o < ws.n; ++o) (*gb)[o] += gm.row(o).sum();
          }
          const auto pts = deform_points(offsets.value().plane(n, 0), xs.h,
                                         xs.w, ws.h, ws.w, geometry, out_h, out_w);
          if (gw) {
            deform_im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, taps, p, pts,
                          col.data());
            MatMap<T> gwm(gw->data(), ws.n, k);
            gwm.noalias() += gm * ConstMatMap<T>(col.data(), k, p).transpose();
          }
          if (!gx && !goff) continue;
          dcol.noalias() = wm.transpose() * gm;
          for (int c = 0; c < xs.c; ++c) {
            const T* src = x.value().plane(n, c);
            T* gsrc = gx ? gx->plane(n, c) : nullptr;
            for (int t = 0; t < taps; ++t) {
              const T* dc = dcol.data() + (static_cast<std::size_t>(c) * taps + t) * p;
              const BilinearPoint<T>* pp = pts.data() + static_cast<std::size_t>(t) * p;
              T* goy = goff ? goff->plane(n, 2 * t) : nullptr;
              T* gox = goff ? goff->plane(n, 2 * t + 1) : nullptr;
              for (int q = 0; q < p; ++q) {
                const BilinearPoint<T>& bp = pp[q];
                const T d = dc[q];
                T vy = 0, vx = 0;
                for (int m = 0; m < 4; ++m) {
                  if (bp.idx[m] < 0) continue;
                  if (gsrc) gsrc[bp.idx[m]] += bp.w[m] * d;
                  vy += bp.dy[m] * src[bp.idx[m]];
                  vx += bp.dx[m] * src[bp.idx[m]];
                }
                if (goy) {
                  goy[q] += d * vy;
                  gox[q] += d * vx;
                }
              }
            }
          }
        }
      });
}

// ------------------------------------------------------------- attention

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
  const Shape qs = q.shape();
  if (!(k.shape() == qs)) {
    throw ShapeError("attention_weights: q " + qs.str() + " vs k " + k.shape().str());
  }
  const int tokens = qs.h * qs.w;
  Tensor<T> out(Shape{qs.n, 1, tokens, tokens});
  for (int n = 0; n < qs.n; ++n) {
    RowMat<T> pm = attention_matrix(q.plane(n, 0), k.plane(n, 0), qs.c, tokens);
    std::copy_n(pm.data(), pm.size(), out.plane(n, 0));
  }
  return out;
}

template <typename T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  const Shape qs = q.shape();
  const Shape vs = v.shape();
  if (!(k.shape() == qs) || vs.n != qs.n || vs.h != qs.h || vs.w != qs.w) {
    throw ShapeError("scaled_dot_attention: q " + qs.str() + ", k " +
                     k.shape().str() + ", v " + vs.str());
  }
  const int tokens = qs.h * qs.w;
  const int dim = qs.c;
  auto probs = std::make_shared<std::vector<RowMat<T>>>();
  probs->reserve(qs.n);
  Tensor<T> out(vs);
  for (int n = 0; n < qs.n; ++n) {
    probs->push_back(attention_matrix(q.value().plane(n, 0),
                                      k.value().plane(n, 0), dim, tokens));
    MatMap<T> om(out.plane(n, 0), vs.c, tokens);
    om.noalias() =
        ConstMatMap<T>(v.value().plane(n, 0), vs.c, tokens) * probs->back().transpose();
  }
  return make_result<T>(
      std::move(out), {q, k, v}, [q, k, v, probs, dim, tokens](const Tensor<T>& g) {
        const Shape vs = v.shape();
        const T inv_sqrt = T(1.0 / std::sqrt(static_cast<double>(dim)));
        Tensor<T>* gq = q.grad_sink();
        Tensor<T>* gk = k.grad_sink();
        Tensor<T>* gv = v.grad_sink();
        for (int n = 0; n < vs.n; ++n) {
          const RowMat<T>& pm = (*probs)[n];
          ConstMatMap<T> gm(g.plane(n, 0), vs.c, tokens);
          ConstMatMap<T> vm(v.value().plane(n, 0), vs.c, tokens);
          if (gv) {
            MatMap<T>(gv->plane(n, 0), vs.c, tokens).noalias() += gm * pm;
          }
          if (!gq && !gk) continue;
          RowMat<T> dp = gm.transpose() * vm;
          const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot =
              dp.cwiseProduct(pm).rowwise().sum();
          RowMat<T> dl = pm.cwiseProduct(dp.colwise() - row_dot);
          dl *= inv_sqrt;
          if (gq) {
            MatMap<T>(gq->plane(n, 0), dim, tokens).noalias() +=
                ConstMatMap<T>(k.value().plane(n, 0), dim, tokens) * dl.transpose();
          }
          if (gk) {
            MatMap<T>(gk->plane(n, 0), dim, tokens).noalias() +=
                ConstMatMap<T>(q.value().plane(n, 0), dim, tokens) * dl;
          }
        }
      });
}

// -------------------------------------------------------- instantiation

#define MADANET_INSTANTIATE_OPS(T)                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                          \
  template Var<T> scale(const Var<T>&, double);                               \
  template Var<T> relu(const Var<T>&);                                        \
  template Var<T> sigmoid(const Var<T>&);                                     \
  template Var<T> sum(const Var<T>&);                                         \
  template Var<T> dot_const(const Var<T>&, const Tensor<T>&);                 \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                \
  template Var<T> slice_channels(const Var<T>&, int, int);                    \
  template Var<T> stack_batch(const std::vector<Var<T>>&);                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&,         \
                         ConvGeometry);                                       \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&,     \
                             BatchNormState<T>&, bool, double, double);       \
  template Var<T> upsample_nearest2x(const Var<T>&);                          \
  template Var<T> avg_pool2x2(const Var<T>&);                                 \
  template Var<T> resize_bilinear(const Var<T>&, int, int);                   \
  template Var<T> upsample_bicubic2x(const Var<T>&);                          \
  template Var<T> bilinear_sample(const Var<T>&, const Var<T>&);              \
  template Var<T> deform_conv2d(const Var<T>&, const Var<T>&, const Var<T>&,  \
                                const Var<T>&, ConvGeometry);                 \
  template Var<T> scaled_dot_attention(const Var<T>&, const Var<T>&,          \
                                       const Var<T>&);                        \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&);

MADANET_INSTANTIATE_OPS(float)
MADANET_INSTANTIATE_OPS(double)

#undef MADANET_INSTANTIATE_OPS

}  // namespace madanet::ops
