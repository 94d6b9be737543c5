#pragma once

// Differentiable building blocks. Every op is a pair of free functions: a
// pure forward and a backward that takes whatever the forward saved.
// Weight layouts follow the common deep-learning convention:
//   conv2d           [out, in, k, k]
//   conv_transpose2d [in, out, k, k]

#include <cmath>
#include <vector>

#include "vhs2hd/tensor.hpp"

namespace vhs2hd::nn {

struct ConvGeometry {
  Index kernel = 3;
  Index stride = 1;
  Index pad = 1;

  Index out_size(Index in) const { return (in + 2 * pad - kernel) / stride + 1; }
  // Size that a transposed convolution produces from `in`.
  Index transposed_size(Index in) const { return (in - 1) * stride - 2 * pad + kernel; }
  bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

// Unfolds one CHW sample into a (Ho*Wo) x (C*k*k) patch matrix.
template <typename Scalar>
MatrixX<Scalar> im2col(const Scalar* src, Index channels, Index h, Index w, const ConvGeometry& g,
                       Index ho, Index wo) {
  const Index k = g.kernel;
  MatrixX<Scalar> col(ho * wo, channels * k * k);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* plane = src + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* dst = col.col((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          Scalar* row = dst + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, Scalar(0));
            continue;
          }
          const Scalar* in_row = plane + iy * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            row[ox] = (ix < 0 || ix >= w) ? Scalar(0) : in_row[ix];
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters patch columns back into a CHW buffer (accumulating).
template <typename Scalar>
void col2im(const MatrixX<Scalar>& col, Scalar* dst, Index channels, Index h, Index w,
            const ConvGeometry& g, Index ho, Index wo) {
  const Index k = g.kernel;
  for (Index c = 0; c < channels; ++c) {
    Scalar* plane = dst + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* src = col.col((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) continue;
          Scalar* out_row = plane + iy * w;
          const Scalar* row = src + oy * wo;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < w) out_row[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const ConvGeometry& g) {
  const Index cout = weight.batch();
  const Index cin = weight.channels();
  if (x.channels() != cin || weight.height() != g.kernel) {
    throw ShapeError("conv2d: input " + x.shape().str() + " weight " + weight.shape().str());
  }
  const Index ho = g.out_size(x.height());
  const Index wo = g.out_size(x.width());
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: input too small " + x.shape().str());
  const Eigen::Map<const MatrixX<Scalar>> wm(weight.data(), cin * g.kernel * g.kernel, cout);
  Tensor<Scalar> y(x.batch(), cout, ho, wo);
  for (Index n = 0; n < x.batch(); ++n) {
    auto out = y.sample(n);
    if (g.pointwise()) {
      out.noalias() = x.sample(n) * wm;
    } else {
      out.noalias() = im2col(x.sample_data(n), cin, x.height(), x.width(), g, ho, wo) * wm;
    }
    out.rowwise() += bias.array().matrix().transpose();
  }
  return y;
}

template <typename Scalar>
struct ParamGrad {
  Tensor<Scalar>* weight = nullptr;
  Tensor<Scalar>* bias = nullptr;
};

// Returns d(loss)/dx and accumulates parameter gradients when requested.
template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                               const ConvGeometry& g, const Tensor<Scalar>& dy,
                               ParamGrad<Scalar> grads, bool want_dx = true) {
  const Index cout = weight.batch();
  const Index cin = weight.channels();
  const Index kk = cin * g.kernel * g.kernel;
  const Index ho = dy.height();
  const Index wo = dy.width();
  const Eigen::Map<const MatrixX<Scalar>> wm(weight.data(), kk, cout);
  Tensor<Scalar> dx;
  if (want_dx) dx = Tensor<Scalar>(x.shape());
  for (Index n = 0; n < x.batch(); ++n) {
    const auto d = dy.sample(n);
    if (grads.bias) grads.bias->array().matrix() += d.colwise().sum().transpose();
    if (g.pointwise()) {
      if (grads.weight) {
        Eigen::Map<MatrixX<Scalar>> dw(grads.weight->data(), kk, cout);
        dw.noalias() += x.sample(n).transpose() * d;
      }
      if (want_dx) dx.sample(n).noalias() = d * wm.transpose();
      continue;
    }
    if (grads.weight) {
      const MatrixX<Scalar> col = im2col(x.sample_data(n), cin, x.height(), x.width(), g, ho, wo);
      Eigen::Map<MatrixX<Scalar>> dw(grads.weight->data(), kk, cout);
      dw.noalias() += col.transpose() * d;
    }
    if (want_dx) {
      const MatrixX<Scalar> dcol = d * wm.transpose();
      col2im(dcol, dx.sample_data(n), cin, x.height(), x.width(), g, ho, wo);
    }
  }
  return dx;
}

template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, const ConvGeometry& g) {
  const Index cin = weight.batch();
  const Index cout = weight.channels();
  if (x.channels() != cin) {
    throw ShapeError("conv_transpose2d: input " + x.shape().str() + " weight " +
                     weight.shape().str());
  }
  const Index ho = g.transposed_size(x.height());
  const Index wo = g.transposed_size(x.width());
  const Eigen::Map<const MatrixX<Scalar>> wm(weight.data(), cout * g.kernel * g.kernel, cin);
  Tensor<Scalar> y(x.batch(), cout, ho, wo);
  for (Index n = 0; n < x.batch(); ++n) {
    const MatrixX<Scalar> col = x.sample(n) * wm.transpose();
    col2im(col, y.sample_data(n), cout, ho, wo, g, x.height(), x.width());
    y.sample(n).rowwise() += bias.array().matrix().transpose();
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> conv_transpose2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                         const ConvGeometry& g, const Tensor<Scalar>& dy,
                                         ParamGrad<Scalar> grads, bool want_dx = true) {
  const Index cin = weight.batch();
  const Index cout = weight.channels();
  const Index kk = cout * g.kernel * g.kernel;
  const Eigen::Map<const MatrixX<Scalar>> wm(weight.data(), kk, cin);
  Tensor<Scalar> dx;
  if (want_dx) dx = Tensor<Scalar>(x.shape());
  for (Index n = 0; n < x.batch(); ++n) {
    if (grads.bias) grads.bias->array().matrix() += dy.sample(n).colwise().sum().transpose();
    const MatrixX<Scalar> dcol =
        im2col(dy.sample_data(n), cout, dy.height(), dy.width(), g, x.height(), x.width());
    if (grads.weight) {
      Eigen::Map<MatrixX<Scalar>> dw(grads.weight->data(), kk, cin);
      dw.noalias() += dcol.transpose() * x.sample(n);
    }
    if (want_dx) dx.sample(n).noalias() = dcol * wm;
  }
  return dx;
}

// Instance normalization without affine parameters.
template <typename Scalar>
struct InstanceNormCache {
  Tensor<Scalar> normalized;
  ArrayX<Scalar> inv_std;  // one per (n, c)
};

template <typename Scalar>
Tensor<Scalar> instance_norm(const Tensor<Scalar>& x, InstanceNormCache<Scalar>& cache,
                             Scalar eps = Scalar(1e-5)) {
  const Index planes = x.batch() * x.channels();
  const Index hw = x.shape().plane();
  Tensor<Scalar> y(x.shape());
  cache.inv_std.resize(planes);
  for (Index p = 0; p < planes; ++p) {
    const Eigen::Map<const ArrayX<Scalar>> in(x.data() + p * hw, hw);
    Eigen::Map<ArrayX<Scalar>> out(y.data() + p * hw, hw);
    const Scalar mean = in.mean();
    const Scalar var = (in - mean).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    out = (in - mean) * inv;
    cache.inv_std[p] = inv;
  }
  cache.normalized = y;
  return y;
}

template <typename Scalar>
Tensor<Scalar> instance_norm_backward(const InstanceNormCache<Scalar>& cache,
                                      const Tensor<Scalar>& dy) {
  const Index planes = dy.batch() * dy.channels();
  const Index hw = dy.shape().plane();
  Tensor<Scalar> dx(dy.shape());
  for (Index p = 0; p < planes; ++p) {
    const Eigen::Map<const ArrayX<Scalar>> g(dy.data() + p * hw, hw);
    const Eigen::Map<const ArrayX<Scalar>> xh(cache.normalized.data() + p * hw, hw);
    Eigen::Map<ArrayX<Scalar>> out(dx.data() + p * hw, hw);
    out = cache.inv_std[p] * (g - g.mean() - xh * (g * xh).mean());
  }
  return dx;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  Tensor<Scalar> y(x.shape());
  y.array() = (x.array() > Scalar(0)).select(x.array(), x.array() * slope);
  return y;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& x, Scalar slope,
                                   const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(dy.shape());
  dx.array() = (x.array() > Scalar(0)).select(dy.array(), dy.array() * slope);
  return dx;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
  return leaky_relu_backward(x, Scalar(0), dy);
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.array() = x.array().tanh();
  return y;
}

// Takes the forward output.
template <typename Scalar>
Tensor<Scalar> tanh_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(dy.shape());
  dx.array() = dy.array() * (Scalar(1) - y.array().square());
  return dx;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.array() = Scalar(1) / (Scalar(1) + (-x.array()).exp());
  return y;
}

// Takes the forward output.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(dy.shape());
  dx.array() = dy.array() * y.array() * (Scalar(1) - y.array());
  return dx;
}

// 2x2 max pooling, stride 2. `argmax` receives the flat source index per output.
template <typename Scalar>
Tensor<Scalar> max_pool2(const Tensor<Scalar>& x, std::vector<Index>& argmax) {
  const Index ho = x.height() / 2;
  const Index wo = x.width() / 2;
  Tensor<Scalar> y(x.batch(), x.channels(), ho, wo);
  argmax.assign(static_cast<size_t>(y.size()), 0);
  Index o = 0;
  for (Index n = 0; n < x.batch(); ++n) {
    for (Index c = 0; c < x.channels(); ++c) {
      const Index base = (n * x.channels() + c) * x.shape().plane();
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox, ++o) {
          Index best = base + (2 * oy) * x.width() + 2 * ox;
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) {
              const Index idx = base + (2 * oy + dy) * x.width() + 2 * ox + dx;
              if (x.data()[idx] > x.data()[best]) best = idx;
            }
          }
          argmax[static_cast<size_t>(o)] = best;
          y.data()[o] = x.data()[best];
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> max_pool2_backward(const Shape& input_shape, const std::vector<Index>& argmax,
                                  const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(input_shape);
  for (Index o = 0; o < dy.size(); ++o) dx.data()[argmax[static_cast<size_t>(o)]] += dy.data()[o];
  return dx;
}

}  // namespace vhs2hd::nn
