#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vhs2hd/layers.hpp"

using namespace vhs2hd;
using vhs2hd::test::random_tensor;

namespace {

// Direct nested-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                          const nn::ConvGeometry& g) {
  const Index ho = g.out_size(x.height()), wo = g.out_size(x.width());
  Tensor<double> y(x.batch(), w.batch(), ho, wo);
  for (Index n = 0; n < x.batch(); ++n)
    for (Index co = 0; co < w.batch(); ++co)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          double s = b.data()[co];
          for (Index ci = 0; ci < w.channels(); ++ci)
            for (Index ky = 0; ky < g.kernel; ++ky)
              for (Index kx = 0; kx < g.kernel; ++kx) {
                const Index iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
                s += x(n, ci, iy, ix) * w(co, ci, ky, kx);
              }
          y(n, co, oy, ox) = s;
        }
  return y;
}

// Transposed convolution as a scatter of every input pixel.
Tensor<double> naive_conv_t(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                            const nn::ConvGeometry& g) {
  const Index ho = g.transposed_size(x.height()), wo = g.transposed_size(x.width());
  Tensor<double> y(x.batch(), w.channels(), ho, wo);
  for (Index n = 0; n < x.batch(); ++n) {
    for (Index co = 0; co < w.channels(); ++co)
      for (Index i = 0; i < ho * wo; ++i) y.plane(n, co).data()[i] = b.data()[co];
    for (Index ci = 0; ci < x.channels(); ++ci)
      for (Index iy = 0; iy < x.height(); ++iy)
        for (Index ix = 0; ix < x.width(); ++ix)
          for (Index co = 0; co < w.channels(); ++co)
            for (Index ky = 0; ky < g.kernel; ++ky)
              for (Index kx = 0; kx < g.kernel; ++kx) {
                const Index oy = iy * g.stride - g.pad + ky, ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || ox < 0 || oy >= ho || ox >= wo) continue;
                y(n, co, oy, ox) += x(n, ci, iy, ix) * w(ci, co, ky, kx);
              }
  }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

// Scalar probe loss sum(r .* y) used for layer gradient checks.
double probe(const Tensor<double>& y, const Tensor<double>& r) { return (y.array() * r.array()).sum(); }

}  // namespace

TEST(Conv2d, MatchesDirectLoops) {
  for (const nn::ConvGeometry g : {nn::ConvGeometry{3, 1, 1}, nn::ConvGeometry{4, 2, 1}, nn::ConvGeometry{1, 1, 0}}) {
    const auto x = random_tensor<double>({2, 3, 8, 6}, 1);
    const auto w = random_tensor<double>({5, 3, g.kernel, g.kernel}, 2);
    const auto b = random_tensor<double>({1, 5, 1, 1}, 3);
    EXPECT_LT(max_abs_diff(nn::conv2d(x, w, b, g), naive_conv(x, w, b, g)), 1e-12);
  }
}

TEST(ConvTranspose2d, MatchesScatterLoops) {
  const nn::ConvGeometry g{4, 2, 1};
  const auto x = random_tensor<double>({2, 4, 3, 5}, 4);
  const auto w = random_tensor<double>({4, 3, 4, 4}, 5);
  const auto b = random_tensor<double>({1, 3, 1, 1}, 6);
  const auto y = nn::conv_transpose2d(x, w, b, g);
  EXPECT_EQ(y.height(), 6);
  EXPECT_EQ(y.width(), 10);
  EXPECT_LT(max_abs_diff(y, naive_conv_t(x, w, b, g)), 1e-12);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  const nn::ConvGeometry g{4, 2, 1};
  auto x = random_tensor<double>({1, 2, 6, 6}, 7);
  ParameterSet<double> p;
  p.add("w", {3, 2, 4, 4});
  p.add("b", {1, 3, 1, 1});
  p[0] = random_tensor<double>(p[0].shape(), 8);
  p[1] = random_tensor<double>(p[1].shape(), 9);
  const auto r = random_tensor<double>({1, 3, 3, 3}, 10);
  auto grads = p.zeros_like();
  const auto dx = nn::conv2d_backward(x, p[0], g, r, {&grads[0], &grads[1]});
  auto loss = [&] { return probe(nn::conv2d(x, p[0], p[1], g), r); };
  EXPECT_LT(test::gradient_error(p, grads, loss), 1e-8);

  ParameterSet<double> xs;
  xs.add("x", x.shape());
  xs[0] = x;
  ParameterSet<double> dxs = xs.zeros_like();
  dxs[0] = dx;
  auto loss_x = [&] { return probe(nn::conv2d(xs[0], p[0], p[1], g), r); };
  EXPECT_LT(test::gradient_error(xs, dxs, loss_x), 1e-8);
}

TEST(ConvTranspose2d, BackwardMatchesFiniteDifferences) {
  const nn::ConvGeometry g{4, 2, 1};
  ParameterSet<double> p;
  p.add("x", {1, 3, 3, 3});
  p.add("w", {3, 2, 4, 4});
  p.add("b", {1, 2, 1, 1});
  for (Index i = 0; i < 3; ++i) p[i] = random_tensor<double>(p[i].shape(), 11 + i);
  const auto r = random_tensor<double>({1, 2, 6, 6}, 20);
  auto grads = p.zeros_like();
  grads[0] = nn::conv_transpose2d_backward(p[0], p[1], g, r, {&grads[1], &grads[2]});
  auto loss = [&] { return probe(nn::conv_transpose2d(p[0], p[1], p[2], g), r); };
  EXPECT_LT(test::gradient_error(p, grads, loss), 1e-8);
}

TEST(InstanceNorm, NormalizesEachPlaneAndBackpropagates) {
  ParameterSet<double> p;
  p.add("x", {2, 3, 4, 4});
  p[0] = random_tensor<double>(p[0].shape(), 30, -3, 5);
  nn::InstanceNormCache<double> cache;
  const auto y = nn::instance_norm(p[0], cache);
  for (Index n = 0; n < 2; ++n) {
    for (Index c = 0; c < 3; ++c) {
      const auto plane = y.plane(n, c).array();
      EXPECT_NEAR(plane.mean(), 0.0, 1e-12);
      EXPECT_NEAR((plane - plane.mean()).square().mean(), 1.0, 1e-4);
    }
  }
  const auto r = random_tensor<double>(p[0].shape(), 31);
  auto grads = p.zeros_like();
  grads[0] = nn::instance_norm_backward(cache, r);
  auto loss = [&] {
    nn::InstanceNormCache<double> c;
    return probe(nn::instance_norm(p[0], c), r);
  };
  EXPECT_LT(test::gradient_error(p, grads, loss), 1e-7);
}

TEST(MaxPool, PicksWindowMaximumAndRoutesGradient) {
  Tensor<double> x(1, 1, 2, 4);
  const double v[8] = {1, 5, 2, 0, 3, 4, 7, 6};
  std::copy(v, v + 8, x.data());
  std::vector<Index> argmax;
  const auto y = nn::max_pool2(x, argmax);
  EXPECT_EQ(y(0, 0, 0, 0), 5);
  EXPECT_EQ(y(0, 0, 0, 1), 7);
  Tensor<double> dy(y.shape());
  dy.data()[0] = 1;
  dy.data()[1] = 2;
  const auto dx = nn::max_pool2_backward(x.shape(), argmax, dy);
  EXPECT_EQ(dx(0, 0, 0, 1), 1);
  EXPECT_EQ(dx(0, 0, 1, 2), 2);
  EXPECT_EQ(dx.array().sum(), 3);
}

TEST(Activations, BackwardMatchesDerivatives) {
  const auto x = random_tensor<double>({1, 2, 3, 3}, 40, -2, 2);
  const auto ones = Tensor<double>::Constant(x.shape(), 1.0);
  const auto t = nn::tanh(x);
  const auto s = nn::sigmoid(x);
  const auto dt = nn::tanh_backward(t, ones);
  const auto ds = nn::sigmoid_backward(s, ones);
  const auto dl = nn::leaky_relu_backward(x, 0.2, ones);
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    EXPECT_NEAR(dt.data()[i], 1 - std::tanh(v) * std::tanh(v), 1e-12);
    const double sg = 1 / (1 + std::exp(-v));
    EXPECT_NEAR(ds.data()[i], sg * (1 - sg), 1e-12);
    EXPECT_EQ(dl.data()[i], v > 0 ? 1.0 : 0.2);
  }
}

TEST(Tensor, ChannelHelpersRoundTrip) {
  const auto a = random_tensor<float>({2, 3, 4, 4}, 50);
  const auto b = random_tensor<float>({2, 5, 4, 4}, 51);
  const auto cat = concat_channels(a, b);
  EXPECT_EQ(cat.channels(), 8);
  const auto [l, r] = split_channels(cat, 3);
  EXPECT_TRUE((l.array() == a.array()).all());
  EXPECT_TRUE((r.array() == b.array()).all());
  const auto t = tile(a, 2, 2);
  EXPECT_EQ(t.height(), 8);
  EXPECT_EQ(t(1, 2, 5, 6), a(1, 2, 1, 2));
}
