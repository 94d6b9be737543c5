#include "vhs2hd/degradation.hpp"

#include <algorithm>

namespace vhs2hd {

namespace {

// Keys cubic convolution kernel, a = -0.5.
double cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<Index> index;
  std::vector<double> weight;
};

// Per-output-sample taps for resampling a length-`in` signal to `out`,
// pixel-center aligned.
std::vector<Taps> resample_taps(Index in, Index out, Resample method) {
  std::vector<Taps> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const auto base = static_cast<Index>(std::floor(center));
    auto& t = taps[static_cast<size_t>(o)];
    const Index first = method == Resample::bicubic ? base - 1 : base;
    const Index last = method == Resample::bicubic ? base + 2 : base + 1;
    double sum = 0;
    for (Index k = first; k <= last; ++k) {
      const double d = center - static_cast<double>(k);
      const double w = method == Resample::bicubic ? cubic(d) : std::max(0.0, 1.0 - std::abs(d));
      if (w == 0.0) continue;
      t.index.push_back(reflect_index(k, in));
      t.weight.push_back(w);
      sum += w;
    }
    for (double& w : t.weight) w /= sum;
  }
  return taps;
}

PlaneD frame_plane(const Frame& f, Index c) { return f.pixels.plane(0, c).cast<double>(); }

Frame from_planes(const PlaneD (&planes)[3], const Frame& like) {
  Frame out;
  out.range = like.range;
  out.source_id = like.source_id;
  out.pixels = Tensor<float>(1, 3, planes[0].rows(), planes[0].cols());
  for (Index c = 0; c < 3; ++c) out.pixels.plane(0, c) = planes[c].cast<float>();
  return out;
}

}  // namespace

void DegradationConfig::validate() const {
  if (scale_factor < 2) throw ConfigError("degradation scale_factor must be >= 2, got " + std::to_string(scale_factor));
  if (!(blur_sigma > 0.0)) throw ConfigError("degradation blur_sigma must be positive");
  if (radius() < 1) throw ConfigError("degradation kernel_radius must be >= 1");
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

Index reflect_index(Index i, Index n) {
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

PlaneD blur_plane(const PlaneD& src, double sigma, int radius) {
  const Index h = src.rows();
  const Index w = src.cols();
  if (h < 2 * radius + 1 || w < 2 * radius + 1) {
    throw ShapeError("blur: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                     std::to_string(2 * radius + 1) + "-tap kernel");
  }
  const auto k = gaussian_kernel(sigma, radius);
  PlaneD tmp(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += k[static_cast<size_t>(d + radius)] * src(y, reflect_index(x + d, w));
      tmp(y, x) = acc;
    }
  }
  PlaneD out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += k[static_cast<size_t>(d + radius)] * tmp(reflect_index(y + d, h), x);
      out(y, x) = acc;
    }
  }
  return out;
}

PlaneD resize_plane(const PlaneD& src, Index out_h, Index out_w, Resample method) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize: empty output size");
  const auto col_taps = resample_taps(src.cols(), out_w, method);
  const auto row_taps = resample_taps(src.rows(), out_h, method);
  PlaneD tmp(src.rows(), out_w);
  for (Index y = 0; y < src.rows(); ++y) {
    for (Index x = 0; x < out_w; ++x) {
      const auto& t = col_taps[static_cast<size_t>(x)];
      double acc = 0;
      for (size_t j = 0; j < t.index.size(); ++j) acc += t.weight[j] * src(y, t.index[j]);
      tmp(y, x) = acc;
    }
  }
  PlaneD out(out_h, out_w);
  for (Index y = 0; y < out_h; ++y) {
    const auto& t = row_taps[static_cast<size_t>(y)];
    out.row(y).setZero();
    for (size_t j = 0; j < t.index.size(); ++j) out.row(y) += t.weight[j] * tmp.row(t.index[j]);
  }
  return out;
}

Frame gaussian_blur(const Frame& f, double sigma, int radius) {
  PlaneD planes[3];
  for (Index c = 0; c < 3; ++c) planes[c] = blur_plane(frame_plane(f, c), sigma, radius);
  return from_planes(planes, f);
}

Frame resize(const Frame& f, Index out_h, Index out_w, Resample method) {
  PlaneD planes[3];
  for (Index c = 0; c < 3; ++c) planes[c] = resize_plane(frame_plane(f, c), out_h, out_w, method);
  return from_planes(planes, f);
}

Frame center_crop(const Frame& f, Index out_h, Index out_w) {
  if (out_h > f.height() || out_w > f.width()) throw ShapeError("center_crop larger than frame");
  const Index top = (f.height() - out_h) / 2;
  const Index left = (f.width() - out_w) / 2;
  Frame out;
  out.range = f.range;
  out.source_id = f.source_id;
  out.pixels = Tensor<float>(1, 3, out_h, out_w);
  for (Index c = 0; c < 3; ++c) out.pixels.plane(0, c) = f.pixels.plane(0, c).block(top, left, out_h, out_w);
  return out;
}

Frame center_crop_to_multiple(const Frame& f, Index multiple) {
  const Index h = f.height() / multiple * multiple;
  const Index w = f.width() / multiple * multiple;
  if (h == f.height() && w == f.width()) return f;
  if (h == 0 || w == 0) throw ShapeError("frame smaller than scale factor");
  return center_crop(f, h, w);
}

Frame synthesize_lowres(const Frame& y, const DegradationConfig& cfg) {
  cfg.validate();
  if (y.range != ValueRange::unit) throw ConfigError("synthesize_lowres expects a unit-range frame");
  const Frame src = center_crop_to_multiple(y, cfg.scale_factor);
  if (src.height() < cfg.kernel_width() || src.width() < cfg.kernel_width()) {
    throw ShapeError("frame " + y.source_id + " is smaller than the blur kernel");
  }
  const Index h = src.height();
  const Index w = src.width();
  PlaneD planes[3];
  for (Index c = 0; c < 3; ++c) {
    PlaneD p = blur_plane(frame_plane(src, c), cfg.blur_sigma, cfg.radius());
    p = resize_plane(p, h / cfg.scale_factor, w / cfg.scale_factor, cfg.resample);
    if (cfg.restore_size) p = resize_plane(p, h, w, cfg.resample);
    planes[c] = p.cwiseMax(0.0).cwiseMin(1.0);
  }
  return from_planes(planes, src);
}

}  // namespace vhs2hd
