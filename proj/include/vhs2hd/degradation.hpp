#pragma once

// Synthesis of the low-resolution domain from sharp frames: Gaussian blur,
// downscale, and (by default) upscale back to the source size so the pair
// stays pixel-aligned.

#include <cmath>
#include <vector>

#include "vhs2hd/frame.hpp"

namespace vhs2hd {

enum class Resample { bicubic, bilinear };

struct DegradationConfig {
  double blur_sigma = 2.0;
  int kernel_radius = -1;  // < 0: ceil(2 * blur_sigma)
  int scale_factor = 4;
  Resample resample = Resample::bicubic;
  bool restore_size = true;

  int radius() const { return kernel_radius >= 0 ? kernel_radius : static_cast<int>(std::ceil(2.0 * blur_sigma)); }
  int kernel_width() const { return 2 * radius() + 1; }
  void validate() const;
  bool operator==(const DegradationConfig&) const = default;
};

// Normalized 1-D Gaussian taps, length 2 * radius + 1.
std::vector<double> gaussian_kernel(double sigma, int radius);

// Mirror index with half-sample symmetry: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
Index reflect_index(Index i, Index n);

using PlaneD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Separable Gaussian blur with symmetric padding. Mean-preserving.
PlaneD blur_plane(const PlaneD& src, double sigma, int radius);
PlaneD resize_plane(const PlaneD& src, Index out_h, Index out_w, Resample method);

Frame gaussian_blur(const Frame& f, double sigma, int radius);
Frame resize(const Frame& f, Index out_h, Index out_w, Resample method);
Frame center_crop(const Frame& f, Index out_h, Index out_w);
Frame center_crop_to_multiple(const Frame& f, Index multiple);

// Blur -> downscale by scale_factor -> optional restore to the (cropped)
// input size; result clipped to the unit range. Frames whose sides are not
// multiples of scale_factor are center-cropped first.
Frame synthesize_lowres(const Frame& y, const DegradationConfig& cfg);

}  // namespace vhs2hd
