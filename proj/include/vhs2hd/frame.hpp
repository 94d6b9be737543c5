#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vhs2hd/tensor.hpp"

namespace vhs2hd {

enum class ValueRange { unit, signed_unit };

// One RGB image, stored as a 1x3xHxW float tensor.
struct Frame {
  Tensor<float> pixels;
  ValueRange range = ValueRange::unit;
  std::string source_id;

  Index height() const { return pixels.height(); }
  Index width() const { return pixels.width(); }

  // True when every value lies inside the declared range.
  bool in_range() const;
  // Checks the structural invariants (3 channels, at least 16x16, in range).
  void validate() const;
};

inline constexpr Index kMinFrameSide = 16;

Frame make_frame(Index height, Index width, float value = 0.f, ValueRange range = ValueRange::unit);

Frame to_signed(const Frame& f);
Frame to_unit(const Frame& f);

// Loads any 8-bit image file as a unit-range frame (grayscale is replicated).
Frame load_frame(const std::filesystem::path& path);
// Writes an 8-bit PNG; signed frames are mapped back to the unit range first.
void save_frame(const Frame& f, const std::filesystem::path& path);

// Image files (png, jpg, jpeg, bmp, tif, tiff, ppm) in `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

double psnr(const Frame& a, const Frame& b);

}  // namespace vhs2hd
