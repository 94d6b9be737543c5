#include "vhs2hd/frame.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgcodecs.hpp>

namespace vhs2hd {

bool Frame::in_range() const {
  const float lo = range == ValueRange::unit ? 0.f : -1.f;
  const auto& a = pixels.array();
  return (a >= lo).all() && (a <= 1.f).all();
}

void Frame::validate() const {
  if (pixels.batch() != 1 || pixels.channels() != 3) {
    throw ShapeError("frame must be a single 3-channel image, got " + pixels.shape().str());
  }
  if (height() < kMinFrameSide || width() < kMinFrameSide) {
    throw ShapeError("frame " + source_id + " is " + std::to_string(height()) + "x" + std::to_string(width()) +
                     ", minimum is 16x16");
  }
  if (!in_range()) throw ShapeError("frame " + source_id + " has values outside its declared range");
}

Frame make_frame(Index height, Index width, float value, ValueRange range) {
  Frame f;
  f.pixels = Tensor<float>::Constant({1, 3, height, width}, value);
  f.range = range;
  return f;
}

Frame to_signed(const Frame& f) {
  if (f.range == ValueRange::signed_unit) return f;
  Frame out = f;
  out.pixels.array() = f.pixels.array() * 2.f - 1.f;
  out.range = ValueRange::signed_unit;
  return out;
}

Frame to_unit(const Frame& f) {
  if (f.range == ValueRange::unit) return f;
  Frame out = f;
  out.pixels.array() = ((f.pixels.array() + 1.f) * 0.5f).max(0.f).min(1.f);
  out.range = ValueRange::unit;
  return out;
}

Frame load_frame(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DecodeError("cannot decode image " + path.string());
  Frame f;
  f.source_id = path.filename().string();
  f.pixels = Tensor<float>(1, 3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) f.pixels(0, c, y, x) = static_cast<float>(row[x][2 - c]) / 255.f;
    }
  }
  return f;
}

void save_frame(const Frame& f, const std::filesystem::path& path) {
  const Frame u = to_unit(f);
  cv::Mat bgr(static_cast<int>(u.height()), static_cast<int>(u.width()), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(u.pixels(0, c, y, x), 0.f, 1.f);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.f));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image " + path.string());
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const char* kExt[] = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm"};
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::any_of(std::begin(kExt), std::end(kExt), [&](const char* k) { return ext == k; })) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return out;
}

double psnr(const Frame& a, const Frame& b) {
  const Frame ua = to_unit(a);
  const Frame ub = to_unit(b);
  ua.pixels.require_same(ub.pixels, "psnr");
  const double mse = (ua.pixels.array().cast<double>() - ub.pixels.array().cast<double>()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace vhs2hd
