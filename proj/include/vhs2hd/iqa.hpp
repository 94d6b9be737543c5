#pragma once

// No-reference image quality: BRISQUE features (with an optional support
// vector regression model) and PIQE. Both are lower-is-better.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vhs2hd/frame.hpp"

namespace vhs2hd::iqa {

using Gray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMscnWindow = 7;
inline constexpr double kMscnSigma = 7.0 / 6.0;
inline constexpr double kMscnC = 1.0;

// 0.299 R + 0.587 G + 0.114 B on the 0-255 scale.
Gray luminance(const Frame& frame);
Gray load_luminance(const std::filesystem::path& path);

// (I - mu) / (sigma + C), Gaussian-weighted local moments, symmetric padding.
Gray compute_mscn(const Gray& img);

struct GgdParams {
  double alpha = 0;
  double variance = 0;  // E[x^2]
};

struct AggdParams {
  double alpha = 0;
  double sigma_left = 0;
  double sigma_right = 0;
  double mean_offset = 0;
};

inline constexpr double kShapeMin = 0.2;
inline constexpr double kShapeMax = 10.0;

GgdParams fit_ggd(std::span<const double> samples);
AggdParams fit_aggd(std::span<const double> samples);

inline constexpr int kBrisqueFeatures = 36;
using BrisqueFeatures = std::array<double, kBrisqueFeatures>;

// Per scale: GGD (alpha, variance) of the MSCN map, then for each neighbour
// orientation (horizontal, vertical, diagonal, anti-diagonal) the AGGD
// (alpha, mean, sigma_left^2, sigma_right^2) of the paired products. The
// second scale is a 2x2 average downsample.
BrisqueFeatures brisque_features(const Gray& img);

// epsilon-SVR with RBF kernel in libsvm's text model format, plus an
// svm-scale range file mapping raw features into [lower, upper].
class BrisqueModel {
 public:
  // `range_path` defaults to `model_path` with the extension ".range".
  static BrisqueModel load(const std::filesystem::path& model_path,
                           std::optional<std::filesystem::path> range_path = std::nullopt);
  double predict(const BrisqueFeatures& f) const;
  size_t support_vectors() const { return coef_.size(); }

 private:
  double gamma_ = 0;
  double rho_ = 0;
  std::vector<double> coef_;
  std::vector<std::array<double, kBrisqueFeatures>> sv_;
  double lower_ = -1, upper_ = 1;
  std::array<double, kBrisqueFeatures> min_{}, max_{};
  std::array<bool, kBrisqueFeatures> scaled_{};
};

double brisque_score(const BrisqueFeatures& features, const BrisqueModel& model);

inline constexpr int kPiqeBlock = 16;

struct PiqeResult {
  double score = 100;
  bool no_active_blocks = false;
  // One entry per 16x16 block of the padded image.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> active, distorted, noisy;
};

PiqeResult piqe(const Gray& img);

struct IqaRow {
  std::string name;
  std::optional<double> piqe;
  std::optional<double> brisque;
  std::optional<BrisqueFeatures> features;
  std::string error;
};

struct IqaReport {
  std::filesystem::path directory;
  bool with_piqe = true;
  bool with_brisque = true;
  bool brisque_model = false;  // false: features only
  std::vector<IqaRow> rows;    // sorted by filename
  std::optional<double> mean_piqe;
  std::optional<double> mean_brisque;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct EvaluateOptions {
  bool piqe = true;
  bool brisque = true;
  std::optional<std::filesystem::path> model_path;
};

// Unreadable files produce a row with `error` set and are left out of the means.
IqaReport evaluate_dir(const std::filesystem::path& dir, const EvaluateOptions& options = {});

}  // namespace vhs2hd::iqa
