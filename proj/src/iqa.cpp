#include "vhs2hd/iqa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "vhs2hd/degradation.hpp"

namespace vhs2hd::iqa {

namespace fs = std::filesystem;
using nlohmann::json;

Gray luminance(const Frame& frame) {
  Frame f = frame.range == ValueRange::unit ? frame : to_unit(frame);
  const auto r = f.pixels.plane(0, 0).cast<double>().array();
  const auto g = f.pixels.plane(0, 1).cast<double>().array();
  const auto b = f.pixels.plane(0, 2).cast<double>().array();
  return 255.0 * (0.299 * r + 0.587 * g + 0.114 * b);
}

Gray load_luminance(const fs::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw DecodeError("cannot decode image " + path.string());
  if (img.depth() != CV_8U) throw DecodeError("expected an 8-bit image: " + path.string());
  Gray out(img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const auto* p = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      out(y, x) = 0.299 * p[x][2] + 0.587 * p[x][1] + 0.114 * p[x][0];
    }
  }
  return out;
}

// ---------------------------------------------------------------- MSCN

namespace {

std::array<double, kMscnWindow> gaussian_taps() {
  std::array<double, kMscnWindow> g{};
  const int r = kMscnWindow / 2;
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += g[i + r] = std::exp(-(i * i) / (2 * kMscnSigma * kMscnSigma));
  for (auto& v : g) v /= sum;
  return g;
}

}  // namespace

Gray compute_mscn(const Gray& img) {
  const Index h = img.rows(), w = img.cols();
  if (h < kMscnWindow || w < kMscnWindow) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                     std::to_string(kMscnWindow) + "x" + std::to_string(kMscnWindow) + " MSCN window");
  }
  static const auto g = gaussian_taps();
  const int r = kMscnWindow / 2;
  Gray out(h, w);
  // Moments of deviations from the centre pixel: a constant image gives exactly 0.
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double c = img(y, x);
      double m1 = 0, m2 = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const Index yy = reflect_index(y + dy, h);
        for (int dx = -r; dx <= r; ++dx) {
          const double d = img(yy, reflect_index(x + dx, w)) - c;
          const double wt = g[dy + r] * g[dx + r];
          m1 += wt * d;
          m2 += wt * d * d;
        }
      }
      const double sigma = std::sqrt(std::abs(m2 - m1 * m1));
      out(y, x) = -m1 / (sigma + kMscnC);
    }
  }
  return out;
}

// ---------------------------------------------------------------- GGD / AGGD

namespace {

constexpr double kGridStep = 1e-3;

struct ShapeTable {
  std::vector<double> alpha, ggd_ratio, aggd_ratio;
};

const ShapeTable& shape_table() {
  static const ShapeTable t = [] {
    ShapeTable s;
    const int n = static_cast<int>(std::lround((kShapeMax - kShapeMin) / kGridStep)) + 1;
    for (int i = 0; i < n; ++i) {
      const double a = kShapeMin + i * kGridStep;
      const double g1 = std::tgamma(1 / a), g2 = std::tgamma(2 / a), g3 = std::tgamma(3 / a);
      s.alpha.push_back(a);
      s.ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      s.aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
    return s;
  }();
  return t;
}

// Nearest grid point, then bisection inside the neighbouring cell that
// brackets the target. Targets outside the table keep the grid value.
template <typename Fn>
double invert_ratio(const std::vector<double>& table, Fn ratio, double target) {
  const auto& alpha = shape_table().alpha;
  size_t best = 0;
  for (size_t i = 1; i < table.size(); ++i) {
    if (std::abs(table[i] - target) < std::abs(table[best] - target)) best = i;
  }
  for (const size_t lo : {best == 0 ? best : best - 1, best}) {
    const size_t hi = lo + 1;
    if (hi >= table.size()) continue;
    double a = alpha[lo], b = alpha[hi];
    double fa = ratio(a) - target, fb = ratio(b) - target;
    if (fa == 0) return a;
    if (fb == 0) return b;
    if ((fa < 0) == (fb < 0)) continue;
    for (int it = 0; it < 100 && b - a > 1e-14; ++it) {
      const double m = 0.5 * (a + b);
      const double fm = ratio(m) - target;
      if ((fm < 0) == (fa < 0)) {
        a = m;
        fa = fm;
      } else {
        b = m;
      }
    }
    return 0.5 * (a + b);
  }
  return alpha[best];
}

double ggd_ratio(double a) {
  const double g2 = std::tgamma(2 / a);
  return std::tgamma(1 / a) * std::tgamma(3 / a) / (g2 * g2);
}

double aggd_ratio(double a) { return 1.0 / ggd_ratio(a); }

constexpr size_t kMinSamples = 100;

}  // namespace

GgdParams fit_ggd(std::span<const double> x) {
  if (x.size() < kMinSamples) throw DegenerateInputError("GGD fit needs at least 100 samples");
  double sq = 0, ab = 0;
  for (const double v : x) {
    sq += v * v;
    ab += std::abs(v);
  }
  const double n = static_cast<double>(x.size());
  sq /= n;
  ab /= n;
  if (!(ab > 0) || !std::isfinite(sq)) throw DegenerateInputError("GGD fit on zero-variance samples");
  GgdParams p;
  p.variance = sq;
  p.alpha = invert_ratio(shape_table().ggd_ratio, ggd_ratio, sq / (ab * ab));
  return p;
}

AggdParams fit_aggd(std::span<const double> x) {
  if (x.size() < kMinSamples) throw DegenerateInputError("AGGD fit needs at least 100 samples");
  double left_sq = 0, right_sq = 0, ab = 0;
  size_t n_left = 0, n_right = 0;
  for (const double v : x) {
    if (v < 0) {
      left_sq += v * v;
      ++n_left;
    } else if (v > 0) {
      right_sq += v * v;
      ++n_right;
    }
    ab += std::abs(v);
  }
  if (n_left == 0 || n_right == 0) throw DegenerateInputError("AGGD fit needs samples of both signs");
  const double n = static_cast<double>(x.size());
  AggdParams p;
  p.sigma_left = std::sqrt(left_sq / static_cast<double>(n_left));
  p.sigma_right = std::sqrt(right_sq / static_cast<double>(n_right));
  const double g = p.sigma_left / p.sigma_right;
  const double mean_abs = ab / n;
  const double rhat = mean_abs * mean_abs / ((left_sq + right_sq) / n);
  const double rnorm = rhat * (g * g * g + 1) * (g + 1) / ((g * g + 1) * (g * g + 1));
  p.alpha = invert_ratio(shape_table().aggd_ratio, aggd_ratio, rnorm);
  const double a = p.alpha;
  p.mean_offset = (p.sigma_right - p.sigma_left) * (std::tgamma(2 / a) / std::tgamma(1 / a)) *
                  std::sqrt(std::tgamma(1 / a) / std::tgamma(3 / a));
  return p;
}

// ---------------------------------------------------------------- BRISQUE

namespace {

Gray half_scale(const Gray& img) {
  const Index h = img.rows() / 2, w = img.cols() / 2;
  Gray out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      out(y, x) = 0.25 * (img(2 * y, 2 * x) + img(2 * y, 2 * x + 1) + img(2 * y + 1, 2 * x) + img(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

std::vector<double> pair_products(const Gray& m, int dy, int dx) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Index y = 0; y < m.rows(); ++y) {
    const Index yy = y + dy;
    if (yy < 0 || yy >= m.rows()) continue;
    for (Index x = 0; x + dx < m.cols(); ++x) out.push_back(m(y, x) * m(yy, x + dx));
  }
  return out;
}

}  // namespace

BrisqueFeatures brisque_features(const Gray& img) {
  BrisqueFeatures f{};
  size_t k = 0;
  Gray scaled = img;
  for (int scale = 0; scale < 2; ++scale) {
    if (scale == 1) scaled = half_scale(scaled);
    const Gray m = compute_mscn(scaled);
    const auto g = fit_ggd({m.data(), static_cast<size_t>(m.size())});
    f[k++] = g.alpha;
    f[k++] = g.variance;
    constexpr int kShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {-1, 1}};
    for (const auto& s : kShifts) {
      const auto products = pair_products(m, s[0], s[1]);
      const auto a = fit_aggd(products);
      f[k++] = a.alpha;
      f[k++] = a.mean_offset;
      f[k++] = a.sigma_left * a.sigma_left;
      f[k++] = a.sigma_right * a.sigma_right;
    }
  }
  return f;
}

BrisqueModel BrisqueModel::load(const fs::path& model_path, std::optional<fs::path> range_path) {
  const fs::path rpath = range_path ? *range_path : fs::path(model_path).replace_extension(".range");
  std::ifstream is(model_path);
  if (!is) throw IoError("cannot open BRISQUE model " + model_path.string());
  BrisqueModel m;
  std::string line;
  bool in_sv = false;
  size_t expected = 0;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    return IoError("BRISQUE model " + model_path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!in_sv) {
      std::string key, value;
      ls >> key >> value;
      if (key == "svm_type" && value != "epsilon_svr" && value != "nu_svr") throw bad("unsupported svm_type " + value);
      if (key == "kernel_type" && value != "rbf") throw bad("unsupported kernel_type " + value);
      if (key == "gamma") m.gamma_ = std::stod(value);
      if (key == "rho") m.rho_ = std::stod(value);
      if (key == "total_sv") expected = std::stoul(value);
      if (key == "SV") in_sv = true;
      continue;
    }
    double coef = 0;
    if (!(ls >> coef)) throw bad("expected a coefficient");
    std::array<double, kBrisqueFeatures> sv{};
    std::string tok;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw bad("malformed index:value pair '" + tok + "'");
      const int idx = std::stoi(tok.substr(0, colon));
      if (idx < 1 || idx > kBrisqueFeatures) throw bad("feature index out of range");
      sv[static_cast<size_t>(idx - 1)] = std::stod(tok.substr(colon + 1));
    }
    m.coef_.push_back(coef);
    m.sv_.push_back(sv);
  }
  if (!in_sv || m.coef_.empty()) throw IoError("BRISQUE model " + model_path.string() + " has no support vectors");
  if (expected != 0 && expected != m.coef_.size()) throw IoError("BRISQUE model total_sv does not match its SV count");
  if (!(m.gamma_ > 0)) throw IoError("BRISQUE model has no positive gamma");

  std::ifstream rs(rpath);
  if (!rs) throw IoError("cannot open BRISQUE range file " + rpath.string());
  std::string header;
  std::getline(rs, header);
  if (header.rfind("x", 0) != 0) throw IoError("BRISQUE range file must start with 'x'");
  if (!(rs >> m.lower_ >> m.upper_)) throw IoError("BRISQUE range file lacks the target interval");
  int idx = 0;
  double lo = 0, hi = 0;
  while (rs >> idx >> lo >> hi) {
    if (idx < 1 || idx > kBrisqueFeatures) throw IoError("BRISQUE range index out of range");
    const auto i = static_cast<size_t>(idx - 1);
    m.min_[i] = lo;
    m.max_[i] = hi;
    m.scaled_[i] = hi > lo;
  }
  return m;
}

double BrisqueModel::predict(const BrisqueFeatures& f) const {
  std::array<double, kBrisqueFeatures> s{};
  for (size_t i = 0; i < s.size(); ++i) {
    s[i] = scaled_[i] ? lower_ + (upper_ - lower_) * (f[i] - min_[i]) / (max_[i] - min_[i]) : 0.0;
  }
  double sum = 0;
  for (size_t k = 0; k < coef_.size(); ++k) {
    double d2 = 0;
    for (size_t i = 0; i < s.size(); ++i) d2 += (s[i] - sv_[k][i]) * (s[i] - sv_[k][i]);
    sum += coef_[k] * std::exp(-gamma_ * d2);
  }
  return sum - rho_;
}

double brisque_score(const BrisqueFeatures& features, const BrisqueModel& model) { return model.predict(features); }

// ---------------------------------------------------------------- PIQE

namespace {

constexpr double kActivityThreshold = 0.1;
constexpr double kImpairedThreshold = 0.1;
constexpr int kSegment = 6;

double sample_std(const double* v, size_t n, size_t stride) {
  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += v[i * stride];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (size_t i = 0; i < n; ++i) ss += (v[i * stride] - mean) * (v[i * stride] - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

using Block = Eigen::Matrix<double, kPiqeBlock, kPiqeBlock, Eigen::RowMajor>;

// Any 6-pixel segment along one of the four block edges with almost no
// variation marks a noticeable (blocking or blur) artifact.
bool noticeable_distortion(const Block& b) {
  constexpr int n = kPiqeBlock;
  const std::array<std::pair<const double*, size_t>, 4> edges = {{
      {b.data(), 1},                    // top row
      {b.data() + (n - 1), n},          // right column
      {b.data() + (n - 1) * n, 1},      // bottom row
      {b.data(), n},                    // left column
  }};
  for (const auto& [base, stride] : edges) {
    for (int s = 0; s + kSegment <= n; ++s) {
      if (sample_std(base + s * stride, kSegment, stride) < kImpairedThreshold) return true;
    }
  }
  return false;
}

bool noise_dominated(const Block& b, double block_var) {
  constexpr int n = kPiqeBlock;
  std::vector<double> center, surround;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) (x == 7 || x == 8 ? center : surround).push_back(b(y, x));
  }
  const double s_sur = sample_std(surround.data(), surround.size(), 1);
  const double csd = s_sur > 0 ? sample_std(center.data(), center.size(), 1) / s_sur : 0.0;
  const double sigma = std::sqrt(block_var);
  const double beta = std::abs(sigma - csd) / std::max(sigma, csd);
  return sigma > 2 * beta;
}

}  // namespace

PiqeResult piqe(const Gray& img) {
  if (img.rows() < 2 * kPiqeBlock || img.cols() < 2 * kPiqeBlock) {
    throw ShapeError("PIQE needs at least 32x32 pixels, got " + std::to_string(img.rows()) + "x" +
                     std::to_string(img.cols()));
  }
  const Index h = (img.rows() + kPiqeBlock - 1) / kPiqeBlock * kPiqeBlock;
  const Index w = (img.cols() + kPiqeBlock - 1) / kPiqeBlock * kPiqeBlock;
  Gray padded(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) padded(y, x) = img(std::min(y, img.rows() - 1), std::min(x, img.cols() - 1));
  }
  const Gray m = compute_mscn(padded);

  PiqeResult r;
  const Index by = h / kPiqeBlock, bx = w / kPiqeBlock;
  r.active.setConstant(by, bx, false);
  r.distorted.setConstant(by, bx, false);
  r.noisy.setConstant(by, bx, false);
  double total = 0;
  int n_active = 0;
  for (Index i = 0; i < by; ++i) {
    for (Index j = 0; j < bx; ++j) {
      const Block b = m.block(i * kPiqeBlock, j * kPiqeBlock, kPiqeBlock, kPiqeBlock);
      const double var = (b.array() - b.mean()).square().sum() / (b.size() - 1);
      if (!(var > kActivityThreshold)) continue;
      ++n_active;
      r.active(i, j) = true;
      r.distorted(i, j) = noticeable_distortion(b);
      r.noisy(i, j) = noise_dominated(b, var);
      if (r.distorted(i, j)) total += 1 - var;
      if (r.noisy(i, j)) total += var;
    }
  }
  if (n_active == 0) {
    r.score = 100;
    r.no_active_blocks = true;
    return r;
  }
  constexpr double C = 1;
  r.score = std::clamp((total + C) / (n_active + C) * 100, 0.0, 100.0);
  return r;
}

// ---------------------------------------------------------------- reports

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string IqaReport::to_csv() const {
  std::string out = "name";
  if (with_piqe) out += ",piqe";
  if (with_brisque) {
    if (brisque_model) out += ",brisque";
    for (int i = 1; i <= kBrisqueFeatures; ++i) out += ",brisque_f" + std::to_string(i);
  }
  out += ",error\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : rows) {
    out += csv_field(r.name);
    if (with_piqe) out += "," + opt(r.piqe);
    if (with_brisque) {
      if (brisque_model) out += "," + opt(r.brisque);
      for (int i = 0; i < kBrisqueFeatures; ++i) out += "," + (r.features ? fmt((*r.features)[i]) : std::string());
    }
    out += "," + csv_field(r.error) + "\n";
  }
  out += "mean";
  if (with_piqe) out += "," + opt(mean_piqe);
  if (with_brisque) {
    if (brisque_model) out += "," + opt(mean_brisque);
    out += std::string(kBrisqueFeatures, ',');
  }
  out += ",\n";
  return out;
}

json IqaReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json row = {{"name", r.name}};
    if (with_piqe) row["piqe"] = r.piqe ? json(*r.piqe) : json(nullptr);
    if (with_brisque) {
      if (brisque_model) row["brisque"] = r.brisque ? json(*r.brisque) : json(nullptr);
      row["brisque_features"] = r.features ? json(*r.features) : json(nullptr);
    }
    if (!r.error.empty()) row["error"] = r.error;
    rows_json.push_back(std::move(row));
  }
  json mean = json::object();
  if (with_piqe) mean["piqe"] = mean_piqe ? json(*mean_piqe) : json(nullptr);
  if (with_brisque && brisque_model) mean["brisque"] = mean_brisque ? json(*mean_brisque) : json(nullptr);
  return {{"directory", directory.generic_string()},
          {"brisque_model", brisque_model},
          {"rows", rows_json},
          {"mean", mean},
          {"lower_is_better", true}};
}

IqaReport evaluate_dir(const fs::path& dir, const EvaluateOptions& options) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  IqaReport report;
  report.directory = dir;
  report.with_piqe = options.piqe;
  report.with_brisque = options.brisque;
  std::optional<BrisqueModel> model;
  if (options.brisque && options.model_path && fs::exists(*options.model_path)) {
    model = BrisqueModel::load(*options.model_path);
  }
  report.brisque_model = model.has_value();

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  double sum_p = 0, sum_b = 0;
  int n_p = 0, n_b = 0;
  for (const auto& f : files) {
    const auto ext = f.extension().string();
    std::string lower(ext.size(), ' ');
    std::transform(ext.begin(), ext.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower != ".png" && lower != ".jpg" && lower != ".jpeg" && lower != ".bmp" && lower != ".tif" &&
        lower != ".tiff" && lower != ".ppm") {
      continue;
    }
    IqaRow row;
    row.name = f.filename().string();
    try {
      const Gray lum = load_luminance(f);
      if (options.piqe) row.piqe = piqe(lum).score;
      if (options.brisque) {
        row.features = brisque_features(lum);
        if (model) row.brisque = model->predict(*row.features);
      }
    } catch (const Error& e) {
      row.piqe.reset();
      row.brisque.reset();
      row.features.reset();
      row.error = e.what();
    }
    if (row.piqe) {
      sum_p += *row.piqe;
      ++n_p;
    }
    if (row.brisque) {
      sum_b += *row.brisque;
      ++n_b;
    }
    report.rows.push_back(std::move(row));
  }
  if (n_p > 0) report.mean_piqe = sum_p / n_p;
  if (n_b > 0) report.mean_brisque = sum_b / n_b;
  return report;
}

}  // namespace vhs2hd::iqa
