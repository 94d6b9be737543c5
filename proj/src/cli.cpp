#include "vhs2hd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vhs2hd/archive.hpp"
#include "vhs2hd/dataset.hpp"
#include "vhs2hd/degradation.hpp"
#include "vhs2hd/iqa.hpp"
#include "vhs2hd/trainer.hpp"

namespace vhs2hd {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- inference

Generator<float> load_generator(const fs::path& checkpoint, const std::optional<GeneratorConfig>& expected) {
  const Archive a = read_archive(checkpoint);
  const auto fmt = a.metadata.find("format");
  if (fmt == a.metadata.end() || fmt->second != kCheckpointFormat) {
    throw IncompatibleError(checkpoint.string() + " is not a training checkpoint");
  }
  const auto ver = a.metadata.find("version");
  if (ver == a.metadata.end() || ver->second != std::to_string(kCheckpointVersion)) {
    throw IncompatibleError(checkpoint.string() + ": unsupported checkpoint version");
  }
  const TrainConfig cfg = config_from_json(json::parse(a.metadata.at("config")));
  if (expected && !(*expected == cfg.model.generator)) {
    throw IncompatibleError("generator configuration does not match checkpoint " + checkpoint.string());
  }
  Generator<float> g(cfg.model.generator);
  a.get("G/", g.params());
  return g;
}

namespace {

Tensor<float> reflect_pad(const Tensor<float>& x, Index h, Index w) {
  Tensor<float> out(x.batch(), x.channels(), h, w);
  for (Index c = 0; c < x.channels(); ++c) {
    for (Index y = 0; y < h; ++y) {
      const Index sy = reflect_index(y, x.height());
      for (Index xx = 0; xx < w; ++xx) out(0, c, y, xx) = x(0, c, sy, reflect_index(xx, x.width()));
    }
  }
  return out;
}

Index round_up(Index v, Index m) { return (v + m - 1) / m * m; }

Tensor<float> crop(const Tensor<float>& x, Index top, Index left, Index h, Index w) {
  Tensor<float> out(x.batch(), x.channels(), h, w);
  for (Index c = 0; c < x.channels(); ++c) out.plane(0, c) = x.plane(0, c).block(top, left, h, w);
  return out;
}

// Tile origins covering [0, n) with the given overlap; the last tile is
// flush with the end.
std::vector<Index> tile_starts(Index n, Index tile, Index overlap) {
  std::vector<Index> s;
  if (n <= tile) return {0};
  const Index step = tile - overlap;
  for (Index p = 0;; p += step) {
    if (p + tile >= n) {
      s.push_back(n - tile);
      break;
    }
    s.push_back(p);
  }
  return s;
}

// Linear ramp over the overlap on sides that touch another tile.
float feather(Index i, Index tile, Index overlap, bool ramp_start, bool ramp_end) {
  float w = 1.f;
  if (ramp_start) w = std::min(w, (static_cast<float>(i) + 0.5f) / static_cast<float>(overlap));
  if (ramp_end) w = std::min(w, (static_cast<float>(tile - i) - 0.5f) / static_cast<float>(overlap));
  return w;
}

}  // namespace

Frame translate_frame(const Generator<float>& g, const Frame& input, int tile) {
  const Frame in = input.range == ValueRange::signed_unit ? input : to_signed(input);
  const Index m = g.config().required_multiple();
  const Index h = in.height(), w = in.width();
  Frame out;
  out.range = ValueRange::signed_unit;
  out.source_id = input.source_id;

  if (tile <= 0 || (h <= tile && w <= tile)) {
    const auto padded = reflect_pad(in.pixels, round_up(h, m), round_up(w, m));
    out.pixels = crop(g.forward(padded), 0, 0, h, w);
    return to_unit(out);
  }
  if (tile % m != 0 || tile <= kTileOverlap) {
    throw ConfigError("tile size must be a multiple of " + std::to_string(m) + " larger than the " +
                      std::to_string(kTileOverlap) + " px overlap");
  }
  const Index ph = std::max<Index>(round_up(h, m), tile), pw = std::max<Index>(round_up(w, m), tile);
  const auto padded = reflect_pad(in.pixels, ph, pw);
  Tensor<float> acc(1, 3, ph, pw);
  Eigen::ArrayXXf weight = Eigen::ArrayXXf::Zero(ph, pw);
  const auto ys = tile_starts(ph, tile, kTileOverlap), xs = tile_starts(pw, tile, kTileOverlap);
  for (size_t iy = 0; iy < ys.size(); ++iy) {
    for (size_t ix = 0; ix < xs.size(); ++ix) {
      const auto result = g.forward(crop(padded, ys[iy], xs[ix], tile, tile));
      for (Index y = 0; y < tile; ++y) {
        const float wy = feather(y, tile, kTileOverlap, iy > 0, iy + 1 < ys.size());
        for (Index x = 0; x < tile; ++x) {
          const float wgt = wy * feather(x, tile, kTileOverlap, ix > 0, ix + 1 < xs.size());
          weight(ys[iy] + y, xs[ix] + x) += wgt;
          for (Index c = 0; c < 3; ++c) acc(0, c, ys[iy] + y, xs[ix] + x) += wgt * result(0, c, y, x);
        }
      }
    }
  }
  for (Index c = 0; c < 3; ++c) {
    for (Index y = 0; y < ph; ++y) {
      for (Index x = 0; x < pw; ++x) acc(0, c, y, x) /= weight(y, x);
    }
  }
  out.pixels = crop(acc, 0, 0, h, w);
  return to_unit(out);
}

// ---------------------------------------------------------------- demo data

namespace {

struct Grating {
  double fy, fx, phase, amp;
  std::array<double, 3> tint;
};

Grating random_grating(SplitMix64& rng, double min_period, double max_period, double amp) {
  const double period = min_period + (max_period - min_period) * rng.uniform();
  const double theta = 3.141592653589793 * rng.uniform();
  Grating g{};
  g.fy = std::sin(theta) * 2 * 3.141592653589793 / period;
  g.fx = std::cos(theta) * 2 * 3.141592653589793 / period;
  g.phase = 2 * 3.141592653589793 * rng.uniform();
  g.amp = amp * (0.5 + 0.5 * rng.uniform());
  for (auto& t : g.tint) t = 0.5 + 0.5 * rng.uniform();
  return g;
}

double wave(const Grating& g, Index y, Index x, int c) {
  return g.amp * g.tint[static_cast<size_t>(c)] * std::sin(g.fy * static_cast<double>(y) + g.fx * static_cast<double>(x) + g.phase);
}

struct Shape2D {
  bool ellipse;
  double cy, cx, ry, rx;
  std::array<double, 3> color;
  Grating texture;
};

// Gradient background with fine gratings, overlaid by textured ellipses and
// rectangles.
Frame procedural_scene(SplitMix64& rng, int size) {
  std::array<double, 3> a{}, b{};
  for (auto& v : a) v = rng.uniform();
  for (auto& v : b) v = rng.uniform();
  const double dir = 2 * 3.141592653589793 * rng.uniform();
  std::vector<Grating> background;
  for (int i = 0; i < 3; ++i) background.push_back(random_grating(rng, 3, 16, 0.08));
  std::vector<Shape2D> shapes(static_cast<size_t>(8 + rng.below(8)));
  for (auto& s : shapes) {
    s.ellipse = rng.next() & 1;
    s.cy = size * rng.uniform();
    s.cx = size * rng.uniform();
    s.ry = size * (0.04 + 0.16 * rng.uniform());
    s.rx = size * (0.04 + 0.16 * rng.uniform());
    for (auto& v : s.color) v = 0.1 + 0.8 * rng.uniform();
    s.texture = random_grating(rng, 3, 8, 0.1);
  }
  Frame f = make_frame(size, size);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const double t = 0.5 + ((y - size / 2.0) * std::sin(dir) + (x - size / 2.0) * std::cos(dir)) / (1.5 * size);
      for (int c = 0; c < 3; ++c) {
        double v = a[c] * (1 - t) + b[c] * t;
        for (const auto& g : background) v += wave(g, y, x, c);
        for (const auto& s : shapes) {
          const double dy = (y - s.cy) / s.ry, dx = (x - s.cx) / s.rx;
          const bool inside = s.ellipse ? dy * dy + dx * dx <= 1 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
          if (inside) v = s.color[static_cast<size_t>(c)] + wave(s.texture, y, x, c);
        }
        f.pixels(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return f;
}

// Soft, low-resolution, low-contrast, colour-cast rendition.
Frame vhs_look(const Frame& sharp) {
  const Index h = sharp.height(), w = sharp.width();
  Frame f = gaussian_blur(sharp, 1.0, 2);
  f = resize(resize(f, h / 3, w / 3, Resample::bilinear), h, w, Resample::bilinear);
  const float cast[3] = {0.06f, 0.02f, -0.05f};
  for (Index c = 0; c < 3; ++c) {
    auto p = f.pixels.plane(0, c);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const float v = 0.6f * (p(y, x) - 0.5f) + 0.5f + cast[c];
        p(y, x) = std::clamp(v, 0.f, 1.f);
      }
    }
  }
  return f;
}

}  // namespace

void make_demo_data(const fs::path& out_dir, int count, int size, uint64_t seed) {
  if (count < 1) throw ConfigError("--count must be >= 1");
  if (size < kMinFrameSide) throw ConfigError("--size must be >= " + std::to_string(kMinFrameSide));
  fs::create_directories(out_dir / "x");
  fs::create_directories(out_dir / "y");
  char name[32];
  for (int i = 0; i < count; ++i) {
    SplitMix64 ry(mix64(seed ^ hash_string("demo/y") ^ static_cast<uint64_t>(i)));
    std::snprintf(name, sizeof name, "y_%04d.png", i);
    save_frame(procedural_scene(ry, size), out_dir / "y" / name);
    SplitMix64 rx(mix64(seed ^ hash_string("demo/x") ^ static_cast<uint64_t>(i)));
    const Frame scene = procedural_scene(rx, size);
    std::snprintf(name, sizeof name, "x_%04d.png", i);
    save_frame(vhs_look(scene), out_dir / "x" / name);
  }
}

// ---------------------------------------------------------------- commands

namespace {

struct PrepareArgs {
  std::string x_dir, y_dir, out = "data/manifest.json";
  double train_frac = 0.95;
  uint64_t seed = 0;
  int stride = 1;
  double blur_sigma = 2.0;
  int scale = 4;
  std::string resample = "bicubic";
};

void require_source(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw IoError(std::string(flag) + ": " + path + " does not exist");
}

// Image directories are used as-is; video files are decoded next to the manifest.
fs::path frames_for(const std::string& src, const fs::path& frames_dir, int stride) {
  if (fs::is_directory(src) && stride == 1) return src;
  fs::remove_all(frames_dir);
  const size_t n = extract_frames(src, frames_dir, stride);
  std::cout << "extracted " << n << " frames from " << src << "\n";
  return frames_dir;
}

int cmd_prepare(const PrepareArgs& a) {
  require_source(a.x_dir, "--x-dir");
  require_source(a.y_dir, "--y-dir");
  DegradationConfig deg;
  deg.blur_sigma = a.blur_sigma;
  deg.scale_factor = a.scale;
  if (a.resample != "bicubic" && a.resample != "bilinear") throw ConfigError("--resample must be bicubic or bilinear");
  deg.resample = a.resample == "bicubic" ? Resample::bicubic : Resample::bilinear;
  const fs::path base = fs::absolute(a.out).parent_path();
  const fs::path xs = frames_for(a.x_dir, base / "frames" / "x", a.stride);
  const fs::path ys = frames_for(a.y_dir, base / "frames" / "y", a.stride);
  const DatasetManifest m = build_manifest(xs, ys, a.train_frac, a.seed, deg);
  save_manifest(m, a.out);
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "manifest " << a.out << "\n"
            << "  X: " << m.count(Domain::X, Split::train) << " train, " << m.count(Domain::X, Split::test) << " test\n"
            << "  Y: " << m.count(Domain::Y, Split::train) << " train, " << m.count(Domain::Y, Split::test) << " test\n";
  return kExitOk;
}

struct TrainArgs {
  std::string manifest, run_dir = "runs/default", preset = "paper", config;
  std::vector<std::string> overrides;
  bool resume = false;
  int64_t stop_after = -1;
};

int cmd_train(const TrainArgs& a) {
  if (!fs::exists(a.manifest)) throw IoError("--manifest: " + a.manifest + " does not exist");
  json doc = config_to_json(preset(a.preset));
  if (!a.config.empty()) {
    json file;
    try {
      file = json::parse(read_file(a.config));
    } catch (const json::exception& e) {
      throw ConfigError("--config " + a.config + " is not valid JSON: " + e.what());
    }
    doc.merge_patch(file);
  }
  for (const auto& o : a.overrides) apply_override(doc, o);
  const TrainConfig cfg = config_from_json(doc);
  const DatasetManifest manifest = load_manifest(a.manifest);
  TrainOptions opt;
  opt.resume = a.resume;
  if (a.stop_after >= 0) opt.stop_after = a.stop_after;
  int64_t last_printed = -1;
  opt.on_report = [&](const LossReport& r, const std::string& phase) {
    if (phase != "style") return;
    if (r.step / 50 == last_printed) return;
    last_printed = r.step / 50;
    std::printf("step %lld  total_G %.4f  cyc %.4f  D_X %.4f  D_Y %.4f\n", static_cast<long long>(r.step), r.total_G,
                r.cyc, r.total_D_X, r.total_D_Y);
    std::fflush(stdout);
  };
  const Trainer t = train(manifest, cfg, a.run_dir, opt);
  std::cout << "finished at cycle step " << t.cycle_steps() << " (" << t.res_steps() << " resolution steps); "
            << "checkpoint " << latest_checkpoint(a.run_dir).string() << "\n";
  return kExitOk;
}

struct TranslateArgs {
  std::string checkpoint, input, output, config;
  int tile = 0;
};

int cmd_translate(const TranslateArgs& a) {
  std::optional<GeneratorConfig> expected;
  if (!a.config.empty()) expected = config_from_json(json::parse(read_file(a.config))).model.generator;
  fs::path ck = a.checkpoint;
  if (fs::is_directory(ck)) ck = latest_checkpoint(ck);
  const Generator<float> g = load_generator(ck, expected);
  fs::path in_dir = a.input;
  if (!fs::exists(in_dir)) throw IoError("--input: " + a.input + " does not exist");
  if (!fs::is_directory(in_dir)) {
    in_dir = fs::path(a.output) / ".frames";
    fs::remove_all(in_dir);
    extract_frames(a.input, in_dir, 1);
  }
  fs::create_directories(a.output);
  const auto files = list_images(in_dir);
  if (files.empty()) throw EmptySourceError("no images in " + in_dir.string());
  for (const auto& f : files) {
    const Frame out = translate_frame(g, load_frame(f), a.tile);
    save_frame(out, fs::path(a.output) / f.filename().replace_extension(".png"));
  }
  if (in_dir != fs::path(a.input)) fs::remove_all(in_dir);
  std::cout << "translated " << files.size() << " frames into " << a.output << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::vector<std::string> dirs, labels;
  std::string metric = "all", model, out = "iqa";
};

int cmd_evaluate(const EvaluateArgs& a) {
  iqa::EvaluateOptions opt;
  std::string metric = a.metric;
  std::transform(metric.begin(), metric.end(), metric.begin(), [](unsigned char c) { return std::tolower(c); });
  if (metric == "pique") metric = "piqe";
  if (metric != "piqe" && metric != "brisque" && metric != "all") {
    throw ConfigError("--metric must be one of piqe, pique, brisque, all");
  }
  opt.piqe = metric != "brisque";
  opt.brisque = metric != "piqe";
  if (!a.model.empty()) opt.model_path = a.model;
  if (opt.brisque && (a.model.empty() || !fs::exists(a.model))) {
    std::cerr << "notice: no BRISQUE regression model"
              << (a.model.empty() ? std::string() : " at " + a.model)
              << "; writing BRISQUE features only, no BRISQUE scores\n";
  }
  if (!a.labels.empty() && a.labels.size() != a.dirs.size()) throw ConfigError("--labels needs one label per directory");
  fs::create_directories(a.out);
  std::vector<std::pair<std::string, iqa::IqaReport>> reports;
  for (size_t i = 0; i < a.dirs.size(); ++i) {
    std::string label = a.labels.empty() ? fs::path(a.dirs[i]).filename().string() : a.labels[i];
    if (label.empty()) label = "method" + std::to_string(i);
    auto rep = iqa::evaluate_dir(a.dirs[i], opt);
    write_file_atomic(fs::path(a.out) / (label + ".csv"), rep.to_csv());
    write_file_atomic(fs::path(a.out) / (label + ".json"), rep.to_json().dump(2) + "\n");
    for (const auto& r : rep.rows) {
      if (!r.error.empty()) std::cerr << "warning: " << a.dirs[i] << "/" << r.name << ": " << r.error << "\n";
    }
    reports.emplace_back(label, std::move(rep));
  }
  const bool has_b = opt.brisque && !reports.empty() && reports.front().second.brisque_model;
  auto best = [&](auto get) {
    std::optional<double> b;
    for (const auto& [l, r] : reports) {
      if (const auto v = get(r); v && (!b || *v < *b)) b = v;
    }
    return b;
  };
  const auto best_p = best([](const iqa::IqaReport& r) { return r.mean_piqe; });
  const auto best_b = best([](const iqa::IqaReport& r) { return r.mean_brisque; });
  std::string csv = "method,images";
  if (opt.piqe) csv += ",mean_piqe";
  if (has_b) csv += ",mean_brisque";
  csv += "\n";
  std::printf("%-20s %8s", "method", "images");
  if (opt.piqe) std::printf(" %14s", "PIQE (lower=better)");
  if (has_b) std::printf(" %14s", "BRISQUE (lower=better)");
  std::printf("\n");
  char buf[64];
  for (const auto& [label, r] : reports) {
    csv += label + "," + std::to_string(r.rows.size());
    std::printf("%-20s %8zu", label.c_str(), r.rows.size());
    auto cell = [&](const std::optional<double>& v, const std::optional<double>& b, int width) {
      std::snprintf(buf, sizeof buf, "%.17g", v ? *v : 0.0);
      csv += "," + (v ? std::string(buf) : std::string());
      std::printf(" %*s%s", width - 1, v ? (std::snprintf(buf, sizeof buf, "%.2f", *v), buf) : "n/a",
                  v && b && *v == *b ? "*" : " ");
    };
    if (opt.piqe) cell(r.mean_piqe, best_p, 19);
    if (has_b) cell(r.mean_brisque, best_b, 22);
    csv += "\n";
    std::printf("\n");
  }
  std::printf("(* best; lower is better)\n");
  write_file_atomic(fs::path(a.out) / "comparison.csv", csv);
  return kExitOk;
}

struct GridArgs {
  std::vector<std::string> dirs, labels;
  std::string out = "grid";
};

int cmd_grid(const GridArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.dirs.size()) throw ConfigError("--labels needs one label per directory");
  std::vector<std::set<std::string>> names(a.dirs.size());
  std::set<std::string> all;
  for (size_t i = 0; i < a.dirs.size(); ++i) {
    if (!fs::is_directory(a.dirs[i])) throw IoError("not a directory: " + a.dirs[i]);
    for (const auto& p : list_images(a.dirs[i])) names[i].insert(p.filename().string());
    all.insert(names[i].begin(), names[i].end());
  }
  std::vector<std::string> diff;
  for (const auto& n : all) {
    std::string missing;
    for (size_t i = 0; i < a.dirs.size(); ++i) {
      if (!names[i].count(n)) missing += (missing.empty() ? "" : ", ") + a.dirs[i];
    }
    if (!missing.empty()) diff.push_back(n + " (missing in " + missing + ")");
  }
  if (!diff.empty()) {
    std::string msg = "directories do not share the same file names:";
    for (const auto& d : diff) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  fs::create_directories(a.out);
  constexpr int kBanner = 24;
  for (const auto& n : all) {
    std::vector<cv::Mat> panels;
    cv::Size size;
    for (size_t i = 0; i < a.dirs.size(); ++i) {
      cv::Mat img = cv::imread((fs::path(a.dirs[i]) / n).string(), cv::IMREAD_COLOR);
      if (img.empty()) throw DecodeError("cannot decode " + (fs::path(a.dirs[i]) / n).string());
      if (i == 0) size = img.size();
      if (img.size() != size) cv::resize(img, img, size, 0, 0, cv::INTER_NEAREST);
      cv::Mat panel(size.height + kBanner, size.width, CV_8UC3, cv::Scalar(255, 255, 255));
      img.copyTo(panel(cv::Rect(0, kBanner, size.width, size.height)));
      const std::string label = a.labels.empty() ? fs::path(a.dirs[i]).filename().string() : a.labels[i];
      cv::putText(panel, label, {4, kBanner - 7}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0), 1, cv::LINE_8);
      panels.push_back(panel);
    }
    cv::Mat row;
    cv::hconcat(panels, row);
    const fs::path dst = fs::path(a.out) / fs::path(n).replace_extension(".png");
    if (!cv::imwrite(dst.string(), row)) throw IoError("cannot write " + dst.string());
  }
  std::cout << "wrote " << all.size() << " montages to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"vhs2hd: VHS-to-HDTV frame translation, training and quality evaluation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Build a dataset manifest from frame directories or videos");
  prepare->add_option("--x-dir", pa.x_dir, "Domain X (VHS-like) image directory or video file")->required();
  prepare->add_option("--y-dir", pa.y_dir, "Domain Y (HDTV-like) image directory or video file")->required();
  prepare->add_option("--out", pa.out, "Manifest path");
  prepare->add_option("--train-frac", pa.train_frac, "Fraction of each domain used for training");
  prepare->add_option("--seed", pa.seed, "Split seed");
  prepare->add_option("--stride", pa.stride, "Keep every n-th frame")->check(CLI::PositiveNumber);
  prepare->add_option("--blur-sigma", pa.blur_sigma, "Gaussian blur sigma of the synthetic low-resolution domain");
  prepare->add_option("--scale", pa.scale, "Downscale factor of the synthetic low-resolution domain");
  prepare->add_option("--resample", pa.resample, "Resampling filter: bicubic or bilinear");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the translation model");
  train_cmd->add_option("--manifest", ta.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--run-dir", ta.run_dir, "Output directory for config, log and checkpoints");
  train_cmd->add_option("--preset", ta.preset, "Base configuration: paper or desk");
  train_cmd->add_option("--config", ta.config, "JSON configuration merged over the preset");
  train_cmd->add_option("--override", ta.overrides, "Dotted key=value override, repeatable (e.g. lambda_cyc=0.2)");
  train_cmd->add_flag("--resume", ta.resume, "Continue from the run directory's latest checkpoint");
  train_cmd->add_option("--stop-after", ta.stop_after, "Checkpoint and stop at this cycle step (-1: run to the end)");
  train_cmd->footer("Configuration keys and their 'paper' preset defaults (override with --override key=value):\n" +
                    config_to_json(preset("paper")).dump(2));

  TranslateArgs tr;
  auto* translate = app.add_subcommand("translate", "Translate frames with a trained generator");
  translate->add_option("--checkpoint", tr.checkpoint, "Checkpoint file or run directory")->required();
  translate->add_option("--input", tr.input, "Input image directory or video file")->required();
  translate->add_option("--output", tr.output, "Output directory")->required();
  translate->add_option("--config", tr.config, "Training configuration the checkpoint must match");
  translate->add_option("--tile", tr.tile, "Tile size for tile-and-blend inference (0: whole frame)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score image directories with PIQE and BRISQUE");
  evaluate->add_option("dirs", ea.dirs, "One image directory per method")->required();
  evaluate->add_option("--labels", ea.labels, "Method labels, one per directory")->delimiter(',');
  evaluate->add_option("--metric", ea.metric, "piqe (or pique), brisque, or all");
  evaluate->add_option("--model", ea.model, "BRISQUE regression model (libsvm text; ranges in <model>.range)");
  evaluate->add_option("--out", ea.out, "Output directory for CSV/JSON reports");

  GridArgs ga;
  auto* grid = app.add_subcommand("grid", "Render side-by-side comparison montages");
  grid->add_option("dirs", ga.dirs, "Directories sharing file names, one panel each")->required();
  grid->add_option("--labels", ga.labels, "Panel labels, one per directory")->delimiter(',');
  grid->add_option("--out", ga.out, "Output directory");

  std::string demo_out = "demo";
  int demo_count = 24, demo_size = 96;
  uint64_t demo_seed = 0;
  auto* demo = app.add_subcommand("demo-data", "Write a small synthetic unpaired corpus (x/ and y/)");
  demo->add_option("--out", demo_out, "Output directory");
  demo->add_option("--count", demo_count, "Frames per domain");
  demo->add_option("--size", demo_size, "Frame side in pixels");
  demo->add_option("--seed", demo_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (*prepare) return cmd_prepare(pa);
    if (*train_cmd) return cmd_train(ta);
    if (*translate) return cmd_translate(tr);
    if (*evaluate) return cmd_evaluate(ea);
    if (*grid) return cmd_grid(ga);
    if (*demo) {
      make_demo_data(demo_out, demo_count, demo_size, demo_seed);
      std::cout << "wrote " << demo_count << " frames per domain to " << demo_out << "\n";
      return kExitOk;
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vhs2hd
