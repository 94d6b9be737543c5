#include "vhs2hd/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "vhs2hd/archive.hpp"

namespace vhs2hd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(const std::string& source, size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%06zu.png", index);
  return source + buf;
}

std::vector<ManifestItem> split_domain(const std::vector<fs::path>& files, double frac, uint64_t seed,
                                       const char* domain) {
  const size_t n = files.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  SplitMix64 rng(mix64(seed ^ hash_string(domain)));
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<size_t>(std::llround(frac * static_cast<double>(n)));
  std::vector<ManifestItem> items(n);
  for (size_t i = 0; i < n; ++i) items[i].path = files[i];
  for (size_t r = 0; r < n; ++r) items[order[r]].split = r < n_train ? Split::train : Split::test;
  return items;
}

json items_to_json(const std::vector<ManifestItem>& items, const fs::path& base) {
  json arr = json::array();
  for (const auto& it : items) {
    arr.push_back({{"path", fs::relative(fs::absolute(it.path), base).generic_string()},
                   {"split", it.split == Split::train ? "train" : "test"}});
  }
  return arr;
}

std::vector<ManifestItem> items_from_json(const json& arr, const fs::path& base) {
  std::vector<ManifestItem> items;
  for (const auto& e : arr) {
    ManifestItem it;
    it.path = (base / e.at("path").get<std::string>()).lexically_normal();
    const auto split = e.at("split").get<std::string>();
    if (split != "train" && split != "test") throw ConfigError("manifest: unknown split '" + split + "'");
    it.split = split == "train" ? Split::train : Split::test;
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace

size_t extract_frames(const fs::path& video_path, const fs::path& out_dir, int stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  fs::create_directories(out_dir);
  size_t written = 0;
  if (fs::is_directory(video_path)) {
    const auto files = list_images(video_path);
    const std::string source = video_path.filename().empty() ? video_path.parent_path().filename().string()
                                                             : video_path.filename().string();
    for (size_t i = 0; i < files.size(); i += static_cast<size_t>(stride)) {
      const cv::Mat img = cv::imread(files[i].string(), cv::IMREAD_COLOR);
      if (img.empty()) throw DecodeError("cannot decode image " + files[i].string());
      if (!cv::imwrite((out_dir / frame_name(source, i)).string(), img)) throw IoError("cannot write frame");
      ++written;
    }
    if (files.empty()) throw EmptySourceError("no images in " + video_path.string());
    return written;
  }
  if (!fs::exists(video_path)) throw DecodeError("cannot open video " + video_path.string() + ": no such file");
  cv::VideoCapture cap(video_path.string());
  if (!cap.isOpened()) throw DecodeError("cannot decode video " + video_path.string());
  const std::string source = video_path.stem().string();
  cv::Mat frame;
  size_t index = 0;
  while (cap.read(frame)) {
    if (frame.empty()) break;
    if (index % static_cast<size_t>(stride) == 0) {
      cv::Mat bgr = frame;
      if (frame.channels() == 1) cv::merge(std::vector<cv::Mat>{frame, frame, frame}, bgr);
      if (!cv::imwrite((out_dir / frame_name(source, index)).string(), bgr)) throw IoError("cannot write frame");
      ++written;
    }
    ++index;
  }
  if (index == 0) throw EmptySourceError("no frames decoded from " + video_path.string());
  return written;
}

std::vector<fs::path> DatasetManifest::paths(Domain d, Split s) const {
  const auto& items = d == Domain::X ? x_items : y_items;
  std::vector<fs::path> out;
  for (const auto& it : items) {
    if (it.split == s) out.push_back(it.path);
  }
  return out;
}

DatasetManifest build_manifest(const fs::path& x_dir, const fs::path& y_dir, double train_frac, uint64_t seed,
                               const DegradationConfig& cfg) {
  if (!(train_frac > 0.0 && train_frac <= 1.0)) throw ConfigError("train fraction must be in (0, 1]");
  cfg.validate();
  const auto xs = list_images(x_dir);
  const auto ys = list_images(y_dir);
  if (xs.empty()) throw EmptySourceError("domain X directory " + x_dir.string() + " contains no images");
  if (ys.empty()) throw EmptySourceError("domain Y directory " + y_dir.string() + " contains no images");
  DatasetManifest m;
  m.train_frac = train_frac;
  m.seed = seed;
  m.degradation = cfg;
  m.x_items = split_domain(xs, train_frac, seed, "X");
  m.y_items = split_domain(ys, train_frac, seed, "Y");
  for (const char* d : {"X", "Y"}) {
    const Domain dom = d[0] == 'X' ? Domain::X : Domain::Y;
    if (m.count(dom, Split::test) == 0) m.warnings.push_back(std::string("domain ") + d + " has an empty test split");
    if (m.count(dom, Split::train) == 0) m.warnings.push_back(std::string("domain ") + d + " has an empty train split");
  }
  return m;
}

json degradation_to_json(const DegradationConfig& c) {
  return {{"blur_sigma", c.blur_sigma},
          {"kernel_radius", c.radius()},
          {"scale_factor", c.scale_factor},
          {"resample", c.resample == Resample::bicubic ? "bicubic" : "bilinear"},
          {"restore_size", c.restore_size}};
}

DegradationConfig degradation_from_json(const json& j) {
  DegradationConfig c;
  c.blur_sigma = j.value("blur_sigma", c.blur_sigma);
  c.kernel_radius = j.value("kernel_radius", c.kernel_radius);
  c.scale_factor = j.value("scale_factor", c.scale_factor);
  const std::string r = j.value("resample", std::string("bicubic"));
  if (r != "bicubic" && r != "bilinear") throw ConfigError("unknown resample method '" + r + "'");
  c.resample = r == "bicubic" ? Resample::bicubic : Resample::bilinear;
  c.restore_size = j.value("restore_size", c.restore_size);
  c.validate();
  return c;
}

json manifest_to_json(const DatasetManifest& m, const fs::path& base) {
  return {{"version", 1},
          {"seed", m.seed},
          {"train_frac", m.train_frac},
          {"degradation", degradation_to_json(m.degradation)},
          {"warnings", m.warnings},
          {"x", items_to_json(m.x_items, base)},
          {"y", items_to_json(m.y_items, base)}};
}

DatasetManifest manifest_from_json(const json& j, const fs::path& base) {
  if (j.value("version", 0) != 1) throw IncompatibleError("unsupported manifest version");
  DatasetManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.train_frac = j.at("train_frac").get<double>();
  m.degradation = degradation_from_json(j.at("degradation"));
  m.warnings = j.value("warnings", std::vector<std::string>{});
  m.x_items = items_from_json(j.at("x"), base);
  m.y_items = items_from_json(j.at("y"), base);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  fs::create_directories(base);
  write_file_atomic(path, manifest_to_json(m, base).dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j, fs::absolute(path).parent_path());
}

FrameStore::FrameStore(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  x_train_ = manifest_.paths(Domain::X, Split::train);
  y_train_ = manifest_.paths(Domain::Y, Split::train);
}

size_t FrameStore::size(Domain d) const { return d == Domain::X ? x_train_.size() : y_train_.size(); }

const Frame& FrameStore::get(Domain d, size_t i) {
  if (d == Domain::Z) {
    auto it = z_cache_.find(i);
    if (it == z_cache_.end()) {
      const Frame& y = get(Domain::Y, i);
      ZPair pair;
      pair.z = synthesize_lowres(y, manifest_.degradation);
      pair.y = center_crop_to_multiple(y, manifest_.degradation.scale_factor);
      it = z_cache_.emplace(i, std::move(pair)).first;
    }
    return it->second.z;
  }
  auto& cache = d == Domain::X ? x_cache_ : y_cache_;
  const auto& paths = d == Domain::X ? x_train_ : y_train_;
  if (i >= paths.size()) throw ConfigError("frame index out of range");
  auto it = cache.find(i);
  if (it == cache.end()) {
    Frame f = load_frame(paths[i]);
    f.validate();
    it = cache.emplace(i, std::move(f)).first;
  }
  return it->second;
}

const Frame& FrameStore::z_target(size_t i) {
  get(Domain::Z, i);
  return z_cache_.at(i).y;
}

Batch sample_batch(FrameStore& store, Domain domain, int batch, int crop, RngState& rng, SampleOptions options) {
  if (batch < 1 || crop < 1) throw ConfigError("batch and crop must be positive");
  const size_t n_items = store.size(domain);
  if (n_items == 0) throw EmptySourceError("no training frames for the requested domain");
  const uint64_t salt = domain == Domain::X ? 0x58 : domain == Domain::Y ? 0x59 : 0x5a;
  Batch out;
  out.images = Tensor<float>(batch, 3, crop, crop);
  if (domain == Domain::Z) out.targets = Tensor<float>(batch, 3, crop, crop);
  for (int b = 0; b < batch; ++b) {
    SplitMix64 s = rng.stream(mix64(salt * 0x100000000ULL + static_cast<uint64_t>(b)));
    const size_t item = s.below(n_items);
    const Frame& src = store.get(domain, item);
    if (crop > src.height() || crop > src.width()) {
      throw ShapeError("crop " + std::to_string(crop) + " exceeds frame " + src.source_id + " (" +
                       std::to_string(src.height()) + "x" + std::to_string(src.width()) + ")");
    }
    const auto top = static_cast<Index>(s.below(static_cast<uint64_t>(src.height() - crop + 1)));
    const auto left = static_cast<Index>(s.below(static_cast<uint64_t>(src.width() - crop + 1)));
    const bool flip = options.flip && (s.next() & 1);
    auto copy = [&](const Frame& f, Tensor<float>& dst) {
      for (Index c = 0; c < 3; ++c) {
        auto block = f.pixels.plane(0, c).block(top, left, crop, crop);
        if (flip) {
          dst.plane(b, c) = block.rowwise().reverse().array() * 2.f - 1.f;
        } else {
          dst.plane(b, c) = block.array() * 2.f - 1.f;
        }
      }
    };
    copy(src, out.images);
    if (domain == Domain::Z) copy(store.z_target(item), out.targets);
  }
  ++rng.draw;
  return out;
}

}  // namespace vhs2hd
