#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vhs2hd/degradation.hpp"
#include "vhs2hd/random.hpp"

namespace vhs2hd {

// Decodes `video_path` (or passes through an image directory) and writes
// every `stride`-th frame as `<source>_<%06d>.png`, the index being the
// original frame number. Returns the number of files written.
size_t extract_frames(const std::filesystem::path& video_path, const std::filesystem::path& out_dir, int stride);

enum class Split { train, test };
enum class Domain { X, Y, Z };

struct ManifestItem {
  std::filesystem::path path;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestItem> x_items;
  std::vector<ManifestItem> y_items;
  double train_frac = 0.95;
  uint64_t seed = 0;
  DegradationConfig degradation;
  std::vector<std::string> warnings;

  std::vector<std::filesystem::path> paths(Domain d, Split s) const;
  size_t count(Domain d, Split s) const { return paths(d, s).size(); }
};

// Deterministic seeded shuffle-and-split per domain; round(frac * n) train items.
DatasetManifest build_manifest(const std::filesystem::path& x_dir, const std::filesystem::path& y_dir,
                               double train_frac, uint64_t seed, const DegradationConfig& cfg);

// Paths are stored relative to the manifest's directory.
nlohmann::json manifest_to_json(const DatasetManifest& m, const std::filesystem::path& base);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

nlohmann::json degradation_to_json(const DegradationConfig& c);
DegradationConfig degradation_from_json(const nlohmann::json& j);

// Lazily decoded training frames plus their synthesized degraded copies.
class FrameStore {
 public:
  explicit FrameStore(DatasetManifest manifest);

  size_t size(Domain d) const;
  // Unit-range frame `i` of the training split. For Domain::Z this is the
  // degraded frame; `z_target` returns its aligned sharp counterpart.
  const Frame& get(Domain d, size_t i);
  const Frame& z_target(size_t i);
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  struct ZPair {
    Frame z;
    Frame y;
  };
  DatasetManifest manifest_;
  std::vector<std::filesystem::path> x_train_, y_train_;
  std::map<size_t, Frame> x_cache_, y_cache_;
  std::map<size_t, ZPair> z_cache_;
};

struct Batch {
  Tensor<float> images;   // N x 3 x crop x crop, signed range
  Tensor<float> targets;  // Domain::Z only: aligned sharp crops
};

struct SampleOptions {
  bool flip = true;
};

// Random crops (plus optional horizontal flips) mapped to [-1, 1]. Content is
// a function of (store contents, rng, sample index); `rng.draw` advances by one.
Batch sample_batch(FrameStore& store, Domain domain, int batch, int crop, RngState& rng,
                   SampleOptions options = {});

}  // namespace vhs2hd
