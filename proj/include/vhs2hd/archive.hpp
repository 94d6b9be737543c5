#pragma once

// Flat named-tensor archive, safetensors layout:
//   u64 little-endian header length N
//   N bytes of JSON: {"__metadata__": {str: str}, "<name>": {"dtype": "F32",
//                     "shape": [...], "data_offsets": [begin, end]}, ...}
//   raw tensor bytes, tensors stored in name order
// Writers add a "checksum" metadata entry (FNV-1a 64 of the data section, hex);
// readers verify it when present.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vhs2hd/parameters.hpp"

namespace vhs2hd {

struct ArchiveTensor {
  std::vector<int64_t> shape;
  std::vector<float> values;
};

struct Archive {
  std::map<std::string, std::string> metadata;
  std::map<std::string, ArchiveTensor> tensors;

  template <typename Scalar>
  void put(const std::string& prefix, const ParameterSet<Scalar>& params) {
    for (Index i = 0; i < params.size(); ++i) put(prefix + params.name(i), params[i]);
  }

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& t) {
    ArchiveTensor at;
    at.shape = {t.batch(), t.channels(), t.height(), t.width()};
    at.values.resize(static_cast<size_t>(t.size()));
    for (Index k = 0; k < t.size(); ++k) at.values[static_cast<size_t>(k)] = static_cast<float>(t.data()[k]);
    tensors[name] = std::move(at);
  }

  // Fills `params` from entries named prefix + parameter name; every
  // parameter must be present with a matching element count.
  template <typename Scalar>
  void get(const std::string& prefix, ParameterSet<Scalar>& params) const {
    for (Index i = 0; i < params.size(); ++i) get(prefix + params.name(i), params[i]);
  }

  template <typename Scalar>
  void get(const std::string& name, Tensor<Scalar>& t) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw IncompatibleError("archive is missing tensor '" + name + "'");
    if (static_cast<Index>(it->second.values.size()) != t.size()) {
      throw IncompatibleError("archive tensor '" + name + "' has " +
                              std::to_string(it->second.values.size()) + " elements, expected " +
                              std::to_string(t.size()));
    }
    for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(it->second.values[static_cast<size_t>(k)]);
  }

  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

std::string encode_archive(const Archive& archive);
Archive decode_archive(const std::string& bytes);

// Atomic: writes to a sibling temporary file, then renames over `path`.
void write_archive(const Archive& archive, const std::filesystem::path& path);
Archive read_archive(const std::filesystem::path& path);

// Atomic text-file write (temp + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace vhs2hd
