#include "vhs2hd/archive.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vhs2hd {

namespace {

using nlohmann::json;

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

uint64_t checksum(const char* data, size_t len) {
  Fnv1a h;
  h.update(data, len);
  return h.digest();
}

}  // namespace

std::string encode_archive(const Archive& archive) {
  std::string payload;
  json header = json::object();
  for (const auto& [name, t] : archive.tensors) {
    int64_t expected = 1;
    for (int64_t d : t.shape) expected *= d;
    if (expected != static_cast<int64_t>(t.values.size())) {
      throw ShapeError("archive tensor '" + name + "': shape does not match value count");
    }
    const size_t begin = payload.size();
    payload.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(float));
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {begin, payload.size()}}};
  }
  json meta = json::object();
  for (const auto& [k, v] : archive.metadata) meta[k] = v;
  meta["checksum"] = hex64(checksum(payload.data(), payload.size()));
  header["__metadata__"] = meta;

  std::string head = header.dump();
  while (head.size() % 8 != 0) head.push_back(' ');
  const uint64_t n = head.size();
  std::string out(8, '\0');
  for (int i = 0; i < 8; ++i) out[static_cast<size_t>(i)] = static_cast<char>((n >> (8 * i)) & 0xff);
  out += head;
  out += payload;
  return out;
}

Archive decode_archive(const std::string& bytes) {
  if (bytes.size() < 8) throw IntegrityError("archive truncated: missing header length");
  uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[static_cast<size_t>(i)])) << (8 * i);
  if (n > bytes.size() - 8) throw IntegrityError("archive truncated: header extends past end of file");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("archive header is not valid JSON: ") + e.what());
  }
  const size_t data_begin = 8 + n;
  const size_t data_len = bytes.size() - data_begin;

  Archive out;
  if (header.contains("__metadata__")) {
    for (const auto& [k, v] : header["__metadata__"].items()) out.metadata[k] = v.get<std::string>();
  }
  const auto it = out.metadata.find("checksum");
  if (it != out.metadata.end()) {
    if (hex64(checksum(bytes.data() + data_begin, data_len)) != it->second) {
      throw IntegrityError("archive checksum mismatch (file corrupted or truncated)");
    }
    out.metadata.erase(it);
  }

  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") continue;
    const std::string dtype = entry.at("dtype").get<std::string>();
    if (dtype != "F32") throw IncompatibleError("archive tensor '" + name + "' has unsupported dtype " + dtype);
    ArchiveTensor t;
    t.shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto offsets = entry.at("data_offsets").get<std::vector<uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_len) {
      throw IntegrityError("archive tensor '" + name + "' lies outside the data section");
    }
    int64_t count = 1;
    for (int64_t d : t.shape) count *= d;
    if (static_cast<uint64_t>(count) * sizeof(float) != offsets[1] - offsets[0]) {
      throw IntegrityError("archive tensor '" + name + "' size does not match its shape");
    }
    t.values.resize(static_cast<size_t>(count));
    std::memcpy(t.values.data(), bytes.data() + data_begin + offsets[0], offsets[1] - offsets[0]);
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  write_file_atomic(path, encode_archive(archive));
}

Archive read_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }

}  // namespace vhs2hd
