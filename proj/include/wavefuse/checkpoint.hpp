#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "wavefuse/nn.hpp"

namespace wavefuse {

// Checkpoint container: magic string, then a flat map of
// name -> shape + little-endian 32-bit floats.
inline constexpr const char* kCheckpointMagic = "WAVEFUSE-CKPT-1";

namespace detail {

inline void write_u32(std::string& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.append(b, 4);
}

inline std::uint32_t read_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FormatError("checkpoint truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(in.data() + pos);
  pos += 4;
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline float read_f32(const std::string& in, std::size_t& pos) {
  const std::uint32_t bits = read_u32(in, pos);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

struct CheckpointEntry {
  Shape shape;
  std::vector<float> values;
};

using Checkpoint = std::map<std::string, CheckpointEntry>;

template <typename T>
Checkpoint checkpoint_from_store(const ParameterStore<T>& store) {
  Checkpoint ck;
  for (const auto& p : store.params()) {
    CheckpointEntry e;
    e.shape = p.value.shape();
    e.values.reserve(p.value.size());
    for (T v : p.value.data()) e.values.push_back(static_cast<float>(v));
    ck.emplace(p.name, std::move(e));
  }
  return ck;
}

inline std::string checkpoint_to_bytes(const Checkpoint& ck) {
  std::string out;
  out += kCheckpointMagic;
  detail::write_u32(out, static_cast<std::uint32_t>(ck.size()));
  for (const auto& [name, e] : ck) {
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::write_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
    for (float v : e.values) detail::write_f32(out, v);
  }
  return out;
}

inline Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  const std::string magic = kCheckpointMagic;
  if (bytes.size() < magic.size() || bytes.compare(0, magic.size(), magic) != 0)
    throw FormatError("not a checkpoint file (missing magic '" + magic + "')");
  std::size_t pos = magic.size();
  const std::uint32_t count = detail::read_u32(bytes, pos);
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32(bytes, pos);
    if (pos + name_len > bytes.size()) throw FormatError("checkpoint truncated");
    std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    CheckpointEntry e;
    const std::uint32_t ndim = detail::read_u32(bytes, pos);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(detail::read_u32(bytes, pos));
      n *= e.shape.back();
    }
    e.values.reserve(n);
    for (std::size_t j = 0; j < n; ++j) e.values.push_back(detail::read_f32(bytes, pos));
    ck.emplace(std::move(name), std::move(e));
  }
  return ck;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for writing: " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return bytes;
}

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_bytes(checkpoint_from_store(store)));
}

// Strict load: every parameter in the store must be present with a matching
// shape.
template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::filesystem::path& path) {
  const Checkpoint ck = checkpoint_from_bytes(read_file(path));
  for (auto& p : store.params()) {
    auto it = ck.find(p.name);
    if (it == ck.end())
      throw StateError("checkpoint " + path.string() + " is missing parameter '" + p.name + "'");
    if (it->second.shape != p.value.shape())
      throw StateError("checkpoint shape mismatch for '" + p.name + "': file " +
                       shape_str(it->second.shape) + " vs model " + shape_str(p.value.shape()));
    auto& dst = p.value.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(it->second.values[i]);
  }
}

// Warm-start load: copies parameters whose name and shape match; returns how
// many were copied. Used to seed a fusion model from an rgb-only run or an
// audio-classifier run.
template <typename T>
std::size_t load_checkpoint_matching(ParameterStore<T>& store,
                                     const std::filesystem::path& path) {
  const Checkpoint ck = checkpoint_from_bytes(read_file(path));
  std::size_t copied = 0;
  for (auto& p : store.params()) {
    auto it = ck.find(p.name);
    if (it == ck.end() || it->second.shape != p.value.shape()) continue;
    auto& dst = p.value.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(it->second.values[i]);
    ++copied;
  }
  return copied;
}

inline std::string file_hash_hex(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file(path)));
}

}  // namespace wavefuse
