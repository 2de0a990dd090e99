#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "treegraph/params.hpp"

namespace tg {

// Weight checkpoint: "TGNW" magic, one version byte, then an ordered list of
// (name, shape, raw little-endian float32) entries. Parameters are written
// first in registry order, then state buffers (running statistics), so a
// save/load round trip reproduces eval-mode outputs bit-exactly.
namespace checkpoint {

constexpr char kMagic[4] = {'T', 'G', 'N', 'W'};
constexpr std::uint8_t kVersion = 1;

namespace detail {

inline void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ofstream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32(std::ifstream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

template <typename Real>
void write_entry(std::ofstream& os, const std::string& name,
                 const std::vector<int>& shape, const Real* data, std::size_t n) {
  if (name.size() > 0xffff) throw IoError("checkpoint entry name too long");
  const std::uint16_t len = static_cast<std::uint16_t>(name.size());
  unsigned char lb[2] = {static_cast<unsigned char>(len & 0xff),
                         static_cast<unsigned char>(len >> 8)};
  os.write(reinterpret_cast<const char*>(lb), 2);
  os.write(name.data(), len);
  const std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < n; ++i) put_f32(os, static_cast<float>(data[i]));
}

struct Entry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

inline Entry read_entry(std::ifstream& is) {
  unsigned char lb[2];
  is.read(reinterpret_cast<char*>(lb), 2);
  const std::uint16_t len = static_cast<std::uint16_t>(lb[0]) |
                            (static_cast<std::uint16_t>(lb[1]) << 8);
  Entry e;
  e.name.resize(len);
  is.read(e.name.data(), len);
  std::uint8_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  std::size_t n = 1;
  for (int i = 0; i < rank; ++i) {
    const int d = static_cast<int>(get_u32(is));
    e.shape.push_back(d);
    n *= static_cast<std::size_t>(d);
  }
  e.data.resize(n);
  for (auto& v : e.data) v = get_f32(is);
  if (!is) throw ParseError("truncated checkpoint entry '" + e.name + "'");
  return e;
}

}  // namespace detail

template <typename Real>
void save(const ParamRegistry<Real>& reg, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), 1);
  detail::put_u32(os, static_cast<std::uint32_t>(reg.params().size() + reg.states().size()));
  for (const auto& p : reg.params())
    detail::write_entry(os, p.name, p.tensor.shape(), p.tensor.data(), p.tensor.size());
  for (const auto& s : reg.states())
    detail::write_entry(os, s.name, {static_cast<int>(s.data->size())}, s.data->data(),
                        s.data->size());
  if (!os) throw IoError("checkpoint write failed: " + path.string());
}

template <typename Real>
void load(ParamRegistry<Real>& reg, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a TGNW checkpoint: " + path.string());
  std::uint8_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 1);
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(is);

  std::unordered_map<std::string, detail::Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto e = detail::read_entry(is);
    entries[e.name] = std::move(e);
  }
  for (auto& p : reg.params()) {
    auto it = entries.find(p.name);
    if (it == entries.end()) throw ParseError("checkpoint missing parameter '" + p.name + "'");
    if (it->second.shape != p.tensor.shape())
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " +
                       shape_str(it->second.shape) + ", model expects " +
                       shape_str(p.tensor.shape()));
    Real* dst = p.tensor.data();
    for (std::size_t j = 0; j < p.tensor.size(); ++j) dst[j] = static_cast<Real>(it->second.data[j]);
  }
  for (auto& s : reg.states()) {
    auto it = entries.find(s.name);
    if (it == entries.end()) throw ParseError("checkpoint missing state '" + s.name + "'");
    if (it->second.data.size() != s.data->size())
      throw ShapeError("checkpoint state '" + s.name + "' size mismatch");
    for (std::size_t j = 0; j < s.data->size(); ++j) (*s.data)[j] = static_cast<Real>(it->second.data[j]);
  }
}

}  // namespace checkpoint
}  // namespace tg
