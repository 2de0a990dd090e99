#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "treegraph/pointcloud.hpp"

namespace tg {

enum class CloudFormat { xyz_ascii, packed_binary };
enum class Split { train, test };

constexpr std::size_t kMinCloudPoints = 4;

// ---------------------------------------------------------------------------
// xyz ascii: one "x y z" triple per line, '#' starts a comment.

inline PointCloudSample load_xyz_ascii(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open cloud file: " + path.string());
  PointCloudSample out;
  out.source_path = path.string();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected three coordinates");
    double extra;
    if (ls >> extra)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected three coordinates, got more");
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": non-finite coordinate");
    out.points.data.push_back(static_cast<float>(x));
    out.points.data.push_back(static_cast<float>(y));
    out.points.data.push_back(static_cast<float>(z));
  }
  if (out.points.count() < kMinCloudPoints)
    throw DegenerateCloudError(path.string() + ": cloud has " +
                               std::to_string(out.points.count()) +
                               " points, need at least " + std::to_string(kMinCloudPoints));
  return out;
}

inline void save_xyz_ascii(const PointMatrix& pts, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write cloud file: " + path.string());
  char buf[128];
  for (std::size_t i = 0; i < pts.count(); ++i) {
    // max_digits10 so the binary round trip is exact
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", pts.at(i, 0), pts.at(i, 1), pts.at(i, 2));
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// TGPC packed binary batches: magic "TGPC", u32 sample count, u32 N, u32 D,
// then per sample N*D little-endian f32 followed by a u16 label.

namespace tgpc {

constexpr char kMagic[4] = {'T', 'G', 'P', 'C'};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline void save(const std::vector<PointCloudSample>& samples,
                 const std::filesystem::path& path) {
  if (samples.empty()) throw ContractError("tgpc::save: no samples");
  const std::size_t n = samples[0].points.count();
  for (const auto& s : samples)
    if (s.points.count() != n)
      throw ContractError("tgpc::save: all samples must share one point count");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  detail::put_u32(os, static_cast<std::uint32_t>(samples.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(n));
  detail::put_u32(os, 3u);
  for (const auto& s : samples) {
    for (float v : s.points.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_u32(os, bits);
    }
    const std::uint16_t label = static_cast<std::uint16_t>(std::max(s.label, 0));
    unsigned char lb[2] = {static_cast<unsigned char>(label & 0xff),
                           static_cast<unsigned char>(label >> 8)};
    os.write(reinterpret_cast<const char*>(lb), 2);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<PointCloudSample> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a TGPC file: " + path.string());
  const std::uint32_t count = detail::get_u32(is);
  const std::uint32_t n = detail::get_u32(is);
  const std::uint32_t d = detail::get_u32(is);
  if (d != 3) throw ParseError(path.string() + ": unsupported point dimension " + std::to_string(d));
  std::vector<PointCloudSample> out(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    out[i].points.data.resize(static_cast<std::size_t>(n) * 3);
    for (auto& v : out[i].points.data) {
      std::uint32_t bits = detail::get_u32(is);
      std::memcpy(&v, &bits, 4);
    }
    unsigned char lb[2];
    is.read(reinterpret_cast<char*>(lb), 2);
    out[i].label = static_cast<int>(static_cast<std::uint16_t>(lb[0]) |
                                    (static_cast<std::uint16_t>(lb[1]) << 8));
    out[i].source_path = path.string() + "#" + std::to_string(i);
    if (!is) throw ParseError(path.string() + ": truncated at sample " + std::to_string(i));
  }
  return out;
}

}  // namespace tgpc

inline PointCloudSample load_cloud(const std::filesystem::path& path, CloudFormat fmt) {
  if (fmt == CloudFormat::xyz_ascii) return load_xyz_ascii(path);
  auto samples = tgpc::load(path);
  if (samples.size() != 1)
    throw ContractError("load_cloud on packed binary expects exactly 1 sample, file has " +
                        std::to_string(samples.size()));
  if (samples[0].points.count() < kMinCloudPoints)
    throw DegenerateCloudError(path.string() + ": cloud has fewer than 4 points");
  return std::move(samples[0]);
}

// ---------------------------------------------------------------------------
// manifest: UTF-8 CSV `path,class,split`, paths relative to the CSV location.

struct ManifestEntry {
  std::string path;
  std::string class_name;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;  // sorted, fixes label indices
  std::filesystem::path base_dir;

  int label_of(const std::string& cls) const {
    auto it = std::lower_bound(class_names.begin(), class_names.end(), cls);
    if (it == class_names.end() || *it != cls)
      throw ContractError("unknown class name: " + cls);
    return static_cast<int>(it - class_names.begin());
  }
};

inline void finalize_manifest(DatasetManifest& m) {
  std::set<std::string> names;
  bool has_train = false;
  for (const auto& e : m.entries) {
    names.insert(e.class_name);
    if (e.split == Split::train) has_train = true;
  }
  m.class_names.assign(names.begin(), names.end());
  if (m.entries.empty()) throw ContractError("manifest has no entries");
  if (!has_train) throw ContractError("manifest has an empty train split");
}

inline DatasetManifest load_manifest(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw IoError("cannot open manifest: " + csv.string());
  DatasetManifest m;
  m.base_dir = csv.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        cols.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (lineno == 1) {
      if (cols != std::vector<std::string>{"path", "class", "split"})
        throw ParseError(csv.string() + ":1: expected header 'path,class,split'");
      continue;
    }
    if (cols.size() != 3)
      throw ParseError(csv.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
    Split split;
    if (cols[2] == "train")
      split = Split::train;
    else if (cols[2] == "test")
      split = Split::test;
    else
      throw ParseError(csv.string() + ":" + std::to_string(lineno) +
                       ": split must be 'train' or 'test', got '" + cols[2] + "'");
    m.entries.push_back({cols[0], cols[1], split});
  }
  finalize_manifest(m);
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& csv) {
  std::ofstream os(csv);
  if (!os) throw IoError("cannot write manifest: " + csv.string());
  os << "path,class,split\n";
  for (const auto& e : m.entries)
    os << e.path << ',' << e.class_name << ',' << (e.split == Split::train ? "train" : "test")
       << '\n';
  if (!os) throw IoError("write failed: " + csv.string());
}

// Per-class split with floor semantics: train gets floor(ratio * n) samples
// of each class (at least 1 so the train split is never empty), the rest go
// to test. Order within a class is shuffled by the seed.
inline DatasetManifest make_split_manifest(
    const std::vector<std::pair<std::string, std::string>>& files_with_class,
    double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0) || train_ratio > 1.0)
    throw ConfigError("train_ratio must lie in (0,1]");
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& [path, cls] : files_with_class) by_class[cls].push_back(path);
  DatasetManifest m;
  for (auto& [cls, paths] : by_class) {
    std::sort(paths.begin(), paths.end());
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(cls));
    std::shuffle(paths.begin(), paths.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(train_ratio * static_cast<double>(paths.size()));
    if (n_train == 0) n_train = 1;
    for (std::size_t i = 0; i < paths.size(); ++i)
      m.entries.push_back({paths[i], cls, i < n_train ? Split::train : Split::test});
  }
  finalize_manifest(m);
  return m;
}

// ---------------------------------------------------------------------------
// unit-sphere normalization: translate the centroid to the origin and divide
// by the largest distance from it.

inline PointCloudSample normalize_unit_sphere(const PointCloudSample& cloud) {
  const std::size_t n = cloud.points.count();
  if (n == 0) throw DegenerateCloudError("empty cloud");
  double cx = 0, cy = 0, cz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += cloud.points.at(i, 0);
    cy += cloud.points.at(i, 1);
    cz += cloud.points.at(i, 2);
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  cz /= static_cast<double>(n);
  double max_d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = cloud.points.at(i, 0) - cx;
    const double dy = cloud.points.at(i, 1) - cy;
    const double dz = cloud.points.at(i, 2) - cz;
    max_d = std::max(max_d, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  if (max_d < 1e-12)
    throw DegenerateCloudError(cloud.source_path +
                               ": all points coincide, cannot normalize");
  PointCloudSample out;
  out.label = cloud.label;
  out.source_path = cloud.source_path;
  out.points = PointMatrix(n);
  const double inv = 1.0 / max_d;
  for (std::size_t i = 0; i < n; ++i) {
    out.points.at(i, 0) = static_cast<float>((cloud.points.at(i, 0) - cx) * inv);
    out.points.at(i, 1) = static_cast<float>((cloud.points.at(i, 1) - cy) * inv);
    out.points.at(i, 2) = static_cast<float>((cloud.points.at(i, 2) - cz) * inv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// class weights: w_i = n_max / mean(n) for minority classes (n_i < mean),
// w_i = n_max / n_i otherwise, so the largest class gets weight 1.

struct ClassWeights {
  std::vector<double> weights;
  std::vector<std::int64_t> counts;
};

inline ClassWeights compute_class_weights(const std::vector<std::int64_t>& counts) {
  if (counts.empty()) throw ContractError("compute_class_weights: empty counts");
  std::int64_t n_max = 0;
  double sum = 0;
  for (std::int64_t c : counts) {
    if (c < 1) throw ContractError("compute_class_weights: all counts must be >= 1");
    n_max = std::max(n_max, c);
    sum += static_cast<double>(c);
  }
  const double mean = sum / static_cast<double>(counts.size());
  ClassWeights out;
  out.counts = counts;
  out.weights.reserve(counts.size());
  for (std::int64_t c : counts)
    out.weights.push_back(static_cast<double>(c) < mean
                              ? static_cast<double>(n_max) / mean
                              : static_cast<double>(n_max) / static_cast<double>(c));
  return out;
}

}  // namespace tg
