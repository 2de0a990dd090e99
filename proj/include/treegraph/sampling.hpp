#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "treegraph/pointcloud.hpp"
#include "treegraph/threads.hpp"

namespace tg {

struct SamplingConfig {
  std::size_t target_points = 1024;
  std::size_t voxel_target = 30000;
  std::size_t voxel_tolerance = 500;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (target_points < 4) throw ConfigError("target_points must be >= 4");
    if (voxel_tolerance >= voxel_target)
      throw ConfigError("voxel_tolerance must be smaller than voxel_target");
  }
};

// D[i][j] = -||p_i - p_j||^2, computed pairwise in 64-bit. Symmetric, zero
// diagonal, entries <= 0.
template <typename Real = float>
std::vector<Real> pairwise_neg_sq_dist(const PointMatrix& pts) {
  if (!pts.finite()) throw ContractError("pairwise_neg_sq_dist: non-finite coordinates");
  const std::size_t n = pts.count();
  std::vector<Real> d(n * n, Real(0));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count())
#endif
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Real v = static_cast<Real>(-sq_dist(pts.row(i), pts.row(j)));
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  }
  return d;
}

// Greedy farthest point sampling: each pick maximizes the minimum distance to
// the already-selected set (ties to the lowest index). The first index comes
// from the seeded RNG, or is 0 when no seed is given. Incremental min-distance
// cache, O(N*m).
inline std::vector<std::int32_t> farthest_point_sample(
    const PointMatrix& pts, std::size_t m, std::optional<std::uint64_t> seed = {}) {
  const std::size_t n = pts.count();
  if (m > n)
    throw ContractError("farthest_point_sample: m=" + std::to_string(m) +
                        " exceeds point count " + std::to_string(n));
  std::vector<std::int32_t> picks;
  if (m == 0) return picks;
  picks.reserve(m);

  std::size_t first = 0;
  if (seed) {
    std::mt19937_64 rng(*seed);
    first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }
  picks.push_back(static_cast<std::int32_t>(first));

  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);  // duplicates would otherwise tie at distance 0
  taken[first] = 1;
  std::size_t last = first;
  for (std::size_t step = 1; step < m; ++step) {
    const float* p = pts.row(last);
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sq_dist(pts.row(i), p);
      if (d < min_d[i]) min_d[i] = d;
      if (!taken[i] && min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    taken[best] = 1;
    picks.push_back(static_cast<std::int32_t>(best));
    last = best;
  }
  return picks;
}

inline PointMatrix gather_points(const PointMatrix& pts, const std::vector<std::int32_t>& idx) {
  PointMatrix out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const float* src = pts.row(static_cast<std::size_t>(idx[i]));
    float* dst = out.row(i);
    dst[0] = src[0];
    dst[1] = src[1];
    dst[2] = src[2];
  }
  return out;
}

struct VoxelResult {
  PointMatrix points;
  bool converged = true;  // false when bisection exhausted its iterations
};

namespace detail {

inline std::uint64_t voxel_key(const float* p, const double* mn, double edge) {
  const auto gx = static_cast<std::uint64_t>((p[0] - mn[0]) / edge);
  const auto gy = static_cast<std::uint64_t>((p[1] - mn[1]) / edge);
  const auto gz = static_cast<std::uint64_t>((p[2] - mn[2]) / edge);
  return (gx << 42) | (gy << 21) | gz;  // 21 bits per axis
}

}  // namespace detail

// Reduces a dense cloud to roughly cfg.voxel_target points by bisecting the
// voxel edge length until the occupied-voxel count lands within the
// tolerance; each output point is the centroid of its voxel's members.
// Clouds at or below target+tolerance pass through unchanged.
inline VoxelResult voxel_downsample_recursive(const PointMatrix& pts, const SamplingConfig& cfg) {
  cfg.validate();
  if (!pts.finite()) throw ContractError("voxel_downsample_recursive: non-finite coordinates");
  const std::size_t n = pts.count();
  if (n <= cfg.voxel_target + cfg.voxel_tolerance) return {pts, true};

  double mn[3], mx[3];
  for (int c = 0; c < 3; ++c) {
    mn[c] = std::numeric_limits<double>::infinity();
    mx[c] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      mn[c] = std::min(mn[c], static_cast<double>(pts.at(i, c)));
      mx[c] = std::max(mx[c], static_cast<double>(pts.at(i, c)));
    }
  const double diag = std::sqrt((mx[0] - mn[0]) * (mx[0] - mn[0]) +
                                (mx[1] - mn[1]) * (mx[1] - mn[1]) +
                                (mx[2] - mn[2]) * (mx[2] - mn[2]));
  if (diag < 1e-12) return {pts, true};  // degenerate extent, nothing to merge

  const auto count_voxels = [&](double edge) {
    std::unordered_map<std::uint64_t, std::uint32_t> cells;
    cells.reserve(cfg.voxel_target * 2);
    for (std::size_t i = 0; i < n; ++i) ++cells[detail::voxel_key(pts.row(i), mn, edge)];
    return cells.size();
  };

  double lo = diag / 1024.0;  // finer than any practical density
  double hi = diag;
  const auto target = static_cast<long long>(cfg.voxel_target);
  const auto tol = static_cast<long long>(cfg.voxel_tolerance);
  double best_edge = lo;
  long long best_err = std::numeric_limits<long long>::max();
  bool converged = false;
  for (int iter = 0; iter < 64; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const auto count = static_cast<long long>(count_voxels(mid));
    const long long err = std::llabs(count - target);
    if (err < best_err) {
      best_err = err;
      best_edge = mid;
    }
    if (err <= tol) {
      converged = true;
      break;
    }
    if (count > target)
      lo = mid;  // too many cells -> coarsen
    else
      hi = mid;
  }

  std::unordered_map<std::uint64_t, std::array<double, 4>> cells;  // sums + count
  cells.reserve(cfg.voxel_target * 2);
  std::vector<std::uint64_t> order;  // first-seen order keeps output deterministic
  order.reserve(cfg.voxel_target * 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t key = detail::voxel_key(pts.row(i), mn, best_edge);
    auto [it, inserted] = cells.try_emplace(key, std::array<double, 4>{0, 0, 0, 0});
    if (inserted) order.push_back(key);
    auto& acc = it->second;
    acc[0] += pts.at(i, 0);
    acc[1] += pts.at(i, 1);
    acc[2] += pts.at(i, 2);
    acc[3] += 1.0;
  }
  VoxelResult out;
  out.converged = converged;
  out.points = PointMatrix(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& acc = cells[order[i]];
    out.points.at(i, 0) = static_cast<float>(acc[0] / acc[3]);
    out.points.at(i, 1) = static_cast<float>(acc[1] / acc[3]);
    out.points.at(i, 2) = static_cast<float>(acc[2] / acc[3]);
  }
  return out;
}

// Full density standardization for one cloud: voxel-reduce when oversized,
// farthest-point-sample to the target count, then unit-sphere normalize.
inline PointCloudSample preprocess_cloud(const PointCloudSample& sample, const SamplingConfig& cfg) {
  cfg.validate();
  if (sample.points.count() < cfg.target_points)
    throw ContractError(sample.source_path + ": cloud has " +
                        std::to_string(sample.points.count()) + " points, need at least " +
                        std::to_string(cfg.target_points) + " for sampling");
  PointCloudSample work = sample;
  auto voxeled = voxel_downsample_recursive(sample.points, cfg);
  if (voxeled.points.count() >= cfg.target_points) work.points = std::move(voxeled.points);
  auto idx = farthest_point_sample(work.points, cfg.target_points, cfg.seed);
  work.points = gather_points(work.points, idx);
  return normalize_unit_sphere(work);
}

}  // namespace tg
