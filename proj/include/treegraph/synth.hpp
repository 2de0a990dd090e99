#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "treegraph/sampling.hpp"
#include "treegraph/train.hpp"

namespace tg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Three synthetic tree archetypes for desk-scale experiments. The classes
// are cleanly separable in full 3-d geometry while their height profiles
// overlap enough that a height-histogram baseline stays well below perfect:
//   broadleaf - trunk plus an ellipsoidal crown blob
//   conifer   - trunk plus a tapered cone, taper fullness varies per sample
//   shrub     - trunk plus three offset crown lobes at varied heights
inline const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names{"broadleaf", "conifer", "shrub"};
  return names;
}

namespace detail {

inline double urand(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline void push_point(PointMatrix& m, std::size_t i, double x, double y, double z) {
  m.at(i, 0) = static_cast<float>(x);
  m.at(i, 1) = static_cast<float>(y);
  m.at(i, 2) = static_cast<float>(z);
}

}  // namespace detail

// One synthetic cloud of `n_points` raw (unnormalized) coordinates.
// class_idx indexes synth_class_names().
inline PointCloudSample synth_cloud(int class_idx, std::size_t n_points, std::uint64_t seed) {
  using detail::urand;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double h = urand(rng, 8.0, 14.0);
  const double trunk_top = h * urand(rng, 0.18, 0.32);
  const std::size_t n_trunk = static_cast<std::size_t>(static_cast<double>(n_points) *
                                                       urand(rng, 0.10, 0.20));
  const double trunk_r = 0.015 * h;

  PointCloudSample out;
  out.label = class_idx;
  out.points = PointMatrix(n_points);

  for (std::size_t i = 0; i < n_trunk; ++i) {
    const double z = urand(rng, 0.0, trunk_top);
    const double a = urand(rng, 0.0, 2.0 * M_PI);
    const double r = trunk_r * std::sqrt(urand(rng, 0.0, 1.0));
    detail::push_point(out.points, i, r * std::cos(a), r * std::sin(a), z);
  }

  const std::size_t n_crown = n_points - n_trunk;
  const double jitter = 0.012 * h;

  if (class_idx == 0) {  // broadleaf: ellipsoidal crown on a stick
    const double zc = 0.5 * (trunk_top + h);
    const double rr = 0.5 * (h - trunk_top) * urand(rng, 0.85, 1.05);
    const double rxy = rr * urand(rng, 0.75, 1.05);
    const double shell = urand(rng, 0.35, 0.6);  // surface bias
    for (std::size_t i = 0; i < n_crown; ++i) {
      const double u = std::pow(urand(rng, 0.0, 1.0), shell);
      const double phi = urand(rng, 0.0, 2.0 * M_PI);
      const double ct = urand(rng, -1.0, 1.0);
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      detail::push_point(out.points, n_trunk + i,
                         rxy * u * st * std::cos(phi) + jitter * gauss(rng),
                         rxy * u * st * std::sin(phi) + jitter * gauss(rng),
                         zc + rr * u * ct + jitter * gauss(rng));
    }
  } else if (class_idx == 1) {  // conifer: tapered cone, variable fullness
    const double r0 = h * urand(rng, 0.16, 0.28);
    const double fullness = urand(rng, 0.7, 1.6);  // z-density exponent
    const double shell = urand(rng, 0.25, 0.5);
    for (std::size_t i = 0; i < n_crown; ++i) {
      const double t = std::pow(urand(rng, 0.0, 1.0), fullness);  // 0 at base
      const double z = trunk_top + t * (h - trunk_top);
      const double rz = r0 * (1.0 - t);
      const double rho = rz * std::pow(urand(rng, 0.0, 1.0), shell);
      const double a = urand(rng, 0.0, 2.0 * M_PI);
      detail::push_point(out.points, n_trunk + i,
                         rho * std::cos(a) + jitter * gauss(rng),
                         rho * std::sin(a) + jitter * gauss(rng), z + jitter * gauss(rng));
    }
  } else {  // shrub: three offset lobes
    const double base_angle = urand(rng, 0.0, 2.0 * M_PI);
    double zfrac[3] = {urand(rng, 0.30, 0.45), urand(rng, 0.50, 0.70), urand(rng, 0.72, 0.92)};
    double lx[3], ly[3], lz[3], lr[3], lrz[3];
    for (int l = 0; l < 3; ++l) {
      const double ang = base_angle + l * 2.0 * M_PI / 3.0 + urand(rng, -0.3, 0.3);
      const double off = h * urand(rng, 0.10, 0.20);
      lx[l] = off * std::cos(ang);
      ly[l] = off * std::sin(ang);
      lz[l] = trunk_top + zfrac[l] * (h - trunk_top);
      lr[l] = h * urand(rng, 0.10, 0.17);
      lrz[l] = h * urand(rng, 0.07, 0.12);
    }
    for (std::size_t i = 0; i < n_crown; ++i) {
      const int l = static_cast<int>(urand(rng, 0.0, 3.0));
      const double u = std::pow(urand(rng, 0.0, 1.0), 0.45);
      const double phi = urand(rng, 0.0, 2.0 * M_PI);
      const double ct = urand(rng, -1.0, 1.0);
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      detail::push_point(out.points, n_trunk + i,
                         lx[l] + lr[l] * u * st * std::cos(phi) + jitter * gauss(rng),
                         ly[l] + lr[l] * u * st * std::sin(phi) + jitter * gauss(rng),
                         lz[l] + lrz[l] * u * ct + jitter * gauss(rng));
    }
  }
  return out;
}

// Fully preprocessed in-memory train/test sets: raw clouds are generated at
// 1.25x the target density, then voxel/FPS/normalized through the standard
// pipeline.
struct SynthSplits {
  CloudDataset train;
  CloudDataset test;
};

inline SynthSplits make_synthetic_splits(int train_per_class, int test_per_class,
                                         std::size_t points, std::uint64_t seed) {
  if (train_per_class < 1 || test_per_class < 0)
    throw ConfigError("synthetic split sizes must be positive");
  SamplingConfig scfg;
  scfg.target_points = points;
  SynthSplits out;
  out.train.class_names = synth_class_names();
  out.test.class_names = synth_class_names();
  const std::size_t raw_points = points + points / 4;
  for (int cls = 0; cls < 3; ++cls) {
    for (int i = 0; i < train_per_class + test_per_class; ++i) {
      const std::uint64_t s = splitmix64(seed ^ (static_cast<std::uint64_t>(cls) << 32 |
                                                 static_cast<std::uint64_t>(i)));
      auto cloud = synth_cloud(cls, raw_points, s);
      SamplingConfig c2 = scfg;
      c2.seed = splitmix64(s ^ 0xabcdefULL);
      auto& dst = i < train_per_class ? out.train : out.test;
      dst.samples.push_back(preprocess_cloud(cloud, c2));
    }
  }
  return out;
}

// Nearest-centroid classifier over per-sample height histograms; the
// reference floor that any learned model has to beat. Returns test OA in
// percent. Expects unit-sphere-normalized clouds (z in [-1,1]).
inline double height_histogram_baseline_oa(const CloudDataset& train, const CloudDataset& test,
                                           int bins = 16) {
  if (train.size() == 0 || test.size() == 0)
    throw ContractError("baseline: empty split");
  const int c = train.num_classes();
  const auto featurize = [bins](const PointCloudSample& s) {
    std::vector<double> f(static_cast<std::size_t>(bins), 0.0);
    const std::size_t n = s.points.count();
    for (std::size_t i = 0; i < n; ++i) {
      double z = (static_cast<double>(s.points.at(i, 2)) + 1.0) / 2.0;
      int b = static_cast<int>(z * bins);
      b = std::clamp(b, 0, bins - 1);
      f[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(n);
    }
    return f;
  };

  std::vector<std::vector<double>> centroids(static_cast<std::size_t>(c),
                                             std::vector<double>(static_cast<std::size_t>(bins), 0.0));
  std::vector<int> counts(static_cast<std::size_t>(c), 0);
  for (const auto& s : train.samples) {
    const auto f = featurize(s);
    auto& ctr = centroids[static_cast<std::size_t>(s.label)];
    for (int b = 0; b < bins; ++b) ctr[static_cast<std::size_t>(b)] += f[static_cast<std::size_t>(b)];
    ++counts[static_cast<std::size_t>(s.label)];
  }
  for (int k = 0; k < c; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0)
      for (auto& v : centroids[static_cast<std::size_t>(k)])
        v /= static_cast<double>(counts[static_cast<std::size_t>(k)]);

  std::size_t correct = 0;
  for (const auto& s : test.samples) {
    const auto f = featurize(s);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) {
      double d = 0.0;
      for (int b = 0; b < bins; ++b) {
        const double diff = f[static_cast<std::size_t>(b)] -
                            centroids[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best == s.label) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace tg
