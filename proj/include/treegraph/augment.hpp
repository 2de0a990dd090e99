#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>

#include "treegraph/tensor.hpp"

namespace tg {

// Train-time augmentation for tree clouds. Defaults for sigma_j and the
// scale bounds are engineering choices, exposed as flags.
struct AugmentConfig {
  float sigma_j = 0.01f;  // height-scaled jitter std, normalized units
  bool rotate = true;     // rotation about the vertical axis
  bool delete_points = true;
  float s_min = 0.8f;
  float s_max = 1.2f;
  std::uint64_t seed = 0;
  std::optional<float> forced_rotation;  // test hook: fixed angle instead of U(0,2pi)

  void validate() const {
    if (!(sigma_j >= 0.f)) throw ConfigError("sigma_j must be >= 0");
    if (!(s_min > 0.f) || s_min > s_max)
      throw ConfigError("scale bounds must satisfy 0 < s_min <= s_max");
  }
};

// Applies, in order: height-dependent Gaussian jitter (noise per point and
// channel, scaled by the sample-normalized height of the point), per-sample
// rotation about z, per-sample uniform scaling of all channels, and optional
// stochastic deletion (zeroing) that always retains at least ceil(0.8 N)
// points. Shape is preserved throughout. batch is (B,3,N); z is channel 2.
template <typename Real>
BasicTensor<Real> augment_batch(const BasicTensor<Real>& batch, const AugmentConfig& cfg,
                                std::mt19937& rng) {
  cfg.validate();
  if (batch.rank() != 3 || batch.dim(1) != 3)
    throw ShapeError("augment_batch: batch must be (B,3,N), got " + shape_str(batch.shape()));
  const int B = batch.dim(0), N = batch.dim(2);
  auto out = BasicTensor<Real>::from_data(
      batch.shape(), std::vector<Real>(batch.values().begin(), batch.values().end()));
  Real* p = out.data();
  const auto at = [&](int b, int c, int n) -> Real& {
    return p[(static_cast<std::size_t>(b) * 3 + c) * N + n];
  };
  constexpr Real kEps = Real(1e-8);

  if (cfg.sigma_j > 0.f) {
    std::normal_distribution<double> noise(0.0, static_cast<double>(cfg.sigma_j));
    for (int b = 0; b < B; ++b) {
      Real h_min = at(b, 2, 0), h_max = at(b, 2, 0);
      for (int n = 1; n < N; ++n) {
        h_min = std::min(h_min, at(b, 2, n));
        h_max = std::max(h_max, at(b, 2, n));
      }
      const Real denom = h_max - h_min + kEps;
      for (int n = 0; n < N; ++n) {
        const Real hn = (at(b, 2, n) - h_min) / denom;
        for (int c = 0; c < 3; ++c) at(b, c, n) += static_cast<Real>(noise(rng)) * hn;
      }
    }
  }

  if (cfg.rotate) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    for (int b = 0; b < B; ++b) {
      const double theta = cfg.forced_rotation ? static_cast<double>(*cfg.forced_rotation)
                                               : angle(rng);
      const Real c = static_cast<Real>(std::cos(theta));
      const Real s = static_cast<Real>(std::sin(theta));
      for (int n = 0; n < N; ++n) {
        const Real x = at(b, 0, n), y = at(b, 1, n);
        at(b, 0, n) = c * x - s * y;
        at(b, 1, n) = s * x + c * y;
        // z untouched
      }
    }
  }

  {
    std::uniform_real_distribution<double> su(static_cast<double>(cfg.s_min),
                                              static_cast<double>(cfg.s_max));
    for (int b = 0; b < B; ++b) {
      const Real s = static_cast<Real>(su(rng));
      for (int c = 0; c < 3; ++c)
        for (int n = 0; n < N; ++n) at(b, c, n) *= s;
    }
  }

  if (cfg.delete_points && std::uniform_real_distribution<double>(0.0, 1.0)(rng) > 0.5) {
    std::bernoulli_distribution keep(0.9);
    const int min_keep = static_cast<int>(std::ceil(0.8 * N));
    std::vector<char> mask(static_cast<std::size_t>(N));
    std::vector<std::int32_t> perm(static_cast<std::size_t>(N));
    for (int b = 0; b < B; ++b) {
      int kept = 0;
      for (int n = 0; n < N; ++n) {
        mask[static_cast<std::size_t>(n)] = keep(rng) ? 1 : 0;
        kept += mask[static_cast<std::size_t>(n)];
      }
      if (kept < min_keep) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < min_keep; ++i) mask[static_cast<std::size_t>(perm[i])] = 1;
      }
      for (int n = 0; n < N; ++n)
        if (!mask[static_cast<std::size_t>(n)])
          for (int c = 0; c < 3; ++c) at(b, c, n) = Real(0);
    }
  }

  return out;
}

template <typename Real>
BasicTensor<Real> augment_batch(const BasicTensor<Real>& batch, const AugmentConfig& cfg) {
  std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
  return augment_batch(batch, cfg, rng);
}

}  // namespace tg
