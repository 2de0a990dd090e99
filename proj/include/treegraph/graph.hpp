#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "treegraph/tensor.hpp"
#include "treegraph/threads.hpp"

namespace tg {

// Neighborhood sizes for the local / branch / canopy scales.
struct ScaleTriple {
  int k_local = 5;
  int k_branch = 20;
  int k_canopy = 50;

  // The hierarchical constraint 1 <= k1 < k2 < k3 is enforced at the
  // configuration boundary; the graph kernels themselves accept any
  // k <= N (coinciding scales are legal inputs there).
  void validate_hierarchy() const {
    if (k_local < 1 || k_local >= k_branch || k_branch >= k_canopy)
      throw ConfigError("scale triple must satisfy 1 <= k1 < k2 < k3, got (" +
                        std::to_string(k_local) + "," + std::to_string(k_branch) + "," +
                        std::to_string(k_canopy) + ")");
  }
};

// Per-scale neighbor index tables, each (B, N, k_s).
struct NeighborIndexSet {
  IndexArray local;
  IndexArray branch;
  IndexArray canopy;
};

namespace detail {

// Sorted k nearest (squared Euclidean, then index) for every point of one
// batch item. Distances are accumulated in 64-bit so the ranking matches a
// naive exhaustive oracle exactly.
template <typename Real>
void knn_rows(const Real* feat, int D, int N, int k_max,
              std::vector<std::int32_t>& out, int stride) {
  std::vector<double> ft(static_cast<std::size_t>(N) * D);  // N x D, contiguous rows
  for (int d = 0; d < D; ++d)
    for (int n = 0; n < N; ++n)
      ft[static_cast<std::size_t>(n) * D + d] = static_cast<double>(feat[static_cast<std::size_t>(d) * N + n]);

  std::vector<double> dist(static_cast<std::size_t>(N) * N, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count())
#endif
  for (int i = 0; i < N; ++i) {
    const double* a = ft.data() + static_cast<std::size_t>(i) * D;
    for (int j = i + 1; j < N; ++j) {
      const double* b = ft.data() + static_cast<std::size_t>(j) * D;
      double acc = 0.0;
      for (int d = 0; d < D; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
      }
      dist[static_cast<std::size_t>(i) * N + j] = acc;
      dist[static_cast<std::size_t>(j) * N + i] = acc;
    }
  }

#ifdef _OPENMP
#pragma omp parallel num_threads(tg::thread_count())
#endif
  {
    std::vector<std::int32_t> idx(static_cast<std::size_t>(N));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int i = 0; i < N; ++i) {
      const double* row = dist.data() + static_cast<std::size_t>(i) * N;
      std::iota(idx.begin(), idx.end(), 0);
      const auto cmp = [row](std::int32_t a, std::int32_t b) {
        if (row[a] != row[b]) return row[a] < row[b];
        return a < b;
      };
      if (k_max < N) {
        std::nth_element(idx.begin(), idx.begin() + k_max, idx.end(), cmp);
        std::sort(idx.begin(), idx.begin() + k_max, cmp);
      } else {
        std::sort(idx.begin(), idx.end(), cmp);
      }
      std::copy(idx.begin(), idx.begin() + k_max,
                out.begin() + static_cast<std::size_t>(i) * stride);
    }
  }
}

}  // namespace detail

// k nearest neighbors of every point in the current feature space for a
// (B, D, N) tensor. Rows are sorted by (squared distance, index), so each
// point lists itself first on duplicate-free inputs.
template <typename Real>
IndexArray knn_single(const BasicTensor<Real>& features, int k) {
  if (features.rank() != 3)
    throw ShapeError("knn: features must be (B,D,N), got " + shape_str(features.shape()));
  const int B = features.dim(0), D = features.dim(1), N = features.dim(2);
  if (k < 1 || k > N)
    throw ContractError("knn: k=" + std::to_string(k) + " must lie in [1, N=" +
                        std::to_string(N) + "]");
  IndexArray out({B, N, k}, std::vector<std::int32_t>(static_cast<std::size_t>(B) * N * k));
  for (int b = 0; b < B; ++b)
    detail::knn_rows(features.data() + static_cast<std::size_t>(b) * D * N, D, N, k,
                     out.data, k);
  return out;
}

template <typename Real>
NeighborIndexSet knn_multiscale(const BasicTensor<Real>& features, const ScaleTriple& scales) {
  if (features.rank() != 3)
    throw ShapeError("knn_multiscale: features must be (B,D,N), got " +
                     shape_str(features.shape()));
  const int B = features.dim(0), D = features.dim(1), N = features.dim(2);
  const int k_max = std::max({scales.k_local, scales.k_branch, scales.k_canopy});
  const int k_min = std::min({scales.k_local, scales.k_branch, scales.k_canopy});
  if (k_min < 1 || k_max > N)
    throw ContractError("knn_multiscale: scales must lie in [1, N=" + std::to_string(N) + "]");

  // One sorted top-k_max ranking per point; each scale is a prefix of it.
  std::vector<std::int32_t> ranked(static_cast<std::size_t>(B) * N * k_max);
  for (int b = 0; b < B; ++b)
    detail::knn_rows(features.data() + static_cast<std::size_t>(b) * D * N, D, N, k_max,
                     ranked, k_max);

  const auto take = [&](int k) {
    IndexArray arr({B, N, k}, std::vector<std::int32_t>(static_cast<std::size_t>(B) * N * k));
    for (std::size_t row = 0; row < static_cast<std::size_t>(B) * N; ++row)
      std::copy(ranked.begin() + row * k_max, ranked.begin() + row * k_max + k,
                arr.data.begin() + row * k);
    return arr;
  };
  return {take(scales.k_local), take(scales.k_branch), take(scales.k_canopy)};
}

// Scale-adaptive edge feature tensors. With displacement R = X_nbr - X_ctr:
//   local  F1 = [R, X_ctr]                 (B, 6, N, k1)  fine surface detail
//   branch F2 = [R, R/(||R||+eps), X_ctr]  (B, 9, N, k2)  growth directions
//   canopy F3 = [R, X_ctr, ||R||]          (B, 7, N, k3)  global extent
template <typename Real>
struct BasicScaleFeatures {
  BasicTensor<Real> f1, f2, f3;
};

using ScaleFeatures = BasicScaleFeatures<float>;

template <typename Real>
BasicScaleFeatures<Real> build_scale_features(const BasicTensor<Real>& points,
                                              const NeighborIndexSet& idx,
                                              Real eps = Real(1e-8)) {
  if (points.rank() != 3 || points.dim(1) != 3)
    throw ShapeError("build_scale_features: points must be (B,3,N), got " +
                     shape_str(points.shape()));
  if (!(eps > Real(0))) throw ConfigError("build_scale_features: eps must be positive");
  const int B = points.dim(0), N = points.dim(2);

  const auto scale = [&](const IndexArray& ia, int which) {
    const int k = ia.shape[2];
    auto nbr = gather_last_axis(points, ia);
    // centers replicated across the neighbor axis via a self-index gather
    IndexArray self_k({B, N, k}, std::vector<std::int32_t>(static_cast<std::size_t>(B) * N * k));
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n)
        std::fill_n(self_k.data.begin() + (static_cast<std::size_t>(b) * N + n) * k, k, n);
    auto ctr = gather_last_axis(points, self_k);
    auto r = sub(nbr, ctr);
    if (which == 1) return concat_axis<Real>({r, ctr}, 1);
    if (which == 2) return concat_axis<Real>({r, l2_normalize_axis(r, 1, eps), ctr}, 1);
    return concat_axis<Real>({r, ctr, l2_norm_axis(r, 1)}, 1);
  };

  BasicScaleFeatures<Real> out;
  out.f1 = scale(idx.local, 1);
  out.f2 = scale(idx.branch, 2);
  out.f3 = scale(idx.canopy, 3);
  return out;
}

}  // namespace tg
