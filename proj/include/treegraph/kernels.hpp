#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "treegraph/threads.hpp"

namespace tg {

// C[M x N] += A[M x K] * B[K x N], all row-major.
//
// Blocked saxpy formulation: the j loop vectorizes without FP reassociation,
// so results are independent of SIMD width and thread count (threads own
// disjoint column blocks of C).
template <typename Real>
void gemm_nn(int M, int N, int K, const Real* A, const Real* B, Real* C) {
  constexpr int kJB = 512;  // C/B column panel
  constexpr int kKB = 256;  // B row panel

  const int num_jb = (N + kJB - 1) / kJB;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(tg::thread_count())
#endif
  for (int jb = 0; jb < num_jb; ++jb) {
    const int j0 = jb * kJB;
    const int j1 = std::min(N, j0 + kJB);
    const int jn = j1 - j0;
    for (int k0 = 0; k0 < K; k0 += kKB) {
      const int k1 = std::min(K, k0 + kKB);
      int i = 0;
      for (; i + 4 <= M; i += 4) {
        Real* c0 = C + static_cast<std::size_t>(i) * N + j0;
        Real* c1 = c0 + N;
        Real* c2 = c1 + N;
        Real* c3 = c2 + N;
        for (int k = k0; k < k1; ++k) {
          const Real a0 = A[static_cast<std::size_t>(i) * K + k];
          const Real a1 = A[static_cast<std::size_t>(i + 1) * K + k];
          const Real a2 = A[static_cast<std::size_t>(i + 2) * K + k];
          const Real a3 = A[static_cast<std::size_t>(i + 3) * K + k];
          const Real* b = B + static_cast<std::size_t>(k) * N + j0;
          for (int j = 0; j < jn; ++j) {
            const Real bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        Real* c = C + static_cast<std::size_t>(i) * N + j0;
        for (int k = k0; k < k1; ++k) {
          const Real a = A[static_cast<std::size_t>(i) * K + k];
          const Real* b = B + static_cast<std::size_t>(k) * N + j0;
          for (int j = 0; j < jn; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

// out[N x M] = transpose of A[M x N].
template <typename Real>
void transpose(int M, int N, const Real* A, Real* out) {
  constexpr int kTile = 32;
  for (int i0 = 0; i0 < M; i0 += kTile) {
    const int i1 = std::min(M, i0 + kTile);
    for (int j0 = 0; j0 < N; j0 += kTile) {
      const int j1 = std::min(N, j0 + kTile);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j)
          out[static_cast<std::size_t>(j) * M + i] =
              A[static_cast<std::size_t>(i) * N + j];
    }
  }
}

template <typename Real>
std::vector<Real> transposed(int M, int N, const Real* A) {
  std::vector<Real> out(static_cast<std::size_t>(M) * N);
  transpose(M, N, A, out.data());
  return out;
}

}  // namespace tg
