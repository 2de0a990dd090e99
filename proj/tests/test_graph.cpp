#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "treegraph/gradcheck.hpp"
#include "treegraph/graph.hpp"
#include "treegraph/nn.hpp"

using tg::TensorD;

namespace {

template <typename Real>
tg::BasicTensor<Real> cloud_tensor(const std::vector<tg::PointMatrix>& clouds) {
  const int b = static_cast<int>(clouds.size());
  const int n = static_cast<int>(clouds[0].count());
  std::vector<Real> v(static_cast<std::size_t>(b) * 3 * n);
  for (int bi = 0; bi < b; ++bi)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < n; ++i)
        v[(static_cast<std::size_t>(bi) * 3 + c) * n + i] =
            static_cast<Real>(clouds[static_cast<std::size_t>(bi)].at(static_cast<std::size_t>(i), c));
  return tg::BasicTensor<Real>::from_data({b, 3, n}, std::move(v));
}

}  // namespace

TEST_CASE("knn on a collinear cloud", "[graph]") {
  tg::PointMatrix m(4);
  m.at(1, 0) = 1.f;
  m.at(2, 0) = 2.f;
  m.at(3, 0) = 4.f;
  auto x = cloud_tensor<float>({m});
  const auto idx = tg::knn_single(x, 2);
  // point 0: itself then point 1
  CHECK(idx.data[0] == 0);
  CHECK(idx.data[1] == 1);
  // point 3 (x=4): itself then point 2 (x=2)
  CHECK(idx.data[6] == 3);
  CHECK(idx.data[7] == 2);
}

TEST_CASE("knn with k=1 returns self", "[graph]") {
  std::mt19937 rng(73);
  auto x = cloud_tensor<float>({oracle::random_cloud(12, rng)});
  const auto idx = tg::knn_single(x, 1);
  for (int i = 0; i < 12; ++i) CHECK(idx.data[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("knn rejects k out of range", "[graph]") {
  std::mt19937 rng(74);
  auto x = cloud_tensor<float>({oracle::random_cloud(8, rng)});
  CHECK_THROWS_AS(tg::knn_single(x, 9), tg::ContractError);
  CHECK_THROWS_AS(tg::knn_multiscale(x, {2, 4, 9}), tg::ContractError);
}

TEST_CASE("knn_multiscale matches the exhaustive oracle on all scales", "[graph]") {
  std::mt19937 rng(79);
  const int b = 2, d = 6, n = 64;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> feat(static_cast<std::size_t>(b) * d * n);
  for (auto& v : feat) v = u(rng);
  auto x = TensorD::from_data({b, d, n}, feat);
  const tg::ScaleTriple scales{5, 20, 50};
  const auto got = tg::knn_multiscale(x, scales);

  for (int bi = 0; bi < b; ++bi) {
    const std::vector<double> block(feat.begin() + static_cast<std::size_t>(bi) * d * n,
                                    feat.begin() + static_cast<std::size_t>(bi + 1) * d * n);
    const auto ref = oracle::knn_exhaustive(block, d, n, 50);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 50; ++k) {
        const auto want = ref[static_cast<std::size_t>(i) * 50 + k];
        if (k < 5)
          CHECK(got.local.data[(static_cast<std::size_t>(bi) * n + i) * 5 + k] == want);
        if (k < 20)
          CHECK(got.branch.data[(static_cast<std::size_t>(bi) * n + i) * 20 + k] == want);
        CHECK(got.canopy.data[(static_cast<std::size_t>(bi) * n + i) * 50 + k] == want);
      }
  }
}

TEST_CASE("knn at a coinciding triple yields identical index sets", "[graph]") {
  std::mt19937 rng(83);
  auto x = cloud_tensor<float>({oracle::random_cloud(30, rng)});
  const auto got = tg::knn_multiscale(x, {7, 7, 7});
  CHECK(got.local.data == got.branch.data);
  CHECK(got.branch.data == got.canopy.data);
}

TEST_CASE("every point appears in its own neighbor row", "[graph]") {
  std::mt19937 rng(89);
  auto x = cloud_tensor<float>({oracle::random_cloud(40, rng)});
  const auto got = tg::knn_multiscale(x, {3, 8, 15});
  for (int i = 0; i < 40; ++i) {
    bool found = false;
    for (int k = 0; k < 3; ++k)
      if (got.local.data[static_cast<std::size_t>(i) * 3 + k] == i) found = true;
    CHECK(found);
  }
}

TEST_CASE("scale feature channel layout and the 3-4-5 edge", "[graph]") {
  // center at origin, neighbor at (3,4,0)
  tg::PointMatrix m(5);
  m.at(1, 0) = 3.f;
  m.at(1, 1) = 4.f;
  m.at(2, 0) = -1.f;
  m.at(3, 1) = 7.f;
  m.at(4, 2) = 9.f;
  auto x = cloud_tensor<float>({m});
  const auto idx = tg::knn_multiscale(x, {2, 3, 4});
  const auto f = tg::build_scale_features(x, idx, 1e-8f);

  REQUIRE(f.f1.shape() == std::vector<int>{1, 6, 5, 2});
  REQUIRE(f.f2.shape() == std::vector<int>{1, 9, 5, 3});
  REQUIRE(f.f3.shape() == std::vector<int>{1, 7, 5, 4});

  // self edge of point 0: R = 0, normalized block 0, distance 0
  const auto at = [](const tg::Tensor& t, int c, int n, int k) {
    const int N = t.dim(2), K = t.dim(3);
    return t.data()[((static_cast<std::size_t>(c)) * N + n) * K + k];
  };
  for (int c = 0; c < 3; ++c) CHECK(at(f.f2, c, 0, 0) == 0.f);        // R
  for (int c = 3; c < 6; ++c) CHECK(at(f.f2, c, 0, 0) == 0.f);        // normalized
  CHECK(at(f.f3, 6, 0, 0) == 0.f);                                    // distance

  // find the edge 0 -> 1 in the canopy scale and check R, unit, d
  int slot = -1;
  for (int k = 0; k < 4; ++k)
    if (idx.canopy.data[static_cast<std::size_t>(k)] == 1) slot = k;
  REQUIRE(slot >= 0);
  CHECK(at(f.f3, 0, 0, slot) == Catch::Approx(3.0));
  CHECK(at(f.f3, 1, 0, slot) == Catch::Approx(4.0));
  CHECK(at(f.f3, 6, 0, slot) == Catch::Approx(5.0));
  // X_ctr channels of F3 are 3..5
  CHECK(at(f.f3, 3, 0, slot) == 0.f);

  int bslot = -1;
  for (int k = 0; k < 3; ++k)
    if (idx.branch.data[static_cast<std::size_t>(k)] == 1) bslot = k;
  REQUIRE(bslot >= 0);
  CHECK(at(f.f2, 3, 0, bslot) == Catch::Approx(0.6).margin(1e-6));
  CHECK(at(f.f2, 4, 0, bslot) == Catch::Approx(0.8).margin(1e-6));
}

TEST_CASE("normalized branch channels stay within unit norm", "[graph]") {
  std::mt19937 rng(97);
  auto x = cloud_tensor<float>({oracle::random_cloud(64, rng)});
  const auto idx = tg::knn_multiscale(x, {5, 20, 50});
  const auto f = tg::build_scale_features(x, idx, 1e-8f);
  const int n = 64, k = 20;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      double s = 0;
      for (int c = 3; c < 6; ++c) {
        const double v = f.f2.data()[(static_cast<std::size_t>(c) * n + i) * k + j];
        s += v * v;
      }
      CHECK(std::sqrt(s) <= 1.0 + 1e-5);
    }
}

TEST_CASE("rigid translation shifts only the center channels", "[graph]") {
  std::mt19937 rng(101);
  auto base = oracle::random_cloud(32, rng);
  tg::PointMatrix moved = base;
  for (std::size_t i = 0; i < moved.count(); ++i) {
    moved.at(i, 0) += 5.f;
    moved.at(i, 1) -= 2.f;
    moved.at(i, 2) += 0.5f;
  }
  auto xa = cloud_tensor<float>({base});
  auto xb = cloud_tensor<float>({moved});
  const tg::ScaleTriple scales{4, 8, 16};
  const auto fa = tg::build_scale_features(xa, tg::knn_multiscale(xa, scales), 1e-8f);
  const auto fb = tg::build_scale_features(xb, tg::knn_multiscale(xb, scales), 1e-8f);
  const int n = 32, k = 16;
  for (std::size_t t = 0; t < static_cast<std::size_t>(3) * n * k; ++t) {
    CHECK(fa.f3.data()[t] == Catch::Approx(fb.f3.data()[t]).margin(2e-5));  // R block
  }
  // distance channel (6) unchanged
  for (std::size_t t = 0; t < static_cast<std::size_t>(n) * k; ++t)
    CHECK(fa.f3.data()[static_cast<std::size_t>(6) * n * k + t] ==
          Catch::Approx(fb.f3.data()[static_cast<std::size_t>(6) * n * k + t]).margin(2e-5));
  // center channels shifted by exactly the translation
  for (std::size_t t = 0; t < static_cast<std::size_t>(n) * k; ++t)
    CHECK(fb.f3.data()[static_cast<std::size_t>(3) * n * k + t] -
              fa.f3.data()[static_cast<std::size_t>(3) * n * k + t] ==
          Catch::Approx(5.f).margin(2e-5));
}

TEST_CASE("permuting points permutes neighbor structure consistently", "[graph]") {
  std::mt19937 rng(103);
  const int n = 24;
  auto base = oracle::random_cloud(n, rng);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  tg::PointMatrix shuffled(n);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      shuffled.at(static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]), c) =
          base.at(static_cast<std::size_t>(i), c);

  auto xa = cloud_tensor<float>({base});
  auto xb = cloud_tensor<float>({shuffled});
  const auto ia = tg::knn_single(xa, 5);
  const auto ib = tg::knn_single(xb, 5);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 5; ++k) {
      const auto a = ia.data[static_cast<std::size_t>(i) * 5 + k];
      const auto b = ib.data[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]) * 5 + k];
      CHECK(perm[static_cast<std::size_t>(a)] == b);
    }
}

TEST_CASE("edgeconv with identity-like behavior keeps output sign contract", "[graph]") {
  // single channel, h(x_i, x_j - x_i) built so the conv reproduces x_j - x_i:
  // weight [0, 1] over the [center, displacement] blocks
  const int n = 6;
  std::vector<float> vals{5.f, 1.f, 0.5f, 0.2f, 0.1f, 0.05f};
  auto x = tg::Tensor::from_data({1, 1, n}, vals);
  const auto idx = tg::knn_single(x, 3);
  auto ef = tg::edge_features(x, idx);
  auto w = tg::Tensor::from_data({1, 2}, {0.f, 1.f});
  auto h = tg::pointwise_conv(ef, w);
  auto out = tg::max_over_axis(h, 3);
  // point 0 holds the strict maximum value, so every displacement is <= 0
  CHECK(out.data()[0] <= 0.f);
}

TEST_CASE("edgeconv output shape", "[graph]") {
  std::mt19937 rng(107);
  auto x = cloud_tensor<float>({oracle::random_cloud(20, rng), oracle::random_cloud(20, rng)});
  tg::ParamRegistry<float> reg;
  std::mt19937 init(1);
  tg::EdgeConvLayer<float> layer(reg, "ec", 3, 16, 5, 0.2f, init);
  auto y = layer.forward(x, false);
  CHECK(y.shape() == std::vector<int>{2, 16, 20});
}

TEST_CASE("gradients flow through edgeconv", "[graph][gradsuite]") {
  std::mt19937 rng(109);
  const int n = 12, k = 4;
  auto mk = [&](std::mt19937& r) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(3) * n);
    for (auto& x : v) x = u(r);
    return TensorD::from_data({1, 3, n}, std::move(v));
  };
  auto x = mk(rng);
  const double err = tg::grad_check(
      [&](TensorD& p) {
        tg::ParamRegistry<double> reg;
        std::mt19937 init(55);
        tg::EdgeConvLayer<double> layer(reg, "ec", 3, 8, k, 0.2, init);
        return tg::sum_all(layer.forward(p, true));
      },
      x, 1e-4);
  CHECK(err < 1e-3);
}
