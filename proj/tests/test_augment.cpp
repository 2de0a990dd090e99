#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "treegraph/augment.hpp"

namespace {

tg::Tensor random_batch(int b, int n, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(0.1f, 1.f);  // away from zero so
  std::vector<float> v(static_cast<std::size_t>(b) * 3 * n);
  for (auto& x : v) x = u(rng);
  return tg::Tensor::from_data({b, 3, n}, std::move(v));
}

float at(const tg::Tensor& t, int b, int c, int n) {
  const int N = t.dim(2);
  return t.data()[(static_cast<std::size_t>(b) * 3 + c) * N + n];
}

}  // namespace

TEST_CASE("augment with all gates closed is the identity", "[augment]") {
  std::mt19937 rng(3);
  auto batch = random_batch(2, 32, rng);
  tg::AugmentConfig cfg;
  cfg.sigma_j = 0.f;
  cfg.rotate = false;
  cfg.delete_points = false;
  cfg.s_min = cfg.s_max = 1.f;
  auto out = tg::augment_batch(batch, cfg);
  REQUIRE(out.shape() == batch.shape());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(out.data()[i] == batch.data()[i]);
}

TEST_CASE("forced quarter rotation maps (1,0,5) to (0,1,5)", "[augment]") {
  std::vector<float> v{1.f, 2.f, 0.f, 4.f,   // x
                       0.f, 0.f, 3.f, 4.f,   // y
                       5.f, 1.f, 2.f, 3.f};  // z
  auto batch = tg::Tensor::from_data({1, 3, 4}, v);
  tg::AugmentConfig cfg;
  cfg.sigma_j = 0.f;
  cfg.rotate = true;
  cfg.delete_points = false;
  cfg.s_min = cfg.s_max = 1.f;
  cfg.forced_rotation = static_cast<float>(M_PI / 2.0);
  auto out = tg::augment_batch(batch, cfg);
  CHECK(at(out, 0, 0, 0) == Catch::Approx(0.0).margin(1e-6));
  CHECK(at(out, 0, 1, 0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(at(out, 0, 2, 0) == 5.f);  // z bit-exact
}

TEST_CASE("rotation preserves xy norm and leaves z untouched", "[augment]") {
  std::mt19937 rng(5);
  auto batch = random_batch(3, 64, rng);
  tg::AugmentConfig cfg;
  cfg.sigma_j = 0.f;
  cfg.rotate = true;
  cfg.delete_points = false;
  cfg.s_min = cfg.s_max = 1.f;
  cfg.seed = 11;
  auto out = tg::augment_batch(batch, cfg);
  for (int b = 0; b < 3; ++b)
    for (int n = 0; n < 64; ++n) {
      const double before = std::hypot(at(batch, b, 0, n), at(batch, b, 1, n));
      const double after = std::hypot(at(out, b, 0, n), at(out, b, 1, n));
      CHECK(std::abs(before - after) < 1e-5);
      CHECK(at(out, b, 2, n) == at(batch, b, 2, n));
    }
}

TEST_CASE("jitter vanishes at the lowest point of each sample", "[augment]") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto batch = random_batch(2, 48, rng);
    // make the minimum unique per sample
    const int N = 48;
    for (int b = 0; b < 2; ++b)
      batch.data()[(static_cast<std::size_t>(b) * 3 + 2) * N + 7] = -2.f - b;
    tg::AugmentConfig cfg;
    cfg.sigma_j = 0.05f;
    cfg.rotate = false;
    cfg.delete_points = false;
    cfg.s_min = cfg.s_max = 1.f;
    cfg.seed = static_cast<std::uint64_t>(trial);
    auto out = tg::augment_batch(batch, cfg);
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 3; ++c) CHECK(at(out, b, c, 7) == at(batch, b, c, 7));
  }
}

TEST_CASE("scaling multiplies pairwise distances", "[augment]") {
  auto batch = tg::Tensor::from_data({1, 3, 3},
                                     {0.f, 1.f, 0.f,
                                      0.f, 0.f, 2.f,
                                      1.f, 1.f, 1.f});
  tg::AugmentConfig cfg;
  cfg.sigma_j = 0.f;
  cfg.rotate = false;
  cfg.delete_points = false;
  cfg.s_min = cfg.s_max = 1.7f;
  auto out = tg::augment_batch(batch, cfg);
  const auto dist = [&](const tg::Tensor& t, int i, int j) {
    double s = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = at(t, 0, c, i) - at(t, 0, c, j);
      s += d * d;
    }
    return std::sqrt(s);
  };
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      CHECK(dist(out, i, j) == Catch::Approx(1.7 * dist(batch, i, j)).margin(1e-5));
}

TEST_CASE("deletion keeps at least ceil(0.8 N) points across 1000 trials", "[augment]") {
  std::mt19937 rng(13);
  const int N = 64;
  const int min_keep = static_cast<int>(std::ceil(0.8 * N));
  auto batch = random_batch(2, N, rng);
  tg::AugmentConfig cfg;
  cfg.sigma_j = 0.f;
  cfg.rotate = false;
  cfg.delete_points = true;
  cfg.s_min = cfg.s_max = 1.f;
  int deletions_seen = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    cfg.seed = static_cast<std::uint64_t>(trial);
    auto out = tg::augment_batch(batch, cfg);
    REQUIRE(out.shape() == batch.shape());
    for (int b = 0; b < 2; ++b) {
      int kept = 0;
      bool any_zero = false;
      for (int n = 0; n < N; ++n) {
        const bool nonzero = at(out, b, 0, n) != 0.f || at(out, b, 1, n) != 0.f ||
                             at(out, b, 2, n) != 0.f;
        kept += nonzero ? 1 : 0;
        any_zero = any_zero || !nonzero;
      }
      CHECK(kept >= min_keep);
      if (any_zero && b == 0) ++deletions_seen;
    }
  }
  // the deletion gate is a fair coin; it must actually fire
  CHECK(deletions_seen > 300);
  CHECK(deletions_seen < 700);
}

TEST_CASE("augmentation is deterministic under a fixed seed", "[augment]") {
  std::mt19937 rng(17);
  auto batch = random_batch(2, 40, rng);
  tg::AugmentConfig cfg;
  cfg.seed = 987;
  auto a = tg::augment_batch(batch, cfg);
  auto b = tg::augment_batch(batch, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("augment config validation", "[augment]") {
  std::mt19937 rng(19);
  auto batch = random_batch(1, 16, rng);
  tg::AugmentConfig bad;
  bad.s_min = 1.5f;
  bad.s_max = 0.5f;
  CHECK_THROWS_AS(tg::augment_batch(batch, bad), tg::ConfigError);
  tg::AugmentConfig neg;
  neg.sigma_j = -0.1f;
  CHECK_THROWS_AS(tg::augment_batch(batch, neg), tg::ConfigError);
}
