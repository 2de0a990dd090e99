#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "oracles.hpp"
#include "treegraph/sampling.hpp"

namespace {

tg::PointMatrix collinear_x(const std::vector<float>& xs) {
  tg::PointMatrix m(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) m.at(i, 0) = xs[i];
  return m;
}

}  // namespace

TEST_CASE("pairwise 3-4-5 case and single point", "[sampling]") {
  tg::PointMatrix m(2);
  m.at(1, 0) = 3.f;
  m.at(1, 1) = 4.f;
  const auto d = tg::pairwise_neg_sq_dist<double>(m);
  CHECK(d[0] == 0.0);
  CHECK(d[3] == 0.0);
  CHECK(d[1] == -25.0);
  CHECK(d[2] == -25.0);

  tg::PointMatrix one(1);
  const auto ds = tg::pairwise_neg_sq_dist<double>(one);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0] == 0.0);
}

TEST_CASE("pairwise matches the double-loop oracle bit for bit in 64-bit", "[sampling]") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = oracle::random_cloud(32, rng);
    const auto fast = tg::pairwise_neg_sq_dist<double>(pts);
    const auto ref = oracle::pairwise_neg_sq(pts);
    REQUIRE(fast.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(fast[i] == ref[i]);
  }
}

TEST_CASE("pairwise in 32-bit stays within 1e-5 of the oracle", "[sampling]") {
  std::mt19937 rng(37);
  const auto pts = oracle::random_cloud(32, rng);
  const auto fast = tg::pairwise_neg_sq_dist<float>(pts);
  const auto ref = oracle::pairwise_neg_sq(pts);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(std::abs(static_cast<double>(fast[i]) - ref[i]) < 1e-5);
}

TEST_CASE("pairwise postconditions", "[sampling]") {
  std::mt19937 rng(41);
  const auto pts = oracle::random_cloud(20, rng);
  const auto d = tg::pairwise_neg_sq_dist<double>(pts);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(d[i * 20 + i] == 0.0);
    for (std::size_t j = 0; j < 20; ++j) {
      CHECK(d[i * 20 + j] <= 0.0);
      CHECK(d[i * 20 + j] == d[j * 20 + i]);
    }
  }
}

TEST_CASE("fps greedy hand trace on a line", "[sampling]") {
  const auto pts = collinear_x({0.f, 1.f, 2.f, 10.f});
  const auto picks = tg::farthest_point_sample(pts, 3);  // no seed -> start at 0
  REQUIRE(picks == std::vector<std::int32_t>{0, 3, 2});
}

TEST_CASE("fps with m=N is a permutation", "[sampling]") {
  std::mt19937 rng(43);
  const auto pts = oracle::random_cloud(17, rng);
  const auto picks = tg::farthest_point_sample(pts, 17, 5);
  std::set<std::int32_t> unique(picks.begin(), picks.end());
  CHECK(unique.size() == 17);
  CHECK(*unique.begin() == 0);
  CHECK(*unique.rbegin() == 16);
}

TEST_CASE("fps rejects m > N", "[sampling]") {
  const auto pts = collinear_x({0.f, 1.f});
  CHECK_THROWS_AS(tg::farthest_point_sample(pts, 3), tg::ContractError);
}

TEST_CASE("fps matches the quadratic greedy oracle", "[sampling]") {
  std::mt19937 rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 16 + static_cast<std::size_t>(trial) * 4;
    const auto pts = oracle::random_cloud(n, rng);
    const std::size_t m = n / 2;
    const std::uint64_t seed = static_cast<std::uint64_t>(trial) * 77 + 1;
    const auto got = tg::farthest_point_sample(pts, m, seed);
    const auto ref = oracle::fps_quadratic(pts, m, static_cast<std::size_t>(got[0]));
    CHECK(got == ref);
  }
}

TEST_CASE("fps prefix property", "[sampling]") {
  std::mt19937 rng(53);
  const auto pts = oracle::random_cloud(40, rng);
  const auto small = tg::farthest_point_sample(pts, 10, 9);
  const auto big = tg::farthest_point_sample(pts, 11, 9);
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(small[i] == big[i]);
}

TEST_CASE("voxel downsampling passes small clouds through", "[sampling]") {
  std::mt19937 rng(59);
  const auto pts = oracle::random_cloud(100, rng);
  tg::SamplingConfig cfg;
  cfg.voxel_target = 200;
  cfg.voxel_tolerance = 50;
  const auto out = tg::voxel_downsample_recursive(pts, cfg);
  CHECK(out.converged);
  REQUIRE(out.points.count() == 100);
  for (std::size_t i = 0; i < pts.data.size(); ++i) CHECK(out.points.data[i] == pts.data[i]);
}

TEST_CASE("voxel downsampling hits the target band on a dense grid", "[sampling]") {
  // uniform 50x50x50 grid = 125k points
  tg::PointMatrix grid(50 * 50 * 50);
  std::size_t t = 0;
  for (int x = 0; x < 50; ++x)
    for (int y = 0; y < 50; ++y)
      for (int z = 0; z < 50; ++z, ++t) {
        grid.at(t, 0) = static_cast<float>(x);
        grid.at(t, 1) = static_cast<float>(y);
        grid.at(t, 2) = static_cast<float>(z);
      }
  tg::SamplingConfig cfg;  // 30000 +- 500
  const auto out = tg::voxel_downsample_recursive(grid, cfg);
  CHECK(out.points.count() >= 29500);
  CHECK(out.points.count() <= 30500);
}

TEST_CASE("voxel search is scale equivariant", "[sampling]") {
  std::mt19937 rng(61);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  tg::PointMatrix pts(60000);
  for (auto& v : pts.data) v = u(rng);
  tg::SamplingConfig cfg;
  cfg.voxel_target = 9000;
  cfg.voxel_tolerance = 300;
  const auto a = tg::voxel_downsample_recursive(pts, cfg);

  tg::PointMatrix doubled = pts;
  for (auto& v : doubled.data) v *= 2.f;
  const auto b = tg::voxel_downsample_recursive(doubled, cfg);
  CHECK(a.points.count() == b.points.count());
}

TEST_CASE("voxel centroids stay inside their cell's bounding box", "[sampling]") {
  std::mt19937 rng(67);
  std::uniform_real_distribution<float> u(-5.f, 5.f);
  tg::PointMatrix pts(40000);
  for (auto& v : pts.data) v = u(rng);
  tg::SamplingConfig cfg;
  cfg.voxel_target = 5000;
  cfg.voxel_tolerance = 250;
  const auto out = tg::voxel_downsample_recursive(pts, cfg);
  // centroids of the input distribution must stay inside the global hull
  for (std::size_t i = 0; i < out.points.count(); ++i)
    for (int c = 0; c < 3; ++c) {
      CHECK(out.points.at(i, c) >= -5.f);
      CHECK(out.points.at(i, c) <= 5.f);
    }
}

TEST_CASE("preprocess pipeline is deterministic under a fixed seed", "[sampling]") {
  std::mt19937 rng(71);
  tg::PointCloudSample s;
  s.points = oracle::random_cloud(3000, rng, 8.0);
  tg::SamplingConfig cfg;
  cfg.target_points = 256;
  cfg.seed = 12345;
  const auto a = tg::preprocess_cloud(s, cfg);
  const auto b = tg::preprocess_cloud(s, cfg);
  REQUIRE(a.points.data.size() == b.points.data.size());
  for (std::size_t i = 0; i < a.points.data.size(); ++i)
    CHECK(a.points.data[i] == b.points.data[i]);
}
