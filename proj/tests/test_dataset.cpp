#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "treegraph/dataset.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "treegraph_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p);
  os << content;
}

}  // namespace

TEST_CASE("xyz ascii loads points in file order", "[dataset]") {
  auto p = temp_file("basic.xyz");
  write_file(p, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n");
  auto s = tg::load_cloud(p, tg::CloudFormat::xyz_ascii);
  REQUIRE(s.points.count() == 4);
  CHECK(s.points.at(1, 0) == 1.f);
  CHECK(s.points.at(3, 2) == 1.f);
}

TEST_CASE("xyz ascii parse errors cite the line", "[dataset]") {
  auto p = temp_file("badline.xyz");
  write_file(p, "0 0 0\n1 1 1\n1 2\n3 3 3\n");
  CHECK_THROWS_WITH(tg::load_cloud(p, tg::CloudFormat::xyz_ascii),
                    Catch::Matchers::ContainsSubstring(":3"));

  auto q = temp_file("toomany.xyz");
  write_file(q, "0 0 0 0\n");
  CHECK_THROWS_AS(tg::load_cloud(q, tg::CloudFormat::xyz_ascii), tg::ParseError);
}

TEST_CASE("xyz ascii skips comments and blank lines", "[dataset]") {
  auto p = temp_file("comments.xyz");
  write_file(p, "# header\n0 0 0\n\n1 0 0 # trailing note\n0 1 0\n0 0 1\n");
  auto s = tg::load_cloud(p, tg::CloudFormat::xyz_ascii);
  CHECK(s.points.count() == 4);
}

TEST_CASE("clouds with fewer than 4 points are rejected", "[dataset]") {
  auto p = temp_file("tiny.xyz");
  write_file(p, "0 0 0\n1 1 1\n2 2 2\n");
  CHECK_THROWS_AS(tg::load_cloud(p, tg::CloudFormat::xyz_ascii), tg::DegenerateCloudError);
}

TEST_CASE("xyz -> packed -> xyz round trip is bit exact", "[dataset]") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<float> u(-100.f, 100.f);
  tg::PointCloudSample s;
  s.label = 3;
  s.points = tg::PointMatrix(64);
  for (auto& v : s.points.data) v = u(rng);

  auto ascii1 = temp_file("rt1.xyz");
  tg::save_xyz_ascii(s.points, ascii1);
  auto loaded = tg::load_cloud(ascii1, tg::CloudFormat::xyz_ascii);
  loaded.label = s.label;

  auto packed = temp_file("rt.tgpc");
  tg::tgpc::save({loaded}, packed);
  auto back = tg::load_cloud(packed, tg::CloudFormat::packed_binary);

  REQUIRE(back.points.count() == s.points.count());
  for (std::size_t i = 0; i < s.points.data.size(); ++i)
    CHECK(back.points.data[i] == s.points.data[i]);
  CHECK(back.label == 3);
}

TEST_CASE("tgpc rejects foreign files", "[dataset]") {
  auto p = temp_file("junk.tgpc");
  write_file(p, "definitely not packed");
  CHECK_THROWS_AS(tg::tgpc::load(p), tg::ParseError);
}

TEST_CASE("normalize_unit_sphere symmetric pair", "[dataset]") {
  tg::PointCloudSample s;
  s.points = tg::PointMatrix(2);
  s.points.at(0, 0) = 1.f;
  s.points.at(1, 0) = 3.f;
  auto out = tg::normalize_unit_sphere(s);
  CHECK(out.points.at(0, 0) == Catch::Approx(-1.0));
  CHECK(out.points.at(1, 0) == Catch::Approx(1.0));
}

TEST_CASE("normalize_unit_sphere hand-computed case", "[dataset]") {
  tg::PointCloudSample s;
  s.points = tg::PointMatrix(3);
  s.points.at(1, 2) = 2.f;  // (0,0,2)
  s.points.at(2, 1) = 2.f;  // (0,2,0)
  auto out = tg::normalize_unit_sphere(s);
  // centroid (0, 2/3, 2/3); scale sqrt(20)/3; the two far points land on the sphere
  const double scale = std::sqrt(20.0) / 3.0;
  CHECK(scale == Catch::Approx(1.4907).margin(1e-4));
  const auto norm = [&](std::size_t i) {
    return std::sqrt(tg::sq_dist(out.points.row(i), std::array<float, 3>{0, 0, 0}.data()));
  };
  CHECK(norm(1) == Catch::Approx(1.0).margin(1e-6));
  CHECK(norm(2) == Catch::Approx(1.0).margin(1e-6));
  CHECK(out.points.at(0, 1) == Catch::Approx(-(2.0 / 3.0) / scale).margin(1e-6));
}

TEST_CASE("normalize_unit_sphere centroid/extent postconditions and idempotence", "[dataset]") {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 20; ++trial) {
    tg::PointCloudSample s;
    s.points = oracle::random_cloud(50, rng, 10.0);
    auto once = tg::normalize_unit_sphere(s);
    double cx = 0, cy = 0, cz = 0, max_n = 0;
    for (std::size_t i = 0; i < once.points.count(); ++i) {
      cx += once.points.at(i, 0);
      cy += once.points.at(i, 1);
      cz += once.points.at(i, 2);
    }
    const auto n = static_cast<double>(once.points.count());
    CHECK(std::abs(cx / n) < 1e-6);
    CHECK(std::abs(cy / n) < 1e-6);
    CHECK(std::abs(cz / n) < 1e-6);
    for (std::size_t i = 0; i < once.points.count(); ++i)
      max_n = std::max(max_n, std::sqrt(tg::sq_dist(once.points.row(i),
                                                    std::array<float, 3>{0, 0, 0}.data())));
    CHECK(max_n == Catch::Approx(1.0).margin(1e-6));

    auto twice = tg::normalize_unit_sphere(once);
    for (std::size_t i = 0; i < once.points.data.size(); ++i)
      CHECK(std::abs(twice.points.data[i] - once.points.data[i]) < 1e-6);
  }
}

TEST_CASE("normalize rejects coincident clouds", "[dataset]") {
  tg::PointCloudSample s;
  s.points = tg::PointMatrix(5);
  for (std::size_t i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c) s.points.at(i, c) = 2.5f;
  CHECK_THROWS_AS(tg::normalize_unit_sphere(s), tg::DegenerateCloudError);
}

TEST_CASE("class weights on the seven-species train counts", "[dataset]") {
  const auto cw = tg::compute_class_weights({146, 131, 126, 80, 31, 20, 18});
  const std::vector<double> expected{1.0, 1.1145, 1.1587, 1.8250, 1.8514, 1.8514, 1.8514};
  REQUIRE(cw.weights.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(cw.weights[i] == Catch::Approx(expected[i]).margin(1e-3));
}

TEST_CASE("class weights edge cases", "[dataset]") {
  const auto uniform = tg::compute_class_weights({10, 10, 10});
  for (double w : uniform.weights) CHECK(w == Catch::Approx(1.0));

  const auto skew = tg::compute_class_weights({100, 1});
  CHECK(skew.weights[0] == Catch::Approx(1.0));
  CHECK(skew.weights[1] == Catch::Approx(100.0 / 50.5).margin(1e-9));

  CHECK_THROWS_AS(tg::compute_class_weights({}), tg::ContractError);
  CHECK_THROWS_AS(tg::compute_class_weights({5, 0}), tg::ContractError);
}

TEST_CASE("class weights are scale invariant", "[dataset]") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::int64_t> c(1, 500);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> counts(5);
    for (auto& v : counts) v = c(rng);
    const auto base = tg::compute_class_weights(counts);
    for (std::int64_t k : {2, 3, 17}) {
      auto scaled = counts;
      for (auto& v : scaled) v *= k;
      const auto got = tg::compute_class_weights(scaled);
      for (std::size_t i = 0; i < counts.size(); ++i)
        CHECK(got.weights[i] == Catch::Approx(base.weights[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("manifest round trip and label indexing", "[dataset]") {
  auto p = temp_file("manifest.csv");
  write_file(p, "path,class,split\na.xyz,oak,train\nb.xyz,ash,train\nc.xyz,oak,test\n");
  auto m = tg::load_manifest(p);
  REQUIRE(m.entries.size() == 3);
  CHECK(m.class_names == std::vector<std::string>{"ash", "oak"});  // sorted
  CHECK(m.label_of("oak") == 1);
  CHECK(m.label_of("ash") == 0);
  CHECK_THROWS_AS(m.label_of("pine"), tg::ContractError);

  auto q = temp_file("manifest2.csv");
  tg::save_manifest(m, q);
  auto m2 = tg::load_manifest(q);
  CHECK(m2.entries.size() == 3);
  CHECK(m2.class_names == m.class_names);
}

TEST_CASE("manifest parse failures", "[dataset]") {
  auto p = temp_file("badhdr.csv");
  write_file(p, "file,label\na.xyz,oak\n");
  CHECK_THROWS_AS(tg::load_manifest(p), tg::ParseError);

  auto q = temp_file("badsplit.csv");
  write_file(q, "path,class,split\na.xyz,oak,validation\n");
  CHECK_THROWS_WITH(tg::load_manifest(q), Catch::Matchers::ContainsSubstring(":2"));
}

TEST_CASE("split manifest uses floor semantics per class", "[dataset]") {
  std::vector<std::pair<std::string, std::string>> files;
  for (int i = 0; i < 10; ++i) files.push_back({"oak" + std::to_string(i), "oak"});
  for (int i = 0; i < 7; ++i) files.push_back({"ash" + std::to_string(i), "ash"});
  auto m = tg::make_split_manifest(files, 0.8, 1);
  int oak_train = 0, ash_train = 0;
  for (const auto& e : m.entries) {
    if (e.split != tg::Split::train) continue;
    (e.class_name == "oak" ? oak_train : ash_train)++;
  }
  CHECK(oak_train == 8);  // floor(0.8*10)
  CHECK(ash_train == 5);  // floor(0.8*7)

  // a single-sample class still lands in train
  auto m2 = tg::make_split_manifest({{"only", "solo"}}, 0.5, 1);
  CHECK(m2.entries[0].split == tg::Split::train);
}
