#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rfslam/eval.hpp"

using namespace rfslam;
using namespace rfslam::eval;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rfslam_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("quantiles interpolate between order statistics") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile({0, 10}, 0.9) == doctest::Approx(9.0));
  CHECK_THROWS_AS(quantile({}, 0.5), ConfigError);
  CHECK_THROWS_AS(quantile({1}, 1.5), ConfigError);
  const auto s = error_stats({1, 2, 3, 4});
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.median == doctest::Approx(2.5));
}

TEST_CASE("alignment recovers a rotation and translation") {
  const Isometry t = Isometry::rotation_2d(1.1, Point{3, -2});
  std::vector<Point> pred = {{0, 0}, {1, 0}, {0, 2}, {4, 1}}, truth;
  for (const auto& p : pred) truth.push_back(t.apply(p));
  const auto fit = fit_isometry(pred, truth, false);
  CHECK(fit.rms_residual < 1e-12);
  CHECK_FALSE(fit.used_reflection);
  CHECK(distance(fit.isometry.apply(Point{7, 7}), t.apply(Point{7, 7})) < 1e-10);
  const auto err = position_errors(pred, truth, fit.isometry);
  CHECK(err.median < 1e-12);
}

TEST_CASE("reflections are recovered only when allowed") {
  std::vector<Point> pred = {{0, 0}, {1, 0}, {0, 2}, {3, 1}}, truth;
  for (const auto& p : pred) truth.push_back(Point{p[0] + 1, -p[1]});
  const auto with = fit_isometry(pred, truth, true);
  CHECK(with.used_reflection);
  CHECK(with.rms_residual < 1e-12);
  const auto without = fit_isometry(pred, truth, false);
  CHECK_FALSE(without.used_reflection);
  CHECK(without.rms_residual > 0.1);
}

TEST_CASE("alignment rejects degenerate inputs") {
  std::vector<Point> line = {{0, 0}, {1, 1}, {2, 2}};
  CHECK_THROWS_AS(fit_isometry(line, line, true), ConfigError);
  std::vector<Point> two = {{0, 0}, {1, 0}};
  CHECK_THROWS_AS(fit_isometry(two, two, true), ConfigError);
}

TEST_CASE("VA errors match retained to true anchors") {
  const auto id = Isometry::identity(2);
  std::vector<Point> retained = {{9.8, 0.1}, {-0.1, 0.1}, {50, 50}};
  std::vector<Point> truth = {{-0.1, 0.1}, {9.9, 0.1}};
  const auto r = va_errors(retained, truth, id);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0] == std::pair<int, int>{0, 1});
  CHECK(r.pairs[1] == std::pair<int, int>{1, 0});
  CHECK(r.unmatched_true == 0);
  CHECK(r.stats.median == doctest::Approx(0.05));
  const auto fewer = va_errors(std::vector<Point>{{9.9, 0.1}}, truth, id);
  CHECK(fewer.unmatched_true == 1);
}

TEST_CASE("CDF export") {
  const auto dir = scratch("cdf");
  export_cdf(std::vector<double>{0.3, 0.1, 0.2, 0.4}, dir / "cdf.csv", dir / "cdf.svg");
  CHECK(slurp(dir / "cdf.csv") == "error_m,cdf\n0.10000000000000001,0.25\n0.20000000000000001,0.5\n"
                                  "0.29999999999999999,0.75\n0.40000000000000002,1\n");
  CHECK(slurp(dir / "cdf.svg").find("<polyline") != std::string::npos);
  CHECK_THROWS_AS(export_cdf({}, dir / "x.csv"), ConfigError);
}

TEST_CASE("point cloud export") {
  const auto dir = scratch("cloud");
  std::vector<CloudPoint> users = {{0, Point{1, 2}, -7.0}, {5, Point{2, 1}, -6.5}};
  std::vector<Point> vas = {{0, 0}, {-0.2, 0}};
  export_pointcloud(users, vas, 2, dir / "pc.json", dir / "pc.svg");
  const auto doc = nlohmann::json::parse(slurp(dir / "pc.json"));
  CHECK(doc["dim"] == 2);
  CHECK(doc["points"].size() == 4);
  CHECK(doc["points"][1]["sample_id"] == 5);
  CHECK(doc["points"][2]["kind"] == "anchor");
  CHECK(doc["points"][3]["kind"] == "virtual_anchor");
  CHECK(fs::exists(dir / "pc.svg"));
  export_pointcloud({}, {}, 2, dir / "empty.json");
  CHECK(nlohmann::json::parse(slurp(dir / "empty.json"))["points"].empty());
}
