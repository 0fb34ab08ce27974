#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "rfslam/superres.hpp"

using namespace rfslam;
using namespace rfslam::superres;

namespace {

HermitianMatrix random_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  auto a = HermitianMatrix::zeros(n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = g(rng);
    for (int j = i + 1; j < n; ++j) {
      a(i, j) = {g(rng), g(rng)};
      a(j, i) = std::conj(a(i, j));
    }
  }
  return a;
}

channel::CsiSample paths_csi(const std::vector<datagen::PathRecord>& p, const channel::OfdmConfig& cfg) {
  return channel::synthesize(p, cfg, 1);
}

// Wax-Kailath MDL evaluated directly; argmin over k.
int mdl_reference(const std::vector<double>& ev, long long n) {
  const int l = static_cast<int>(ev.size());
  int best = 0;
  double best_v = INFINITY;
  for (int k = 0; k < l; ++k) {
    double logsum = 0, sum = 0;
    for (int i = k; i < l; ++i) {
      logsum += std::log(ev[static_cast<std::size_t>(i)]);
      sum += ev[static_cast<std::size_t>(i)];
    }
    const int m = l - k;
    const double v = -static_cast<double>(n) * m * (logsum / m - std::log(sum / m)) +
                     0.5 * k * (2 * l - k) * std::log(static_cast<double>(n));
    if (v < best_v) {
      best_v = v;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("eig_hermitian trivial cases") {
  auto id = HermitianMatrix::zeros(4);
  for (int i = 0; i < 4; ++i) id(i, i) = 1.0;
  for (double v : eig_hermitian(id).values) CHECK(v == doctest::Approx(1.0));

  auto d = HermitianMatrix::zeros(2);
  d(0, 0) = 1.0;
  d(1, 1) = 3.0;
  const auto e = eig_hermitian(d);
  CHECK(e.values[0] == doctest::Approx(3.0));
  CHECK(e.values[1] == doctest::Approx(1.0));
  CHECK(std::abs(e.vector(0)[1]) == doctest::Approx(1.0));
  CHECK(std::abs(e.vector(0)[0]) < 1e-12);

  auto bad = HermitianMatrix::zeros(2);
  bad(0, 1) = 1.0;
  CHECK_THROWS_AS(eig_hermitian(bad), ConfigError);
}

TEST_CASE("eig_hermitian residual and agreement with Eigen") {
  std::mt19937_64 rng(17);
  for (int n : {3, 8, 20, 64}) {
    CAPTURE(n);
    const auto a = random_hermitian(n, rng);
    const auto e = eig_hermitian(a);
    double resid = 0;
    for (int k = 0; k < n; ++k) {
      const auto v = e.vector(k);
      for (int i = 0; i < n; ++i) {
        cdouble av = 0;
        for (int j = 0; j < n; ++j) av += a(i, j) * v[static_cast<std::size_t>(j)];
        resid += std::norm(av - e.values[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(i)]);
      }
      // Orthonormal columns.
      for (int m = 0; m < n; ++m) {
        cdouble ip = 0;
        const auto w = e.vector(m);
        for (int i = 0; i < n; ++i) ip += std::conj(w[static_cast<std::size_t>(i)]) * v[static_cast<std::size_t>(i)];
        CHECK(std::abs(ip - (m == k ? 1.0 : 0.0)) < 1e-9);
      }
    }
    CHECK(std::sqrt(resid) <= 1e-9 * a.frobenius());

    Eigen::MatrixXcd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = a(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
    for (int k = 0; k < n; ++k) {
      CHECK(e.values[static_cast<std::size_t>(k)] ==
            doctest::Approx(solver.eigenvalues()[n - 1 - k]).epsilon(1e-9).scale(a.frobenius()));
    }
  }
}

TEST_CASE("single-path covariance is rank one with the closed-form top eigenvalue") {
  channel::OfdmConfig cfg;
  const auto csi = paths_csi({{17e-9, 1.0, 0, 0}}, cfg);
  const auto r = smoothed_covariance(csi, 4, false);
  // Each window is a unit-modulus steering vector: R = a a^H with |a|^2 = 4.
  const auto e = eig_hermitian(r);
  CHECK(e.values[0] == doctest::Approx(4.0).epsilon(1e-12));
  for (int k = 1; k < 4; ++k) CHECK(std::abs(e.values[static_cast<std::size_t>(k)]) < 1e-10);
  CHECK(r.hermitian_defect() < 1e-12);
  CHECK_THROWS_AS(smoothed_covariance(csi, 1, false), ConfigError);
  CHECK_THROWS_AS(smoothed_covariance(csi, 129, false), ConfigError);
}

TEST_CASE("forward-backward smoothing gives a persymmetric covariance") {
  channel::OfdmConfig cfg;
  const auto csi = paths_csi({{12e-9, 1.0, 0, 0}, {19e-9, 0.6, 1, 1}, {31e-9, 0.3, 1, 2}}, cfg);
  const auto r = smoothed_covariance(csi, 16, true);
  const int n = r.n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(std::abs(r(i, j) - std::conj(r(n - 1 - i, n - 1 - j))) < 1e-12);
}

TEST_CASE("three separated paths give numerical rank three") {
  channel::OfdmConfig cfg;
  const auto csi = paths_csi({{10e-9, 1.0, 0, 0}, {25e-9, 0.7, 1, 1}, {40e-9, 0.5, 1, 2}}, cfg);
  const auto e = eig_hermitian(smoothed_covariance(csi, 64, true));
  CHECK(e.values[2] > 1e-6 * e.values[0]);
  for (std::size_t k = 3; k < e.values.size(); ++k) CHECK(e.values[k] < 1e-9 * e.values[0]);
}

TEST_CASE("mdl order agrees with direct evaluation") {
  std::vector<double> ev = {50, 20, 8};
  for (int i = 0; i < 13; ++i) ev.push_back(1e-3 * (1.0 + 0.01 * i));
  std::sort(ev.rbegin(), ev.rend());
  CHECK(mdl_order(ev, 1040) == 3);
  CHECK(mdl_order(ev, 1040) == mdl_reference(ev, 1040));
  std::vector<double> flat(10, 2.0);
  CHECK(mdl_order(flat, 500) == 0);
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> ex;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(12);
    for (auto& x : v) x = ex(rng) + 1e-6;
    std::sort(v.rbegin(), v.rend());
    CHECK(mdl_order(v, 100) == mdl_reference(v, 100));
  }
  CHECK_THROWS_AS(mdl_order(std::vector<double>{1.0}, 10), ConfigError);
}

TEST_CASE("music spectrum peaks at an on-grid single path") {
  channel::OfdmConfig cfg;
  DelayGrid grid{0.0, 60e-9, 1.0 / (8.0 * cfg.bandwidth_hz)};
  const double tau = grid.at(77);
  const auto csi = paths_csi({{tau, 1.0, 0, 0}}, cfg);
  const auto e = eig_hermitian(smoothed_covariance(csi, 64, true));
  const std::span<const cdouble> noise(e.vectors.data() + 64, 63 * 64);
  const auto p = music_spectrum(noise, 64, grid, cfg.subcarrier_spacing());
  const auto mx = std::max_element(p.begin(), p.end()) - p.begin();
  CHECK(mx == 77);
  CHECK(p[77] > 1e6);
  CHECK_THROWS_AS(music_spectrum({}, 64, grid, cfg.subcarrier_spacing()), NumericalError);
}

TEST_CASE("noiseless single path extraction within half a grid step") {
  channel::OfdmConfig cfg;
  SuperresConfig sc;
  sc.grid = default_grid(std::sqrt(50.0), 1, cfg.bandwidth_hz);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(2e-9, 40e-9);
  for (int t = 0; t < 20; ++t) {
    const double tau = u(rng);
    const auto f = extract_features(paths_csi({{tau, 1.0, 0, 0}}, cfg), cfg, sc, Modality::kToF);
    REQUIRE(f.size() == 1);
    CHECK(std::abs(f.values[0] - tau) <= sc.grid.step / 2);
  }
}

TEST_CASE("two paths 5 ns apart resolve as two peaks") {
  channel::OfdmConfig cfg;
  SuperresConfig sc;
  sc.grid = default_grid(std::sqrt(50.0), 1, cfg.bandwidth_hz);
  const auto f = extract_features(paths_csi({{14e-9, 1.0, 0, 0}, {19e-9, 0.8, 1, 1}}, cfg), cfg, sc, Modality::kToF);
  REQUIRE(f.size() == 2);
  CHECK(std::abs(f.values[0] - 14e-9) < sc.grid.step);
  CHECK(std::abs(f.values[1] - 19e-9) < sc.grid.step);
  const auto td = extract_features(paths_csi({{14e-9, 1.0, 0, 0}, {19e-9, 0.8, 1, 1}}, cfg), cfg, sc, Modality::kTDoA);
  CHECK(td.values[0] == 0.0);
  CHECK(td.values[1] == doctest::Approx(f.values[1] - f.values[0]));
}

TEST_CASE("seven resolvable paths in a box give MDL order seven") {
  // Interior anchor: with the preset ceiling-corner anchor two images sit
  // 0.2 m from the anchor and merge with the LOS at any bandwidth here.
  const auto scene = geometry::Scene::box(geometry::Point{-10.1, -5, 0.1}, geometry::Point{-0.1, 5, 4.1},
                                          geometry::Point{-6.3, 1.1, 2.6});
  channel::OfdmConfig cfg;
  cfg.carrier_hz = 3.5e9;
  cfg.bandwidth_hz = 400e6;
  cfg.snr_db = 60.0;
  SuperresConfig sc;
  sc.max_order = 30;
  sc.grid = default_grid(scene.diagonal(), 1, cfg.bandwidth_hz);
  int sevens = 0;
  const auto users = datagen::sample_positions(scene, 50, 0.25, 5);
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto s = datagen::trace(scene, users[i], 1);
    sevens += extract(channel::synthesize(s.paths, cfg, i), cfg, sc, Modality::kToF).mdl_order == 7;
  }
  CHECK(sevens >= 45);
}

TEST_CASE("narrower bandwidth resolves fewer paths") {
  const auto scene = geometry::Scene::rectangle(geometry::Point{0, 0}, geometry::Point{5, 5}, geometry::Point{0.1, 0.1});
  int wide = 0, narrow = 0;
  for (double bw : {400e6, 100e6}) {
    channel::OfdmConfig cfg;
    cfg.bandwidth_hz = bw;
    SuperresConfig sc;
    sc.grid = default_grid(scene.diagonal(), 1, bw);
    for (const auto& u : datagen::sample_positions(scene, 40, 0.25, 8)) {
      const auto s = datagen::trace(scene, u, 1);
      (bw > 2e8 ? wide : narrow) += static_cast<int>(extract_features(channel::synthesize(s.paths, cfg, 1), cfg, sc, Modality::kToF).size());
    }
  }
  CHECK(narrow < wide);
}

TEST_CASE("grid and peak picking") {
  const auto g = default_grid(10.0, 1, 100e6);
  CHECK(g.t_max == doctest::Approx(1.5 * 20.0 / kSpeedOfLight));
  CHECK(g.step == doctest::Approx(1.25e-9));
  DelayGrid bad{0.0, 1e-9, 1e-9};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  DelayGrid grid{0.0, 20.0, 1.0};
  std::vector<double> spec(21, 1.0);
  spec[5] = 10.0;
  spec[12] = 10.0;
  spec[16] = 2.0;
  const auto peaks = find_peaks(spec, grid, 1.0);
  REQUIRE(peaks.size() == 3);
  CHECK(peaks[0].index == 5);  // equal prominence: lower delay first
  CHECK(peaks[1].index == 12);
  CHECK(peaks[2].index == 16);
}
