#include "rfslam/datagen.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace rfslam::datagen {

std::vector<std::size_t> Dataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!is_test[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (is_test[i]) out.push_back(i);
  }
  return out;
}

std::vector<Point> sample_positions(
    const Scene& scene, int n, double margin, std::uint64_t seed,
    const std::optional<std::array<double, 2>>& height_range) {
  if (n < 1) throw ConfigError("sample_positions: n must be >= 1");
  if (margin < 0.0) throw ConfigError("sample_positions: margin must be >= 0");
  auto [lo, hi] = scene.bounds();
  const int h = scene.dim - 1;
  for (int i = 0; i < scene.dim; ++i) {
    lo[i] += margin;
    hi[i] -= margin;
  }
  if (height_range && scene.dim == 3) {
    lo[h] = std::max(lo[h], (*height_range)[0]);
    hi[h] = std::min(hi[h], (*height_range)[1]);
  }
  for (int i = 0; i < scene.dim; ++i) {
    if (!(lo[i] < hi[i])) throw ConfigError("sample_positions: empty sampling region");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> axes;
  for (int i = 0; i < scene.dim; ++i) axes.emplace_back(lo[i], hi[i]);

  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(n));
  std::size_t rejected = 0;
  while (out.size() < static_cast<std::size_t>(n)) {
    Point p = Point::zeros(scene.dim);
    for (int i = 0; i < scene.dim; ++i) p[i] = axes[static_cast<std::size_t>(i)](rng);
    if (scene.contains(p, margin)) {
      out.push_back(p);
    } else if (++rejected > 1'000'000 && out.empty()) {
      throw ConfigError("sample_positions: empty sampling region");
    }
  }
  return out;
}

std::vector<int> distinct_va_map(const Scene& scene, const TraceOptions& opts) {
  const auto images = geometry::image_sources(scene, opts.max_bounce);
  std::vector<Point> distinct;
  std::vector<int> map(images.size() + 1, -1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    int idx = -1;
    for (std::size_t d = 0; d < distinct.size(); ++d) {
      if (geometry::distance(distinct[d], images[i].position) <= 1e-9) {
        idx = static_cast<int>(d);
        break;
      }
    }
    if (idx < 0) {
      idx = static_cast<int>(distinct.size());
      distinct.push_back(images[i].position);
    }
    if (opts.max_virtual_anchors > 0 && idx >= opts.max_virtual_anchors) idx = -1;
    map[i + 1] = idx;
  }
  return map;
}

std::vector<Point> true_virtual_anchors(const Scene& scene,
                                        const TraceOptions& opts) {
  auto pts = geometry::distinct_positions(
      geometry::image_sources(scene, opts.max_bounce));
  if (opts.max_virtual_anchors > 0 &&
      pts.size() > static_cast<std::size_t>(opts.max_virtual_anchors)) {
    pts.resize(static_cast<std::size_t>(opts.max_virtual_anchors));
  }
  return pts;
}

Sample trace(const Scene& scene, const Point& user, const TraceOptions& opts) {
  if (!scene.contains(user)) {
    throw ConfigError("trace: user must lie strictly inside the scene");
  }
  Sample s;
  s.user = user;
  const auto amplitude = [&](double d, double refl) {
    return std::complex<double>(refl / std::max(d, opts.d_min), 0.0);
  };
  const double d0 = geometry::distance(user, scene.anchor);
  s.paths.push_back({d0 / kSpeedOfLight, amplitude(d0, 1.0), 0, 0});

  const auto images = geometry::image_sources(scene, opts.max_bounce);
  const auto map = distinct_va_map(scene, opts);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (map[i + 1] < 0) continue;
    const auto& im = images[i];
    if (!geometry::validate_path(scene, user, im.position, im.walls)) continue;
    double refl = 1.0;
    for (int w : im.walls) refl *= scene.walls[static_cast<std::size_t>(w)].gamma;
    const double d = geometry::distance(user, im.position);
    s.paths.push_back({d / kSpeedOfLight, amplitude(d, refl),
                       static_cast<int>(im.walls.size()),
                       static_cast<int>(i + 1)});
  }
  std::stable_sort(s.paths.begin(), s.paths.end(),
                   [](const PathRecord& a, const PathRecord& b) { return a.tof < b.tof; });
  return s;
}

std::vector<double> tofs(const Sample& sample) {
  std::vector<double> out;
  out.reserve(sample.paths.size());
  for (const auto& p : sample.paths) out.push_back(p.tof);
  return out;
}

std::vector<double> to_tdoa(const Sample& sample) {
  if (sample.paths.empty() || sample.paths.front().bounces != 0) {
    throw ConfigError("to_tdoa: sample must start with the LOS path");
  }
  std::vector<double> out;
  out.reserve(sample.paths.size());
  const double t0 = sample.paths.front().tof;
  for (const auto& p : sample.paths) out.push_back(p.tof - t0);
  return out;
}

Dataset generate_dataset(const Scene& scene, const DatasetConfig& config) {
  scene.validate();
  if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("generate_dataset: test_fraction must lie in [0, 1)");
  }
  Dataset ds;
  ds.scene = scene;
  ds.config = config;
  const auto users = sample_positions(scene, config.n_samples, config.margin,
                                      derive_seed(config.seed, 1),
                                      config.height_range);
  ds.samples.reserve(users.size());
  for (const Point& u : users) ds.samples.push_back(trace(scene, u, config.trace));

  // Shuffled order under the seed; the last fraction becomes the test split.
  std::vector<std::size_t> order(ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config.seed, 2));
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n = order.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * config.test_fraction));
  ds.is_test.assign(n, false);
  for (std::size_t r = n - n_test; r < n; ++r) ds.is_test[order[r]] = true;
  return ds;
}

}  // namespace rfslam::datagen
