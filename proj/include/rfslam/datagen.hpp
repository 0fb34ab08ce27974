#pragma once
// Ground-truth datasets: uniformly sampled users traced through the
// image-source model of a scene.

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "rfslam/geometry.hpp"

namespace rfslam::datagen {

using geometry::Point;
using geometry::Scene;

struct PathRecord {
  double tof = 0.0;                // seconds
  std::complex<double> gain{0.0};  // unitless amplitude
  int bounces = 0;
  int va_index = 0;  // 0 = physical anchor, i > 0 = image_sources()[i - 1]
};

struct Sample {
  Point user;
  std::vector<PathRecord> paths;  // ascending tof, paths[0] is LOS
};

struct TraceOptions {
  int max_bounce = 1;
  double d_min = 0.1;  // near-field guard for the 1/d amplitude
  // Keep only the first N distinct image positions (0 = all).
  int max_virtual_anchors = 0;
};

struct DatasetConfig {
  int n_samples = 4000;
  double margin = 0.25;
  std::uint64_t seed = 1;
  double test_fraction = 0.1;
  TraceOptions trace;
  // Optional restriction of the last coordinate (height) for 3D scenes.
  std::optional<std::array<double, 2>> height_range;
};

struct Dataset {
  Scene scene;
  DatasetConfig config;
  std::vector<Sample> samples;
  std::vector<bool> is_test;  // same length as samples

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
};

std::vector<Point> sample_positions(
    const Scene& scene, int n, double margin, std::uint64_t seed,
    const std::optional<std::array<double, 2>>& height_range = std::nullopt);

Sample trace(const Scene& scene, const Point& user, const TraceOptions& opts);
inline Sample trace(const Scene& scene, const Point& user, int max_bounce) {
  TraceOptions o;
  o.max_bounce = max_bounce;
  return trace(scene, user, o);
}

// Delays relative to the LOS path; first element is 0.
std::vector<double> to_tdoa(const Sample& sample);
std::vector<double> tofs(const Sample& sample);

Dataset generate_dataset(const Scene& scene, const DatasetConfig& config);

// Distinct true virtual-anchor positions of the scene under `opts`
// (excluding the physical anchor), in image_sources order.
std::vector<Point> true_virtual_anchors(const Scene& scene,
                                        const TraceOptions& opts);

// Maps va_index (1-based image index) to a distinct-VA index (0-based),
// -1 for images excluded by max_virtual_anchors.
std::vector<int> distinct_va_map(const Scene& scene, const TraceOptions& opts);

}  // namespace rfslam::datagen
