#pragma once
// Post-training evaluation: isometry alignment from a few labeled samples,
// position and map error statistics, CDF and point-cloud exports.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rfslam/geometry.hpp"

namespace rfslam::eval {

using geometry::Isometry;
using geometry::Point;

// Linear interpolation between order statistics: position q * (n - 1).
double quantile(std::vector<double> values, double q);

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double q90 = 0.0;
  std::vector<double> errors;
};

ErrorStats error_stats(std::vector<double> errors);

struct AlignmentFit {
  Isometry isometry;
  double rms_residual = 0.0;
  bool used_reflection = false;
};

// Least-squares T minimizing sum ||T(predicted_k) - truth_k||^2.
AlignmentFit fit_isometry(std::span<const Point> predicted, std::span<const Point> truth,
                          bool allow_reflection);

ErrorStats position_errors(std::span<const Point> predicted, std::span<const Point> truth,
                           const Isometry& alignment);

struct VaErrorReport {
  ErrorStats stats;
  // (retained index, true index) pairs of the Euclidean Hungarian match.
  std::vector<std::pair<int, int>> pairs;
  int unmatched_true = 0;
};

VaErrorReport va_errors(std::span<const Point> retained, std::span<const Point> true_vas,
                        const Isometry& alignment);

// CSV with header "error_m,cdf" (sorted errors and i/n); optional SVG plot.
void export_cdf(std::span<const double> errors, const std::filesystem::path& csv,
                const std::filesystem::path& svg = {});

struct CloudPoint {
  int sample_id = 0;
  Point position;
  double log_magnitude = 0.0;
};

// pointcloud.json with user points and VA points tagged by "kind"; a 2D
// cloud also gets an SVG scatter when `svg` is non-empty.
void export_pointcloud(std::span<const CloudPoint> users, std::span<const Point> vas, int dim,
                       const std::filesystem::path& json_path, const std::filesystem::path& svg = {});

}  // namespace rfslam::eval
