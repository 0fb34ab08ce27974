#include "rfslam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfslam/matchloss.hpp"

namespace rfslam::eval {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile: q must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ErrorStats error_stats(std::vector<double> errors) {
  if (errors.empty()) throw ConfigError("error_stats: empty error set");
  ErrorStats s;
  s.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
  s.median = quantile(errors, 0.5);
  s.q90 = quantile(errors, 0.9);
  s.errors = std::move(errors);
  return s;
}

namespace {

using Mat = Eigen::MatrixXd;

Mat to_matrix(std::span<const Point> pts, int dim) {
  Mat m(dim, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (pts[k].dim() != dim) throw ConfigError("fit_isometry: mixed dimensions");
    for (int i = 0; i < dim; ++i) m(i, static_cast<Eigen::Index>(k)) = pts[k][i];
  }
  return m;
}

double rms(const Mat& r, const Eigen::VectorXd& t, const Mat& p, const Mat& q) {
  const Mat res = (r * p).colwise() + t - q;
  return std::sqrt(res.squaredNorm() / static_cast<double>(p.cols()));
}

}  // namespace

AlignmentFit fit_isometry(std::span<const Point> predicted, std::span<const Point> truth,
                          bool allow_reflection) {
  if (predicted.size() != truth.size()) throw ConfigError("fit_isometry: size mismatch");
  if (predicted.empty()) throw ConfigError("fit_isometry: no points");
  const int dim = predicted[0].dim();
  if (static_cast<int>(predicted.size()) < dim + 1) {
    throw ConfigError("fit_isometry: need at least D+1 points");
  }
  const Mat p = to_matrix(predicted, dim);
  const Mat q = to_matrix(truth, dim);
  const Eigen::VectorXd pc = p.rowwise().mean();
  const Eigen::VectorXd qc = q.rowwise().mean();
  const Mat p0 = p.colwise() - pc;
  const Mat q0 = q.colwise() - qc;

  const Eigen::JacobiSVD<Mat> spread(p0, Eigen::ComputeThinU);
  const auto sv = spread.singularValues();
  if (!(sv(dim - 1) > 1e-9 * std::max(sv(0), 1e-300))) {
    throw ConfigError("fit_isometry: degenerate (collinear/coplanar) configuration");
  }

  const Mat h = p0 * q0.transpose();
  const Eigen::JacobiSVD<Mat> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat u = svd.matrixU(), v = svd.matrixV();
  const double d = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  const auto candidate = [&](double sign) {
    Eigen::VectorXd diag = Eigen::VectorXd::Ones(dim);
    diag(dim - 1) = sign;
    const Mat r = v * diag.asDiagonal() * u.transpose();
    const Eigen::VectorXd t = qc - r * pc;
    return std::make_pair(r, t);
  };
  // Proper rotation: flip the weakest singular direction if needed.
  auto best = candidate(d);
  if (allow_reflection) {
    auto other = candidate(-d);
    if (rms(other.first, other.second, p, q) < rms(best.first, best.second, p, q)) best = other;
  }

  std::vector<double> rot(static_cast<std::size_t>(dim * dim));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) rot[static_cast<std::size_t>(i * dim + j)] = best.first(i, j);
  Point t = Point::zeros(dim);
  for (int i = 0; i < dim; ++i) t[i] = best.second(i);

  AlignmentFit fit;
  fit.isometry = Isometry(dim, rot, t);
  fit.rms_residual = rms(best.first, best.second, p, q);
  fit.used_reflection = best.first.determinant() < 0.0;
  return fit;
}

ErrorStats position_errors(std::span<const Point> predicted, std::span<const Point> truth,
                           const Isometry& alignment) {
  if (predicted.size() != truth.size()) throw ConfigError("position_errors: size mismatch");
  if (predicted.empty()) throw ConfigError("position_errors: empty test set");
  std::vector<double> e;
  e.reserve(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    e.push_back(geometry::distance(alignment.apply(predicted[i]), truth[i]));
  }
  return error_stats(std::move(e));
}

VaErrorReport va_errors(std::span<const Point> retained, std::span<const Point> true_vas,
                        const Isometry& alignment) {
  if (retained.empty()) throw ConfigError("va_errors: no retained virtual anchors");
  if (true_vas.empty()) throw ConfigError("va_errors: no true virtual anchors");
  std::vector<Point> aligned;
  for (const Point& p : retained) aligned.push_back(alignment.apply(p));
  // Rows are the smaller side.
  const bool rows_retained = aligned.size() <= true_vas.size();
  const int nr = static_cast<int>(rows_retained ? aligned.size() : true_vas.size());
  const int nc = static_cast<int>(rows_retained ? true_vas.size() : aligned.size());
  matchloss::CostMatrix c = matchloss::CostMatrix::zeros(nr, nc);
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < nc; ++j) {
      const Point& a = rows_retained ? aligned[static_cast<std::size_t>(i)] : aligned[static_cast<std::size_t>(j)];
      const Point& b = rows_retained ? true_vas[static_cast<std::size_t>(j)] : true_vas[static_cast<std::size_t>(i)];
      c(i, j) = geometry::distance(a, b);
    }
  }
  const auto assignment = matchloss::hungarian(c);
  VaErrorReport rep;
  std::vector<double> e;
  for (auto [i, j] : assignment.pairs) {
    const int ri = rows_retained ? i : j;
    const int ti = rows_retained ? j : i;
    rep.pairs.emplace_back(ri, ti);
    e.push_back(c(i, j));
  }
  std::sort(rep.pairs.begin(), rep.pairs.end());
  rep.unmatched_true = static_cast<int>(true_vas.size()) - static_cast<int>(rep.pairs.size());
  rep.stats = error_stats(std::move(e));
  return rep;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  f.precision(17);
  return f;
}

}  // namespace

void export_cdf(std::span<const double> errors, const std::filesystem::path& csv,
                const std::filesystem::path& svg) {
  if (errors.empty()) throw ConfigError("export_cdf: empty error set");
  std::vector<double> e(errors.begin(), errors.end());
  std::sort(e.begin(), e.end());
  const double n = static_cast<double>(e.size());
  {
    auto f = open_out(csv);
    f << "error_m,cdf\n";
    for (std::size_t i = 0; i < e.size(); ++i) f << e[i] << ',' << static_cast<double>(i + 1) / n << '\n';
  }
  if (svg.empty()) return;
  constexpr double w = 480, h = 320, m = 40;
  const double xmax = std::max(e.back(), 1e-12);
  auto f = open_out(svg);
  f.precision(6);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" font-size=\"12\">error (m), max " << xmax << "</text>\n"
    << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  double prev = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double x = m + (w - 2 * m) * e[i] / xmax;
    const double y0 = h - m - (h - 2 * m) * prev;
    const double y1 = h - m - (h - 2 * m) * static_cast<double>(i + 1) / n;
    f << x << ',' << y0 << ' ' << x << ',' << y1 << ' ';
    prev = static_cast<double>(i + 1) / n;
  }
  f << "\"/>\n</svg>\n";
}

void export_pointcloud(std::span<const CloudPoint> users, std::span<const Point> vas, int dim,
                       const std::filesystem::path& json_path, const std::filesystem::path& svg) {
  using nlohmann::json;
  json doc;
  doc["dim"] = dim;
  doc["points"] = json::array();
  const auto coords = [](const Point& p) { return std::vector<double>(p.coords().begin(), p.coords().end()); };
  for (const auto& u : users) {
    doc["points"].push_back({{"kind", "user"}, {"sample_id", u.sample_id}, {"position", coords(u.position)},
                             {"log_magnitude", u.log_magnitude}});
  }
  for (std::size_t i = 0; i < vas.size(); ++i) {
    doc["points"].push_back({{"kind", i == 0 ? "anchor" : "virtual_anchor"}, {"index", i}, {"position", coords(vas[i])}});
  }
  {
    auto f = open_out(json_path);
    f << doc.dump(1) << '\n';
  }
  if (svg.empty() || dim != 2) return;

  double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
  double mlo = 1e300, mhi = -1e300;
  const auto grow = [&](const Point& p) {
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  };
  for (const auto& u : users) {
    grow(u.position);
    mlo = std::min(mlo, u.log_magnitude);
    mhi = std::max(mhi, u.log_magnitude);
  }
  for (const auto& v : vas) grow(v);
  if (users.empty() && vas.empty()) lo[0] = lo[1] = 0, hi[0] = hi[1] = 1;
  constexpr double size = 480, m = 20;
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-9});
  const auto sx = [&](double x) { return m + (size - 2 * m) * (x - lo[0]) / span; };
  const auto sy = [&](double y) { return size - m - (size - 2 * m) * (y - lo[1]) / span; };
  auto f = open_out(svg);
  f.precision(6);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& u : users) {
    const double t = mhi > mlo ? (u.log_magnitude - mlo) / (mhi - mlo) : 0.5;
    const int r = static_cast<int>(255 * t), b = 255 - r;
    f << "<circle cx=\"" << sx(u.position[0]) << "\" cy=\"" << sy(u.position[1]) << "\" r=\"2\" fill=\"rgb(" << r
      << ",60," << b << ")\"/>\n";
  }
  for (std::size_t i = 0; i < vas.size(); ++i) {
    f << "<rect x=\"" << sx(vas[i][0]) - 4 << "\" y=\"" << sy(vas[i][1]) - 4 << "\" width=\"8\" height=\"8\" fill=\""
      << (i == 0 ? "black" : "orange") << "\"/>\n";
  }
  f << "</svg>\n";
}

}  // namespace rfslam::eval
