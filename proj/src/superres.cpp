#include "rfslam/superres.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rfslam/kernels.hpp"

namespace rfslam::superres {

HermitianMatrix HermitianMatrix::zeros(int n) {
  HermitianMatrix m;
  m.n = n;
  m.a.assign(static_cast<std::size_t>(n * n), cdouble(0.0));
  return m;
}

double HermitianMatrix::frobenius() const {
  double acc = 0.0;
  for (const cdouble& v : a) acc += std::norm(v);
  return std::sqrt(acc);
}

double HermitianMatrix::hermitian_defect() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      worst = std::max(worst, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    }
  }
  return worst;
}

int DelayGrid::size() const {
  return static_cast<int>(std::floor((t_max - t_min) / step + 1e-9)) + 1;
}

void DelayGrid::validate() const {
  if (!(t_min >= 0.0) || !(step > 0.0)) {
    throw ConfigError("delay grid: need t_min >= 0 and step > 0");
  }
  if (!((t_max - t_min) / step >= 16.0)) {
    throw ConfigError("delay grid: fewer than 16 steps");
  }
}

DelayGrid default_grid(double room_diagonal, int max_bounce, double bandwidth_hz) {
  DelayGrid g;
  g.t_min = 0.0;
  g.t_max = 1.5 * room_diagonal * (max_bounce + 1) / kSpeedOfLight;
  g.step = 1.0 / (8.0 * bandwidth_hz);
  return g;
}

HermitianMatrix smoothed_covariance(const channel::CsiSample& csi,
                                    int subarray_len, bool forward_backward) {
  const int nsc = csi.n_subcarriers;
  const int len = subarray_len;
  if (len < 2 || len > nsc) {
    throw ConfigError("smoothed_covariance: subarray length out of range");
  }
  const auto& k = kernels::active();
  HermitianMatrix r = HermitianMatrix::zeros(len);
  const int windows = nsc - len + 1;
  for (int s = 0; s < csi.snapshots; ++s) {
    const auto snap = csi.snapshot(s);
    for (int w = 0; w < windows; ++w) {
      const cdouble* x = snap.data() + w;
      // Upper triangle: R[i][j] += x_i conj(x_j), j >= i.
      for (int i = 0; i < len; ++i) {
        k.caxpy_conj(x[i], x + i, &r.a[static_cast<std::size_t>(i * len + i)],
                     static_cast<std::size_t>(len - i));
      }
    }
  }
  const double scale = 1.0 / (static_cast<double>(windows) * csi.snapshots);
  for (int i = 0; i < len; ++i) {
    for (int j = i; j < len; ++j) {
      r(i, j) *= scale;
      if (j > i) r(j, i) = std::conj(r(i, j));
    }
    r(i, i) = cdouble(r(i, i).real(), 0.0);
  }
  if (forward_backward) {
    HermitianMatrix fb = HermitianMatrix::zeros(len);
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < len; ++j) {
        fb(i, j) = 0.5 * (r(i, j) + std::conj(r(len - 1 - i, len - 1 - j)));
      }
    }
    return fb;
  }
  return r;
}

EigenDecomposition eig_hermitian(const HermitianMatrix& input) {
  const int n = input.n;
  if (n < 1) throw ConfigError("eig_hermitian: empty matrix");
  const double fro = input.frobenius();
  if (input.hermitian_defect() > 1e-10 * std::max(fro, 1e-300)) {
    throw ConfigError("eig_hermitian: matrix is not Hermitian");
  }
  const auto& k = kernels::active();
  HermitianMatrix a = input;
  for (int i = 0; i < n; ++i) a(i, i) = cdouble(a(i, i).real(), 0.0);
  // Row i of w is eigenvector i.
  std::vector<cdouble> w(static_cast<std::size_t>(n * n), cdouble(0.0));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i * n + i)] = 1.0;

  const auto off_norm2 = [&] {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) acc += std::norm(a(i, j));
    }
    return acc;
  };
  const double target = std::pow(1e-15 * std::max(fro, 1e-300), 2);
  for (int sweep = 0; sweep < 80 && off_norm2() > target; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const cdouble apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag < 1e-300) continue;
        const double alpha = a(p, p).real();
        const double gamma = a(q, q).real();
        if (mag < 1e-18 * (std::abs(alpha) + std::abs(gamma))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const cdouble e = apq / mag;  // e^{i phi}
        const double theta = (gamma - alpha) / (2.0 * mag);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        k.crot(&a.a[static_cast<std::size_t>(p * n)], &a.a[static_cast<std::size_t>(q * n)],
               static_cast<std::size_t>(n), c, s, e);
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          a(r, p) = std::conj(a(p, r));
          a(r, q) = std::conj(a(q, r));
        }
        a(p, p) = alpha - t * mag;
        a(q, q) = gamma + t * mag;
        a(p, q) = a(q, p) = 0.0;
        k.crot(&w[static_cast<std::size_t>(p * n)], &w[static_cast<std::size_t>(q * n)],
               static_cast<std::size_t>(n), c, s, std::conj(e));
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return a(x, x).real() > a(y, y).real(); });
  EigenDecomposition out;
  out.n = n;
  out.values.reserve(static_cast<std::size_t>(n));
  out.vectors.reserve(static_cast<std::size_t>(n * n));
  for (int idx : order) {
    out.values.push_back(a(idx, idx).real());
    const auto row = w.begin() + static_cast<std::ptrdiff_t>(idx * n);
    out.vectors.insert(out.vectors.end(), row, row + n);
  }
  return out;
}

int mdl_order(std::span<const double> eigenvalues, long long n_obs) {
  const int len = static_cast<int>(eigenvalues.size());
  if (len < 2) throw ConfigError("mdl_order: need at least 2 eigenvalues");
  if (n_obs < 1) throw ConfigError("mdl_order: n_obs must be >= 1");
  constexpr double kEps = 1e-18;
  std::vector<double> lam(eigenvalues.begin(), eigenvalues.end());
  for (double& l : lam) l = std::max(l, kEps);
  const double nobs = static_cast<double>(n_obs);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < len; ++k) {
    const int m = len - k;
    double log_sum = 0.0, sum = 0.0;
    for (int i = k; i < len; ++i) {
      log_sum += std::log(lam[static_cast<std::size_t>(i)]);
      sum += lam[static_cast<std::size_t>(i)];
    }
    const double log_geo = log_sum / m;
    const double log_arith = std::log(sum / m);
    const double val = -nobs * m * (log_geo - log_arith) +
                       0.5 * k * (2.0 * len - k) * std::log(nobs);
    if (val < best_val) {
      best_val = val;
      best = k;
    }
  }
  return best;
}

std::vector<double> music_spectrum(std::span<const cdouble> noise_subspace,
                                   int subarray_len, const DelayGrid& grid,
                                   double subcarrier_spacing) {
  const int len = subarray_len;
  if (noise_subspace.empty()) {
    throw NumericalError("music_spectrum: empty noise subspace (order over-estimated)");
  }
  if (noise_subspace.size() % static_cast<std::size_t>(len) != 0) {
    throw ConfigError("music_spectrum: noise subspace size is not a multiple of L");
  }
  grid.validate();
  const auto& k = kernels::active();
  const std::size_t ncols = noise_subspace.size() / static_cast<std::size_t>(len);
  const double norm = 1.0 / std::sqrt(static_cast<double>(len));
  std::vector<cdouble> steer(static_cast<std::size_t>(len));
  std::vector<double> out(static_cast<std::size_t>(grid.size()));
  for (int g = 0; g < grid.size(); ++g) {
    const double tau = grid.at(g);
    for (int m = 0; m < len; ++m) {
      const double cyc = m * subcarrier_spacing * tau;
      steer[static_cast<std::size_t>(m)] =
          std::polar(norm, -2.0 * kPi * (cyc - std::floor(cyc)));
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < ncols; ++c) {
      denom += std::norm(k.cdotc(noise_subspace.data() + c * static_cast<std::size_t>(len),
                                 steer.data(), static_cast<std::size_t>(len)));
    }
    out[static_cast<std::size_t>(g)] = 1.0 / std::max(denom, 1e-300);
  }
  return out;
}

double music_denominator(std::span<const cdouble> noise_subspace,
                         int subarray_len, double subcarrier_spacing,
                         double tau) {
  const auto& k = kernels::active();
  const auto len = static_cast<std::size_t>(subarray_len);
  const double norm = 1.0 / std::sqrt(static_cast<double>(len));
  std::vector<cdouble> steer(len);
  for (std::size_t m = 0; m < len; ++m) {
    const double cyc = static_cast<double>(m) * subcarrier_spacing * tau;
    steer[m] = std::polar(norm, -2.0 * kPi * (cyc - std::floor(cyc)));
  }
  double denom = 0.0;
  for (std::size_t c = 0; c + len <= noise_subspace.size(); c += len) {
    denom += std::norm(k.cdotc(noise_subspace.data() + c, steer.data(), len));
  }
  return denom;
}

double refine_peak(std::span<const cdouble> noise_subspace, int subarray_len,
                   double subcarrier_spacing, double tau, double step) {
  const auto f = [&](double t) {
    return music_denominator(noise_subspace, subarray_len, subcarrier_spacing, t);
  };
  // Successive parabolic interpolation inside the bracket [a, c].
  double a = std::max(tau - step, 0.0), b = tau, c = tau + step;
  double fa = f(a), fb = f(b), fc = f(c);
  if (!(fb <= fa && fb <= fc)) return tau;
  constexpr double kGolden = 0.3819660112501051;
  for (int it = 0; it < 40 && c - a > 1e-7 * step; ++it) {
    const double num = (b - a) * (b - a) * (fb - fc) - (b - c) * (b - c) * (fb - fa);
    const double den = (b - a) * (fb - fc) - (b - c) * (fb - fa);
    double x = den != 0.0 ? b - 0.5 * num / den : b;
    if (!(x > a && x < c) || std::abs(x - b) < 1e-9 * step) {
      x = (b - a > c - b) ? b - kGolden * (b - a) : b + kGolden * (c - b);
    }
    const double fx = f(x);
    if (fx < fb) {
      if (x < b) {
        c = b;
        fc = fb;
      } else {
        a = b;
        fa = fb;
      }
      b = x;
      fb = fx;
    } else if (x < b) {
      a = x;
      fa = fx;
    } else {
      c = x;
      fc = fx;
    }
  }
  return b;
}

std::vector<Peak> find_peaks(std::span<const double> spectrum,
                             const DelayGrid& grid, double min_prominence_db) {
  const int n = static_cast<int>(spectrum.size());
  std::vector<double> db(spectrum.size());
  for (int i = 0; i < n; ++i) {
    db[static_cast<std::size_t>(i)] = 10.0 * std::log10(spectrum[static_cast<std::size_t>(i)]);
  }
  const auto at = [&](int i) { return db[static_cast<std::size_t>(i)]; };
  std::vector<Peak> peaks;
  for (int i = 1; i + 1 < n; ++i) {
    if (!(at(i) > at(i - 1))) continue;
    // Plateaus count once, at their first sample.
    int j = i;
    while (j + 1 < n && at(j + 1) == at(i)) ++j;
    if (j + 1 >= n || !(at(j + 1) < at(i))) continue;

    double left_min = at(i);
    for (int l = i - 1; l >= 0 && at(l) <= at(i); --l) left_min = std::min(left_min, at(l));
    double right_min = at(i);
    for (int r = j + 1; r < n && at(r) <= at(i); ++r) right_min = std::min(right_min, at(r));
    const double prom = at(i) - std::max(left_min, right_min);
    if (prom < min_prominence_db) continue;

    // The denominator 1/P is smooth and close to quadratic at a MUSIC null.
    const double dm = 1.0 / spectrum[static_cast<std::size_t>(i - 1)];
    const double d0 = 1.0 / spectrum[static_cast<std::size_t>(i)];
    const double dp = 1.0 / spectrum[static_cast<std::size_t>(i + 1)];
    const double curv = dm - 2.0 * d0 + dp;
    const double delta = curv > 0.0 ? std::clamp(0.5 * (dm - dp) / curv, -0.5, 0.5) : 0.0;
    peaks.push_back({i, prom, grid.at(i) + delta * grid.step});
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.prominence_db != b.prominence_db) return a.prominence_db > b.prominence_db;
    return a.index < b.index;
  });
  return peaks;
}

Extraction extract(const channel::CsiSample& csi,
                   const channel::OfdmConfig& ofdm, const SuperresConfig& cfg,
                   Modality modality) {
  cfg.grid.validate();
  const int len = cfg.subarray_len;
  const HermitianMatrix r = smoothed_covariance(csi, len, cfg.forward_backward);
  const EigenDecomposition eig = eig_hermitian(r);

  Extraction ex;
  ex.eigenvalues = eig.values;
  std::vector<double> floored = eig.values;
  const double top = std::max(floored.front(), 0.0);
  for (double& l : floored) l = std::max(l, top * cfg.eig_rel_floor);
  const long long n_obs =
      static_cast<long long>(csi.snapshots) * (csi.n_subcarriers - len + 1);
  ex.mdl_order = mdl_order(floored, n_obs);
  ex.order = std::min({ex.mdl_order, cfg.max_order, len - 1});
  if (ex.order < 1) throw NumericalError("extract_features: no sources detected");

  const std::span<const cdouble> noise(
      eig.vectors.data() + static_cast<std::size_t>(ex.order * len),
      static_cast<std::size_t>((len - ex.order) * len));
  const auto spectrum = music_spectrum(noise, len, cfg.grid, ofdm.subcarrier_spacing());
  auto peaks = find_peaks(spectrum, cfg.grid, cfg.min_prominence_db);
  if (peaks.empty()) throw NumericalError("extract_features: no peaks found");
  if (peaks.size() > static_cast<std::size_t>(ex.order)) {
    peaks.resize(static_cast<std::size_t>(ex.order));
  }

  ex.features.modality = modality;
  for (const Peak& p : peaks) {
    const double tau = refine_peak(noise, len, ofdm.subcarrier_spacing(),
                                   cfg.grid.at(p.index), cfg.grid.step);
    ex.features.values.push_back(std::max(tau, 0.0));
  }
  std::sort(ex.features.values.begin(), ex.features.values.end());
  if (modality == Modality::kTDoA) {
    const double t0 = ex.features.values.front();
    for (double& v : ex.features.values) v -= t0;
  }
  return ex;
}

FeatureSet extract_features(const channel::CsiSample& csi,
                            const channel::OfdmConfig& ofdm,
                            const SuperresConfig& cfg, Modality modality) {
  return extract(csi, ofdm, cfg, modality).features;
}

}  // namespace rfslam::superres
