#pragma once
// Delay super-resolution: spatially smoothed covariance over subcarrier
// windows, Hermitian eigendecomposition, MDL source enumeration and the MUSIC
// pseudospectrum with peak picking.

#include <complex>
#include <span>
#include <vector>

#include "rfslam/channel.hpp"
#include "rfslam/common.hpp"

namespace rfslam::superres {

using cdouble = std::complex<double>;

struct HermitianMatrix {
  int n = 0;
  std::vector<cdouble> a;  // row-major n x n

  cdouble operator()(int i, int j) const {
    return a[static_cast<std::size_t>(i * n + j)];
  }
  cdouble& operator()(int i, int j) { return a[static_cast<std::size_t>(i * n + j)]; }
  static HermitianMatrix zeros(int n);
  double frobenius() const;
  // max |a_ij - conj(a_ji)|
  double hermitian_defect() const;
};

struct DelayGrid {
  double t_min = 0.0;
  double t_max = 0.0;
  double step = 0.0;

  int size() const;
  double at(int i) const { return t_min + step * i; }
  void validate() const;
};

struct FeatureSet {
  std::vector<double> values;  // ascending, seconds
  Modality modality = Modality::kToF;

  std::size_t size() const { return values.size(); }
};

// Eigenvalues descending; eigenvector i is vectors[i*n .. i*n+n).
struct EigenDecomposition {
  int n = 0;
  std::vector<double> values;
  std::vector<cdouble> vectors;

  std::span<const cdouble> vector(int i) const {
    return {vectors.data() + static_cast<std::size_t>(i * n), static_cast<std::size_t>(n)};
  }
};

HermitianMatrix smoothed_covariance(const channel::CsiSample& csi,
                                    int subarray_len, bool forward_backward);

// Cyclic complex Jacobi rotations.
EigenDecomposition eig_hermitian(const HermitianMatrix& a);

// Wax-Kailath MDL estimate of the number of sources.
int mdl_order(std::span<const double> eigenvalues, long long n_obs);

// P(tau) = 1 / ||E_n^H a(tau)||^2 with a(tau)_m = exp(-i 2 pi m df tau)/sqrt(L).
// `noise_subspace` holds the noise eigenvectors as consecutive rows of length L.
std::vector<double> music_spectrum(std::span<const cdouble> noise_subspace,
                                   int subarray_len, const DelayGrid& grid,
                                   double subcarrier_spacing);

// ||E_n^H a(tau)||^2 at a single delay.
double music_denominator(std::span<const cdouble> noise_subspace,
                         int subarray_len, double subcarrier_spacing, double tau);

// Minimizes the MUSIC denominator around a grid peak by successive parabolic
// interpolation inside [tau - step, tau + step].
double refine_peak(std::span<const cdouble> noise_subspace, int subarray_len,
                   double subcarrier_spacing, double tau, double step);

struct SuperresConfig {
  int subarray_len = 64;
  bool forward_backward = true;
  DelayGrid grid;
  int max_order = 12;
  // Eigenvalues below this fraction of the largest are treated as noise floor
  // before order selection.
  double eig_rel_floor = 1e-10;
  // Peaks with less prominence (dB) are discarded.
  double min_prominence_db = 1.0;
};

// Grid covering every physical delay of a scene with 8x oversampling of 1/B.
DelayGrid default_grid(double room_diagonal, int max_bounce, double bandwidth_hz);

struct Peak {
  int index = 0;
  double prominence_db = 0.0;
  double delay = 0.0;  // refined, seconds
};

// Local maxima of the spectrum ranked by descending prominence (ties: lower
// delay first), with parabolic refinement of the MUSIC denominator.
std::vector<Peak> find_peaks(std::span<const double> spectrum,
                             const DelayGrid& grid, double min_prominence_db);

struct Extraction {
  FeatureSet features;
  int mdl_order = 0;
  int order = 0;
  std::vector<double> eigenvalues;
};

Extraction extract(const channel::CsiSample& csi,
                   const channel::OfdmConfig& ofdm, const SuperresConfig& cfg,
                   Modality modality);

FeatureSet extract_features(const channel::CsiSample& csi,
                            const channel::OfdmConfig& ofdm,
                            const SuperresConfig& cfg, Modality modality);

}  // namespace rfslam::superres
