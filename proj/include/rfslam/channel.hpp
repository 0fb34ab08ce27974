#pragma once
// SISO OFDM channel frequency response synthesis.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfslam/datagen.hpp"

namespace rfslam::channel {

using cdouble = std::complex<double>;

struct OfdmConfig {
  double carrier_hz = 2.0e9;
  double bandwidth_hz = 400.0e6;
  int n_subcarriers = 128;
  int snapshots = 16;
  std::optional<double> snr_db;

  double subcarrier_spacing() const { return bandwidth_hz / n_subcarriers; }
  void validate() const;
};

// Row-major snapshots x n_subcarriers.
struct CsiSample {
  int snapshots = 0;
  int n_subcarriers = 0;
  std::vector<cdouble> h;

  cdouble at(int s, int k) const {
    return h[static_cast<std::size_t>(s * n_subcarriers + k)];
  }
  std::span<const cdouble> snapshot(int s) const {
    return {h.data() + static_cast<std::size_t>(s * n_subcarriers),
            static_cast<std::size_t>(n_subcarriers)};
  }
};

CsiSample synthesize(std::span<const datagen::PathRecord> paths,
                     const OfdmConfig& cfg, std::uint64_t seed);

// Floor returned for an all-zero response.
inline constexpr double kMagnitudeFloor = -12.0;

// log10 of the mean |h| over all entries.
double magnitude_summary(const CsiSample& csi);

}  // namespace rfslam::channel
