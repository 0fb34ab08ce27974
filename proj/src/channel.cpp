#include "rfslam/channel.hpp"

#include <cmath>
#include <random>

namespace rfslam::channel {

void OfdmConfig::validate() const {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("ofdm: bandwidth must be > 0");
  if (n_subcarriers < 2) throw ConfigError("ofdm: need at least 2 subcarriers");
  if (snapshots < 1) throw ConfigError("ofdm: need at least 1 snapshot");
  if (!std::isfinite(carrier_hz)) throw ConfigError("ofdm: carrier must be finite");
}

CsiSample synthesize(std::span<const datagen::PathRecord> paths,
                     const OfdmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (paths.empty()) throw ConfigError("synthesize: no paths");
  const int nsc = cfg.n_subcarriers;
  const double df = cfg.subcarrier_spacing();

  std::vector<cdouble> row(static_cast<std::size_t>(nsc), cdouble(0.0));
  for (const auto& p : paths) {
    // Reduce the carrier phase modulo one cycle before forming the exponent;
    // f_c * tau is O(100) cycles and would otherwise lose digits.
    const double carrier_cycles = cfg.carrier_hz * p.tof;
    const double frac = carrier_cycles - std::floor(carrier_cycles);
    const cdouble base = p.gain * std::polar(1.0, -2.0 * kPi * frac);
    for (int k = 0; k < nsc; ++k) {
      const double cyc = k * df * p.tof;
      row[static_cast<std::size_t>(k)] +=
          base * std::polar(1.0, -2.0 * kPi * (cyc - std::floor(cyc)));
    }
  }

  CsiSample csi;
  csi.snapshots = cfg.snapshots;
  csi.n_subcarriers = nsc;
  csi.h.reserve(static_cast<std::size_t>(cfg.snapshots * nsc));
  for (int s = 0; s < cfg.snapshots; ++s) csi.h.insert(csi.h.end(), row.begin(), row.end());

  if (cfg.snr_db) {
    double power = 0.0;
    for (const cdouble& v : row) power += std::norm(v);
    power /= nsc;
    const double variance = power / std::pow(10.0, *cfg.snr_db / 10.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(variance / 2.0));
    for (cdouble& v : csi.h) v += cdouble(gauss(rng), gauss(rng));
  }
  return csi;
}

double magnitude_summary(const CsiSample& csi) {
  double acc = 0.0;
  for (const cdouble& v : csi.h) acc += std::abs(v);
  if (csi.h.empty() || !(acc > 0.0)) return kMagnitudeFloor;
  return std::log10(acc / static_cast<double>(csi.h.size()));
}

}  // namespace rfslam::channel
