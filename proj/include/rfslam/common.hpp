#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rfslam {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s, exact
inline constexpr double kPi = 3.14159265358979323846;

// Invalid input, configuration or precondition. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical breakdown at runtime (divergence, degenerate geometry, empty
// extraction). Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stateless 64-bit mixer used to derive independent per-item seeds from a
// base seed, so per-sample work stays reproducible regardless of order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

enum class Modality { kToF, kTDoA };

inline const char* modality_name(Modality m) {
  return m == Modality::kToF ? "tof" : "tdoa";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "tof") return Modality::kToF;
  if (s == "tdoa") return Modality::kTDoA;
  throw ConfigError("unknown modality '" + s + "' (expected tof|tdoa)");
}

}  // namespace rfslam
