/**
 * @file common.hpp
 * @brief Shared aliases, error types and seeding helpers.
 */
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace csiforge {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Invalid or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, truncated or incompatible persisted data. Exit code 3.
class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or evaluation. Exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define CSIFORGE_EXPECT(cond, msg)                                         \
  do {                                                                     \
    if (!(cond)) throw ::csiforge::ContractViolation(std::string(msg));    \
  } while (0)

/// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`, further split by `salt`.
constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index,
                                   std::uint64_t salt = 0) {
  return mix_seed(mix_seed(master ^ mix_seed(salt)) + index);
}

}  // namespace csiforge
