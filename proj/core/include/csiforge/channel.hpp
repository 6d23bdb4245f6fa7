/**
 * @file channel.hpp
 * @brief Parametric multipath channel synthesis, OFDM frequency response,
 * digital-twin perturbation and dataset generation.
 *
 * Paths are drawn per cluster (one cluster per dominant scatterer) and
 * turned into a D-tap delay-domain channel with a sinc pulse, then into the
 * N_t x K frequency-domain matrix used everywhere else.
 */
#pragma once

#include "csiforge/common.hpp"

#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace csiforge::channel {

/// Environment feature a path interacted with.
enum class PathTag : std::uint8_t { kBuilding = 0, kFoliage = 1 };

struct PathParams {
  cd gain;           ///< linear complex amplitude
  double delay;      ///< seconds, in [0, D*Ts)
  double azimuth;    ///< radians, [-pi, pi)
  double elevation;  ///< radians, [-pi/2, pi/2]
  PathTag tag = PathTag::kBuilding;
  int cluster = 0;   ///< index of the producing cluster (building)
};

using PathSet = std::vector<PathParams>;

struct Cluster {
  double mean_azimuth = 0.0;
  double mean_elevation = 0.0;
  double mean_delay = 0.0;      ///< seconds
  double angular_spread = 0.0;  ///< std of the Laplacian angle offsets, rad
  double delay_spread = 0.0;    ///< mean of the exponential excess delay, s
  double mean_power_db = 0.0;   ///< per-path power, dB
  PathTag tag = PathTag::kBuilding;
};

struct ScenarioConfig {
  int n_tx = 32;
  int n_subcarriers = 288;
  double subcarrier_spacing = 30e3;
  double carrier_freq = 3.5e9;
  int n_taps = 32;
  double tx_power_dbm = 30.0;
  double noise_figure_db = 7.0;
  std::vector<Cluster> clusters;
  int paths_per_cluster = 4;
  /// Redraw cluster means per sample (generic, non-site-specific data).
  bool randomize_layout = false;
  std::uint64_t rng_seed = 1;

  ScenarioConfig();

  double sample_period() const {
    return 1.0 / (n_subcarriers * subcarrier_spacing);
  }
  double tx_power() const;     ///< watts
  double noise_power() const;  ///< watts, thermal floor + noise figure
  int paths_per_user() const {
    return static_cast<int>(clusters.size()) * paths_per_cluster;
  }

  /// Throws ConfigError listing every violated invariant.
  void validate() const;
};

/// Three clusters, the last one foliage. Shared by full and desk scale.
std::vector<Cluster> default_cluster_layout();

/// N_t = 16, K = 48, D = 16 with the default cluster layout.
ScenarioConfig desk_scenario();

struct TwinPerturbation {
  bool drop_foliage = false;
  double position_error_std = 0.0;  ///< meters
  std::uint64_t rng_seed = 0;

  bool is_identity() const {
    return !drop_foliage && position_error_std == 0.0;
  }
};

/// Nominal scatterer distance used to turn a position error into an
/// angular error.
inline constexpr double kNominalScattererDistance = 50.0;

struct UserChannel {
  CMat taps;  ///< D x N_t, row d is h_d^T
  CMat freq;  ///< N_t x K, column k is h_k
};

struct DatasetRecord {
  std::vector<UserChannel> users;
  std::vector<CMat> estimates;  ///< N_t x K per user
  std::uint64_t scenario_id = 0;
  std::uint64_t sample_index = 0;
};

struct Dataset {
  int n_tx = 0;
  int n_subcarriers = 0;
  int n_taps = 0;
  int n_users = 0;
  std::uint64_t scenario_hash = 0;
  std::vector<DatasetRecord> records;
};

inline constexpr double kPerfectCsi = -std::numeric_limits<double>::infinity();

PathSet sample_paths(const ScenarioConfig& scenario, int user_index,
                     std::mt19937_64& rng);

CVec array_response(double azimuth, double elevation, int n_tx);

/// h_d = sum_l gain_l * sinc((d*Ts - delay_l)/Ts) * a(az_l, el_l).
CMat delay_domain_channel(const PathSet& paths, const ScenarioConfig& scenario);

/// h_k = sum_d h_d exp(-j 2 pi k d / K), k = 0..K-1.
CMat freq_channel(const CMat& taps, int n_subcarriers);

UserChannel make_user_channel(const PathSet& paths,
                              const ScenarioConfig& scenario);

/// Per-building (cluster) position offsets in meters, fixed by the seed.
std::vector<double> building_offsets(const TwinPerturbation& pert,
                                     int n_clusters);

/// Drops foliage and shifts each path by the offset of its building:
/// delay += d/c, azimuth += atan(d / r_nominal). Gains are untouched.
PathSet apply_twin_perturbation(const PathSet& paths,
                                const TwinPerturbation& pert,
                                const ScenarioConfig& scenario);

/// H + E with E ~ CN so that E|E|^2/|H|^2 = 10^(nmse_db/10).
CMat estimate_channel(const CMat& freq, double nmse_db, std::mt19937_64& rng);

/// Deterministic in (scenario, seed); sample s uses child seeds of (seed, s).
Dataset generate_dataset(const ScenarioConfig& scenario, int n_users,
                         int n_samples,
                         const std::optional<TwinPerturbation>& pert,
                         std::uint64_t seed, double estimation_nmse_db = kPerfectCsi);

/// Stable 64-bit hash of the scenario's canonical JSON form.
std::uint64_t scenario_hash(const ScenarioConfig& scenario);

}  // namespace csiforge::channel
