/**
 * @file channel.cpp
 * @brief Cluster-based path sampler and channel construction.
 */
#include "csiforge/channel.hpp"

#include "csiforge/io/json_types.hpp"
#include "csiforge/util.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace csiforge::channel {

namespace {

constexpr int kMaxDelayRedraws = 100;

double sinc(double x) {
  if (x == std::round(x)) return x == 0.0 ? 1.0 : 0.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double laplace(std::mt19937_64& rng, double std_dev) {
  if (std_dev <= 0.0) return 0.0;
  std::exponential_distribution<double> expo(std::sqrt(2.0) / std_dev);
  std::bernoulli_distribution sign(0.5);
  const double mag = expo(rng);
  return sign(rng) ? mag : -mag;
}

double excess_delay(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0.0;
  std::exponential_distribution<double> expo(1.0 / mean);
  return expo(rng);
}

std::vector<Cluster> randomized_layout(const ScenarioConfig& scenario,
                                       std::mt19937_64& rng) {
  const double window = scenario.n_taps * scenario.sample_period();
  std::uniform_real_distribution<double> az(-0.45 * kPi, 0.45 * kPi);
  std::uniform_real_distribution<double> el(-0.1, 0.3);
  std::uniform_real_distribution<double> delay(0.0, 0.3 * window);
  auto layout = scenario.clusters;
  for (auto& c : layout) {
    c.mean_azimuth = az(rng);
    c.mean_elevation = el(rng);
    c.mean_delay = delay(rng);
  }
  return layout;
}

}  // namespace

ScenarioConfig::ScenarioConfig() : clusters(default_cluster_layout()) {}

double ScenarioConfig::tx_power() const {
  return std::pow(10.0, (tx_power_dbm - 30.0) / 10.0);
}

double ScenarioConfig::noise_power() const {
  const double bandwidth = n_subcarriers * subcarrier_spacing;
  const double dbm = -174.0 + 10.0 * std::log10(bandwidth) + noise_figure_db;
  return std::pow(10.0, (dbm - 30.0) / 10.0);
}

void ScenarioConfig::validate() const {
  std::vector<std::string> errs;
  if (n_tx < 1) errs.push_back("n_tx must be >= 1");
  if (n_subcarriers < 1) errs.push_back("n_subcarriers must be >= 1");
  if (n_taps < 1) errs.push_back("n_taps must be >= 1");
  if (n_taps > n_subcarriers) errs.push_back("n_taps must be <= n_subcarriers");
  if (!(subcarrier_spacing > 0.0)) errs.push_back("subcarrier_spacing must be > 0");
  if (!(carrier_freq > 0.0)) errs.push_back("carrier_freq must be > 0");
  if (!std::isfinite(tx_power_dbm)) errs.push_back("tx_power_dbm must be finite");
  if (!std::isfinite(noise_figure_db)) errs.push_back("noise_figure_db must be finite");
  if (paths_per_cluster < 1) errs.push_back("paths_per_cluster must be >= 1");
  if (clusters.empty()) errs.push_back("cluster layout must not be empty");
  const double window = n_taps * (n_subcarriers > 0 && subcarrier_spacing > 0
                                      ? sample_period()
                                      : 0.0);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    const std::string p = "clusters[" + std::to_string(i) + "].";
    if (c.angular_spread < 0.0) errs.push_back(p + "angular_spread must be >= 0");
    if (c.delay_spread < 0.0) errs.push_back(p + "delay_spread must be >= 0");
    if (c.mean_delay < 0.0 || c.mean_delay >= window)
      errs.push_back(p + "mean_delay must lie in [0, n_taps*Ts)");
    if (std::abs(c.mean_elevation) > kPi / 2)
      errs.push_back(p + "mean_elevation must lie in [-pi/2, pi/2]");
  }
  if (!errs.empty()) {
    std::ostringstream os;
    os << "invalid scenario:";
    for (const auto& e : errs) os << "\n  - " << e;
    throw ConfigError(os.str());
  }
}

std::vector<Cluster> default_cluster_layout() {
  // Delays fit inside both the full-scale (D=32, Ts=116 ns) and the desk
  // (D=16, Ts=694 ns) tap windows. Foliage sits 10 dB under the strongest
  // building cluster (about 10 m of tree canopy at 1 dB/m).
  return {
      {-0.55, 0.10, 0.30e-6, 0.06, 0.15e-6, -127.0, PathTag::kBuilding},
      {0.25, 0.05, 0.90e-6, 0.06, 0.20e-6, -129.0, PathTag::kBuilding},
      {0.80, 0.00, 0.55e-6, 0.08, 0.20e-6, -137.0, PathTag::kFoliage},
  };
}

ScenarioConfig desk_scenario() {
  ScenarioConfig s;
  s.n_tx = 16;
  s.n_subcarriers = 48;
  s.n_taps = 16;
  return s;
}

PathSet sample_paths(const ScenarioConfig& scenario, int user_index,
                     std::mt19937_64& rng) {
  if (scenario.clusters.empty())
    throw ConfigError("sample_paths: cluster layout is empty");
  (void)user_index;  // users differ only through independent draws
  const double window = scenario.n_taps * scenario.sample_period();
  const auto layout = scenario.randomize_layout
                          ? randomized_layout(scenario, rng)
                          : scenario.clusters;

  PathSet paths;
  paths.reserve(layout.size() * scenario.paths_per_cluster);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t ci = 0; ci < layout.size(); ++ci) {
    const Cluster& c = layout[ci];
    const double amp = std::sqrt(std::pow(10.0, c.mean_power_db / 10.0) / 2.0);
    for (int p = 0; p < scenario.paths_per_cluster; ++p) {
      PathParams path;
      path.tag = c.tag;
      path.cluster = static_cast<int>(ci);
      path.azimuth = wrap_angle(c.mean_azimuth + laplace(rng, c.angular_spread));
      path.elevation = std::clamp(c.mean_elevation + laplace(rng, c.angular_spread),
                                  -kPi / 2, kPi / 2);
      double delay = c.mean_delay + excess_delay(rng, c.delay_spread);
      for (int retry = 0; delay >= window && retry < kMaxDelayRedraws; ++retry)
        delay = c.mean_delay + excess_delay(rng, c.delay_spread);
      if (delay >= window) delay = std::nextafter(window, 0.0);
      path.delay = delay;
      do {
        const double re = normal(rng);
        const double im = normal(rng);
        path.gain = cd(amp * re, amp * im);
      } while (path.gain == cd(0.0, 0.0));
      paths.push_back(path);
    }
  }
  return paths;
}

CVec array_response(double azimuth, double elevation, int n_tx) {
  CVec a(n_tx);
  const double phase = kPi * std::cos(elevation) * std::sin(azimuth);
  for (int n = 0; n < n_tx; ++n) a(n) = std::polar(1.0, phase * n);
  return a;
}

CMat delay_domain_channel(const PathSet& paths, const ScenarioConfig& scenario) {
  const int D = scenario.n_taps;
  const double ts = scenario.sample_period();
  CMat taps = CMat::Zero(D, scenario.n_tx);
  for (const auto& path : paths) {
    const CVec a = array_response(path.azimuth, path.elevation, scenario.n_tx);
    const double frac = path.delay / ts;
    for (int d = 0; d < D; ++d) {
      const double p = sinc(d - frac);
      if (p != 0.0) taps.row(d) += (path.gain * p) * a.transpose();
    }
  }
  return taps;
}

CMat freq_channel(const CMat& taps, int n_subcarriers) {
  const int D = static_cast<int>(taps.rows());
  const int K = n_subcarriers;
  CMat dft(D, K);
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      const auto idx = (static_cast<long long>(k) * d) % K;
      dft(d, k) = std::polar(1.0, -2.0 * kPi * static_cast<double>(idx) / K);
    }
  return taps.transpose() * dft;
}

UserChannel make_user_channel(const PathSet& paths,
                              const ScenarioConfig& scenario) {
  UserChannel ch;
  ch.taps = delay_domain_channel(paths, scenario);
  ch.freq = freq_channel(ch.taps, scenario.n_subcarriers);
  return ch;
}

std::vector<double> building_offsets(const TwinPerturbation& pert,
                                     int n_clusters) {
  std::vector<double> offsets(std::max(n_clusters, 0), 0.0);
  if (pert.position_error_std <= 0.0) return offsets;
  std::normal_distribution<double> normal(0.0, pert.position_error_std);
  for (int c = 0; c < n_clusters; ++c) {
    std::mt19937_64 rng(child_seed(pert.rng_seed, static_cast<std::uint64_t>(c),
                                   0x7477696eULL));
    offsets[c] = normal(rng);
  }
  return offsets;
}

PathSet apply_twin_perturbation(const PathSet& paths,
                                const TwinPerturbation& pert,
                                const ScenarioConfig& scenario) {
  if (pert.is_identity()) return paths;
  int n_clusters = 0;
  for (const auto& p : paths) n_clusters = std::max(n_clusters, p.cluster + 1);
  const auto offsets = building_offsets(pert, n_clusters);
  const double window = scenario.n_taps * scenario.sample_period();

  PathSet out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    if (pert.drop_foliage && p.tag == PathTag::kFoliage) continue;
    PathParams q = p;
    const double shift = offsets[p.cluster];
    if (shift != 0.0) {
      q.delay = std::clamp(p.delay + shift / kSpeedOfLight, 0.0,
                           std::nextafter(window, 0.0));
      q.azimuth = wrap_angle(p.azimuth + std::atan(shift / kNominalScattererDistance));
    }
    out.push_back(q);
  }
  if (out.empty() && !paths.empty())
    spdlog::warn("twin perturbation removed every path; channel is zero");
  return out;
}

CMat estimate_channel(const CMat& freq, double nmse_db, std::mt19937_64& rng) {
  CSIFORGE_EXPECT(!(nmse_db > 0.0), "estimate_channel: nmse_db must be <= 0");
  if (std::isinf(nmse_db) && nmse_db < 0) return freq;
  const double energy = freq.squaredNorm();
  if (energy == 0.0) return freq;
  const double per_entry = std::pow(10.0, nmse_db / 10.0) * energy /
                           static_cast<double>(freq.size());
  std::normal_distribution<double> normal(0.0, std::sqrt(per_entry / 2.0));
  CMat est = freq;
  for (Eigen::Index j = 0; j < est.cols(); ++j)
    for (Eigen::Index i = 0; i < est.rows(); ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      est(i, j) += cd(re, im);
    }
  return est;
}

Dataset generate_dataset(const ScenarioConfig& scenario, int n_users,
                         int n_samples,
                         const std::optional<TwinPerturbation>& pert,
                         std::uint64_t seed, double estimation_nmse_db) {
  scenario.validate();
  if (n_samples < 1) throw ConfigError("generate_dataset: n_samples must be >= 1");
  if (n_users < 1) throw ConfigError("generate_dataset: n_users must be >= 1");

  Dataset ds;
  ds.n_tx = scenario.n_tx;
  ds.n_subcarriers = scenario.n_subcarriers;
  ds.n_taps = scenario.n_taps;
  ds.n_users = n_users;
  ds.scenario_hash = scenario_hash(scenario);
  ds.records.resize(n_samples);

  for (int s = 0; s < n_samples; ++s) {
    DatasetRecord& rec = ds.records[s];
    rec.scenario_id = ds.scenario_hash;
    rec.sample_index = static_cast<std::uint64_t>(s);
    std::mt19937_64 path_rng(child_seed(seed, s, 1));
    std::mt19937_64 noise_rng(child_seed(seed, s, 2));
    for (int u = 0; u < n_users; ++u) {
      PathSet paths = sample_paths(scenario, u, path_rng);
      if (pert) paths = apply_twin_perturbation(paths, *pert, scenario);
      rec.users.push_back(make_user_channel(paths, scenario));
      rec.estimates.push_back(
          estimate_channel(rec.users.back().freq, estimation_nmse_db, noise_rng));
    }
  }
  return ds;
}

std::uint64_t scenario_hash(const ScenarioConfig& scenario) {
  const nlohmann::json j = scenario;
  return util::fnv1a64(j.dump());
}

}  // namespace csiforge::channel
