#include "csiforge/io/config.hpp"

#include "csiforge/io/json_types.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace csiforge::channel {

namespace {

std::string tag_name(PathTag t) { return t == PathTag::kFoliage ? "foliage" : "building"; }

PathTag tag_from(const std::string& s) {
  if (s == "building") return PathTag::kBuilding;
  if (s == "foliage") return PathTag::kFoliage;
  throw ConfigError("cluster tag must be one of {building, foliage}, got '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const Cluster& c) {
  j = nlohmann::json{{"mean_azimuth", c.mean_azimuth},
                     {"mean_elevation", c.mean_elevation},
                     {"mean_delay", c.mean_delay},
                     {"angular_spread", c.angular_spread},
                     {"delay_spread", c.delay_spread},
                     {"mean_power_db", c.mean_power_db},
                     {"tag", tag_name(c.tag)}};
}

void from_json(const nlohmann::json& j, Cluster& c) {
  static const std::vector<std::string> keys{"angular_spread", "delay_spread", "mean_azimuth",
                                             "mean_delay",     "mean_elevation", "mean_power_db",
                                             "tag"};
  if (!j.is_object()) throw ConfigError("cluster entries must be JSON objects");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown cluster key '" + k +
                        "'; valid keys: angular_spread, delay_spread, mean_azimuth, "
                        "mean_delay, mean_elevation, mean_power_db, tag");
  }
  if (j.contains("mean_azimuth")) c.mean_azimuth = j.at("mean_azimuth").get<double>();
  if (j.contains("mean_elevation")) c.mean_elevation = j.at("mean_elevation").get<double>();
  if (j.contains("mean_delay")) c.mean_delay = j.at("mean_delay").get<double>();
  if (j.contains("angular_spread")) c.angular_spread = j.at("angular_spread").get<double>();
  if (j.contains("delay_spread")) c.delay_spread = j.at("delay_spread").get<double>();
  if (j.contains("mean_power_db")) c.mean_power_db = j.at("mean_power_db").get<double>();
  if (j.contains("tag")) c.tag = tag_from(j.at("tag").get<std::string>());
}

void to_json(nlohmann::json& j, const ScenarioConfig& s) {
  j = nlohmann::json{{"n_tx", s.n_tx},
                     {"n_subcarriers", s.n_subcarriers},
                     {"subcarrier_spacing", s.subcarrier_spacing},
                     {"carrier_freq", s.carrier_freq},
                     {"n_taps", s.n_taps},
                     {"tx_power_dbm", s.tx_power_dbm},
                     {"noise_figure_db", s.noise_figure_db},
                     {"clusters", s.clusters},
                     {"paths_per_cluster", s.paths_per_cluster},
                     {"randomize_layout", s.randomize_layout},
                     {"rng_seed", s.rng_seed}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& s) {
  s.n_tx = j.at("n_tx").get<int>();
  s.n_subcarriers = j.at("n_subcarriers").get<int>();
  s.subcarrier_spacing = j.at("subcarrier_spacing").get<double>();
  s.carrier_freq = j.at("carrier_freq").get<double>();
  s.n_taps = j.at("n_taps").get<int>();
  s.tx_power_dbm = j.at("tx_power_dbm").get<double>();
  s.noise_figure_db = j.at("noise_figure_db").get<double>();
  s.clusters = j.at("clusters").get<std::vector<Cluster>>();
  s.paths_per_cluster = j.at("paths_per_cluster").get<int>();
  s.randomize_layout = j.at("randomize_layout").get<bool>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
}

}  // namespace csiforge::channel

namespace csiforge::io {

using nlohmann::json;
using training::ExperimentConfig;

namespace {

std::string init_name(nn::InitMode m) {
  switch (m) {
    case nn::InitMode::kXavier: return "xavier";
    case nn::InitMode::kZero: return "zero";
    case nn::InitMode::kResidualZero: return "residual-zero";
  }
  return "xavier";
}

nn::InitMode init_from(const std::string& s) {
  if (s == "xavier") return nn::InitMode::kXavier;
  if (s == "zero") return nn::InitMode::kZero;
  if (s == "residual-zero") return nn::InitMode::kResidualZero;
  throw ConfigError("init must be one of {xavier, zero, residual-zero}, got '" + s + "'");
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

}  // namespace

const std::vector<std::string>& valid_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{
        "adam_eps",           "batch_size",       "beta1",
        "beta2",              "carrier_freq",     "clusters",
        "codebook",           "data_seed",        "drop_foliage",
        "epochs",             "estimation_nmse_db", "feedback_bits",
        "init",               "learning_rate",    "n_beams",
        "n_samples",          "n_subbands",       "n_subcarriers",
        "n_taps",             "n_tx",             "n_users",
        "noise_figure_db",    "overhead_sweep",   "oversampling",
        "paths_per_cluster",  "position_error_m", "randomize_layout",
        "scenario_seed",      "scheme",           "subcarrier_spacing",
        "threads",            "train_fraction",   "train_seed",
        "twin_seed",          "tx_power_dbm",     "validation_fraction"};
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

codebook::CodebookConfig parse_codebook_tag(const std::string& tag) {
  static const std::regex type1(R"(typeI-O(\d+))");
  static const std::regex type2(R"(typeII-O(\d+)-L(\d+)-SB(\d+))");
  std::smatch m;
  if (std::regex_match(tag, m, type1))
    return codebook::TypeIConfig{std::stoi(m[1].str())};
  if (std::regex_match(tag, m, type2))
    return codebook::TypeIIConfig{std::stoi(m[1].str()), std::stoi(m[2].str()),
                                  std::stoi(m[3].str())};
  throw ConfigError("codebook tag '" + tag +
                    "' must look like typeI-O<o> or typeII-O<o>-L<l>-SB<n>");
}

json to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.scenario;
  json j;
  j["n_tx"] = s.n_tx;
  j["n_subcarriers"] = s.n_subcarriers;
  j["subcarrier_spacing"] = s.subcarrier_spacing;
  j["carrier_freq"] = s.carrier_freq;
  j["n_taps"] = s.n_taps;
  j["tx_power_dbm"] = s.tx_power_dbm;
  j["noise_figure_db"] = s.noise_figure_db;
  j["clusters"] = s.clusters;
  j["paths_per_cluster"] = s.paths_per_cluster;
  j["randomize_layout"] = s.randomize_layout;
  j["scenario_seed"] = s.rng_seed;

  j["drop_foliage"] = cfg.twin.drop_foliage;
  j["position_error_m"] = cfg.twin.position_error_std;
  j["twin_seed"] = cfg.twin.rng_seed;

  if (const auto* c1 = std::get_if<codebook::TypeIConfig>(&cfg.codebook)) {
    j["codebook"] = "typeI";
    j["oversampling"] = c1->oversampling;
    j["n_beams"] = nullptr;
    j["n_subbands"] = nullptr;
  } else {
    const auto& c2 = std::get<codebook::TypeIIConfig>(cfg.codebook);
    j["codebook"] = "typeII";
    j["oversampling"] = c2.oversampling;
    j["n_beams"] = c2.n_beams;
    j["n_subbands"] = c2.n_subbands;
  }
  j["scheme"] = training::to_string(cfg.scheme);

  const auto& t = cfg.train;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.adam.learning_rate;
  j["beta1"] = t.adam.beta1;
  j["beta2"] = t.adam.beta2;
  j["adam_eps"] = t.adam.epsilon;
  j["init"] = init_name(t.init);
  j["validation_fraction"] = t.validation_fraction;
  j["train_seed"] = t.seed;
  j["feedback_bits"] = t.feedback_bits;
  j["threads"] = t.threads;

  j["n_users"] = cfg.n_users;
  j["n_samples"] = cfg.n_samples;
  j["train_fraction"] = cfg.train_fraction;
  if (std::isfinite(cfg.estimation_nmse_db))
    j["estimation_nmse_db"] = cfg.estimation_nmse_db;
  else
    j["estimation_nmse_db"] = nullptr;
  j["data_seed"] = cfg.data_seed;
  json sweep = json::array();
  for (const auto& c : cfg.overhead_sweep) sweep.push_back(codebook::tag(c));
  j["overhead_sweep"] = sweep;
  return j;
}

// Written by echo_config for provenance and ignored when read back.
const std::string kHashKey = "config_hash";

ExperimentConfig from_json(const json& j, ExperimentConfig cfg) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto& valid = valid_config_keys();
  std::vector<std::string> unknown;
  for (const auto& [k, v] : j.items())
    if (k != kHashKey && !std::binary_search(valid.begin(), valid.end(), k)) unknown.push_back(k);
  if (!unknown.empty())
    throw ConfigError("unknown config key(s): " + join(unknown) +
                      "\nvalid keys: " + join(valid));

  auto& s = cfg.scenario;
  const auto has = [&](const char* k) { return j.contains(k) && !j.at(k).is_null(); };
  if (has("n_tx")) s.n_tx = get_as<int>(j, "n_tx");
  if (has("n_subcarriers")) s.n_subcarriers = get_as<int>(j, "n_subcarriers");
  if (has("subcarrier_spacing")) s.subcarrier_spacing = get_as<double>(j, "subcarrier_spacing");
  if (has("carrier_freq")) s.carrier_freq = get_as<double>(j, "carrier_freq");
  if (has("n_taps")) s.n_taps = get_as<int>(j, "n_taps");
  if (has("tx_power_dbm")) s.tx_power_dbm = get_as<double>(j, "tx_power_dbm");
  if (has("noise_figure_db")) s.noise_figure_db = get_as<double>(j, "noise_figure_db");
  if (has("clusters")) {
    try {
      s.clusters = j.at("clusters").get<std::vector<channel::Cluster>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key 'clusters': ") + e.what());
    }
  }
  if (has("paths_per_cluster")) s.paths_per_cluster = get_as<int>(j, "paths_per_cluster");
  if (has("randomize_layout")) s.randomize_layout = get_as<bool>(j, "randomize_layout");
  if (has("scenario_seed")) s.rng_seed = get_as<std::uint64_t>(j, "scenario_seed");

  if (has("drop_foliage")) cfg.twin.drop_foliage = get_as<bool>(j, "drop_foliage");
  if (has("position_error_m")) cfg.twin.position_error_std = get_as<double>(j, "position_error_m");
  if (has("twin_seed")) cfg.twin.rng_seed = get_as<std::uint64_t>(j, "twin_seed");

  std::string kind = std::holds_alternative<codebook::TypeIConfig>(cfg.codebook) ? "typeI"
                                                                                 : "typeII";
  if (has("codebook")) kind = get_as<std::string>(j, "codebook");
  if (kind == "typeI") {
    codebook::TypeIConfig c1;
    if (const auto* prev = std::get_if<codebook::TypeIConfig>(&cfg.codebook)) c1 = *prev;
    if (has("oversampling")) c1.oversampling = get_as<int>(j, "oversampling");
    cfg.codebook = c1;
  } else if (kind == "typeII") {
    codebook::TypeIIConfig c2;
    if (const auto* prev = std::get_if<codebook::TypeIIConfig>(&cfg.codebook)) c2 = *prev;
    if (has("oversampling")) c2.oversampling = get_as<int>(j, "oversampling");
    if (has("n_beams")) c2.n_beams = get_as<int>(j, "n_beams");
    if (has("n_subbands")) c2.n_subbands = get_as<int>(j, "n_subbands");
    cfg.codebook = c2;
  } else {
    throw ConfigError("codebook must be one of {typeI, typeII}, got '" + kind + "'");
  }
  if (has("scheme")) cfg.scheme = training::scheme_from_string(get_as<std::string>(j, "scheme"));

  auto& t = cfg.train;
  if (has("epochs")) t.epochs = get_as<int>(j, "epochs");
  if (has("batch_size")) t.batch_size = get_as<int>(j, "batch_size");
  if (has("learning_rate")) t.adam.learning_rate = get_as<double>(j, "learning_rate");
  if (has("beta1")) t.adam.beta1 = get_as<double>(j, "beta1");
  if (has("beta2")) t.adam.beta2 = get_as<double>(j, "beta2");
  if (has("adam_eps")) t.adam.epsilon = get_as<double>(j, "adam_eps");
  if (has("init")) t.init = init_from(get_as<std::string>(j, "init"));
  if (has("validation_fraction"))
    t.validation_fraction = get_as<double>(j, "validation_fraction");
  if (has("train_seed")) t.seed = get_as<std::uint64_t>(j, "train_seed");
  if (has("feedback_bits")) t.feedback_bits = get_as<int>(j, "feedback_bits");
  if (has("threads")) t.threads = get_as<int>(j, "threads");

  if (has("n_users")) cfg.n_users = get_as<int>(j, "n_users");
  if (has("n_samples")) cfg.n_samples = get_as<int>(j, "n_samples");
  if (has("train_fraction")) cfg.train_fraction = get_as<double>(j, "train_fraction");
  if (j.contains("estimation_nmse_db"))
    cfg.estimation_nmse_db = j.at("estimation_nmse_db").is_null()
                                 ? channel::kPerfectCsi
                                 : get_as<double>(j, "estimation_nmse_db");
  if (has("data_seed")) cfg.data_seed = get_as<std::uint64_t>(j, "data_seed");
  if (has("overhead_sweep")) {
    cfg.overhead_sweep.clear();
    for (const auto& tag : get_as<std::vector<std::string>>(j, "overhead_sweep"))
      cfg.overhead_sweep.push_back(parse_codebook_tag(tag));
  }
  return cfg;
}

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a 1-based line/column.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << "config parse error at line " << line << ", column " << col << ": " << e.what();
    throw ConfigError(os.str());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must have the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }

  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  const auto& valid = valid_config_keys();
  if (!std::binary_search(valid.begin(), valid.end(), parts.front()))
    throw ConfigError("unknown config key '" + parts.front() + "'\nvalid keys: " + join(valid));

  json* node = &j;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    const std::string& p = parts[i];
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        throw ConfigError("override '" + key + "': '" + p + "' is not an array index");
      }
      if (idx >= node->size())
        throw ConfigError("override '" + key + "': index " + p + " out of range");
      node = &(*node)[idx];
    } else {
      if (!node->is_object() && !node->is_null())
        throw ConfigError("override '" + key + "': '" + p + "' addresses a scalar");
      node = &(*node)[p];
    }
    if (last) *node = value;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  json j = to_json(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const bool blank =
        std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
    if (!blank) {
      const json file = parse_config_text(text);
      if (!file.is_object()) throw ConfigError("config file must contain a JSON object");
      // Validate keys against the file itself so errors name the file's keys.
      from_json(file);
      for (const auto& [k, v] : file.items()) j[k] = v;
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig cfg = from_json(j);
  cfg.validate();
  return cfg;
}

void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  json j = to_json(cfg);
  j[kHashKey] = training::config_hash(cfg);
  out << j.dump(2) << "\n";
  spdlog::info("resolved config written to {}", path.string());
}

}  // namespace csiforge::io
