/**
 * @file csiforge.cpp
 * @brief Command-line front end: dataset generation, codebook inspection,
 * training, evaluation, the twin study and report regrouping.
 *
 * Exit codes: 0 success, 2 configuration error, 3 data-format error,
 * 4 numerical failure.
 */
#include "csiforge/io/config.hpp"
#include "csiforge/io/persistence.hpp"
#include "csiforge/io/report.hpp"
#include "csiforge/training.hpp"
#include "csiforge/util.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace csiforge;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "results";
  std::string data;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("-c,--config", c.config, "flat JSON config file");
  cmd->add_option("-s,--set", c.overrides, "override, key=value (repeatable)");
  if (needs_out) cmd->add_option("-o,--out", c.out, "output directory");
}

training::ExperimentConfig resolve(const Common& c) {
  return io::load_config(c.config, c.overrides);
}

channel::Dataset dataset_for(const Common& c, const training::ExperimentConfig& cfg) {
  if (c.data.empty())
    return channel::generate_dataset(cfg.scenario, cfg.n_users, cfg.n_samples, std::nullopt,
                                     cfg.data_seed, cfg.estimation_nmse_db);
  channel::Dataset ds = io::load_dataset(c.data);
  if (ds.n_tx != cfg.scenario.n_tx || ds.n_subcarriers != cfg.scenario.n_subcarriers ||
      ds.n_users != cfg.n_users)
    throw ConfigError("dataset " + c.data + " does not match the config (N_t, K, U)");
  return ds;
}

int gen_data(const Common& c, bool twin) {
  const auto cfg = resolve(c);
  io::DirectoryLock lock(c.out);
  io::echo_config(cfg, c.out);
  std::optional<channel::TwinPerturbation> pert;
  if (twin) pert = cfg.twin;
  const auto ds = channel::generate_dataset(cfg.scenario, cfg.n_users, cfg.n_samples, pert,
                                            cfg.data_seed, cfg.estimation_nmse_db);
  const fs::path path = fs::path(c.out) / (twin ? "twin.csif" : "dataset.csif");
  io::save_dataset(ds, path, cfg.scenario);
  spdlog::info("wrote {} records to {} (config {})", ds.records.size(), path.string(),
               training::config_hash(cfg));
  return 0;
}

int encode_debug(const Common& c, int sample) {
  auto cfg = resolve(c);
  if (sample < 0) throw ConfigError("--sample must be >= 0");
  channel::Dataset ds;
  if (c.data.empty()) {
    cfg.n_samples = sample + 1;
    ds = dataset_for(c, cfg);
  } else {
    ds = dataset_for(c, cfg);
  }
  if (sample >= static_cast<int>(ds.records.size()))
    throw ConfigError("--sample " + std::to_string(sample) + " is beyond the dataset");
  const auto& rec = ds.records[sample];
  const int n_tx = cfg.scenario.n_tx;
  const auto map = codebook::subband_map_for(cfg.codebook, cfg.scenario.n_subcarriers);
  std::cout << "codebook " << codebook::tag(cfg.codebook) << ", "
            << codebook::overhead_bits(cfg.codebook, n_tx) << " bits per user\n";
  for (std::size_t u = 0; u < rec.estimates.size(); ++u) {
    const auto report = codebook::encode(rec.estimates[u], cfg.codebook, map);
    const auto bits = codebook::pack_bits(report, cfg.codebook, n_tx);
    std::cout << "user " << u << "\n" << codebook::describe(report, cfg.codebook, n_tx);
    std::cout << "  bits:";
    for (auto b : bits.bytes) {
      char hex[4];
      std::snprintf(hex, sizeof hex, " %02x", b);
      std::cout << hex;
    }
    std::cout << " (" << bits.n_bits << ")\n";
  }
  return 0;
}

int train_cmd(const Common& c) {
  const auto cfg = resolve(c);
  io::DirectoryLock lock(c.out);
  io::echo_config(cfg, c.out);
  const auto ds = dataset_for(c, cfg);
  const auto split = training::split_dataset(ds, cfg.train_fraction);
  const auto result = training::train(cfg, split.train);
  const fs::path ckpt = fs::path(c.out) / "decoder.csiw";
  io::save_decoder(result.decoder, ckpt);

  const std::string hash = training::config_hash(cfg);
  std::ofstream curve(fs::path(c.out) / "training_curve.csv", std::ios::trunc);
  curve << "epoch,train_loss,validation_rate,seed,config_hash\n";
  char line[160];
  std::snprintf(line, sizeof line, "0,%.17g,,%llu,", result.initial_loss,
                static_cast<unsigned long long>(cfg.train.seed));
  curve << line << hash << "\n";
  for (const auto& e : result.curve) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%llu,", e.epoch, e.train_loss,
                  e.validation_rate, static_cast<unsigned long long>(cfg.train.seed));
    curve << line << hash << "\n";
  }
  spdlog::info("best epoch {}; checkpoint {}", result.best_epoch, ckpt.string());
  return 0;
}

int evaluate_cmd(const Common& c, const std::vector<std::string>& decoders) {
  const auto cfg = resolve(c);
  io::DirectoryLock lock(c.out);
  io::echo_config(cfg, c.out);
  const auto ds = dataset_for(c, cfg);
  const auto split = training::split_dataset(ds, cfg.train_fraction);
  std::vector<training::Decoder> loaded;
  for (const auto& p : decoders) loaded.push_back(io::load_decoder(p));
  const auto report = training::evaluate(loaded, split.test, cfg.overhead_sweep, cfg);
  const auto csv = io::emit_report(report, c.out, "evaluation");
  spdlog::info("wrote {}", csv.string());
  return 0;
}

int twin_cmd(const Common& c) {
  const auto cfg = resolve(c);
  io::DirectoryLock lock(c.out);
  io::echo_config(cfg, c.out);
  const auto report = training::twin_transfer_experiment(cfg);
  const auto csv = io::emit_report(report, c.out, "twin_study");
  spdlog::info("wrote {}", csv.string());
  return 0;
}

int report_cmd(const std::vector<std::string>& inputs, const std::string& out,
               const std::string& name) {
  training::EvalReport merged;
  for (const auto& in : inputs) {
    auto r = io::read_report_csv(in);
    for (auto& row : r.rows) merged.rows.push_back(std::move(row));
  }
  if (merged.rows.empty()) throw DataFormatError("report: inputs contain no rows");
  io::DirectoryLock lock(out);
  const auto csv = io::emit_report(merged, out, name);
  spdlog::info("wrote {}", csv.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  util::tune_allocator();
  CLI::App app{"csiforge: decoder-side refinement of codebook CSI feedback"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

  Common common;
  bool twin = false;
  int sample = 0;
  std::vector<std::string> decoder_paths, inputs;
  std::string report_name = "report";

  auto* gen = app.add_subcommand("gen-data", "generate and save a channel dataset");
  add_common(gen, common);
  gen->add_flag("--twin", twin, "apply the configured twin perturbation");

  auto* dbg = app.add_subcommand("encode-debug", "print codebook reports of one sample");
  add_common(dbg, common, false);
  dbg->add_option("--data", common.data, "dataset file (generated when omitted)");
  dbg->add_option("--sample", sample, "record index");

  auto* tr = app.add_subcommand("train", "train the configured decoder scheme");
  add_common(tr, common);
  tr->add_option("--data", common.data, "dataset file (generated when omitted)");

  auto* ev = app.add_subcommand("evaluate", "evaluate decoders over the overhead sweep");
  add_common(ev, common);
  ev->add_option("--data", common.data, "dataset file (generated when omitted)");
  ev->add_option("-d,--decoder", decoder_paths, "checkpoint file (repeatable)");

  auto* tw = app.add_subcommand("twin-study", "train on twins, test on the target");
  add_common(tw, common);

  auto* rep = app.add_subcommand("report", "merge CSV reports and emit plot data");
  rep->add_option("inputs", inputs, "CSV reports")->required();
  rep->add_option("-o,--out", common.out, "output directory");
  rep->add_option("--name", report_name, "output file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  spdlog::set_level(spdlog::level::from_str(level));
  try {
    if (*gen) return gen_data(common, twin);
    if (*dbg) return encode_debug(common, sample);
    if (*tr) return train_cmd(common);
    if (*ev) return evaluate_cmd(common, decoder_paths);
    if (*tw) return twin_cmd(common);
    if (*rep) return report_cmd(inputs, common.out, report_name);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const DataFormatError& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }
  return 0;
}
