/**
 * @file training.hpp
 * @brief Experiment orchestration: the compress -> decode -> refine ->
 * precode pipeline, decoder training for every scheme, evaluation sweeps
 * and the twin-to-target transfer study.
 *
 * Networks are trained in single precision and evaluated in double
 * precision; a trained decoder always holds double-precision parameters.
 */
#pragma once

#include "csiforge/channel.hpp"
#include "csiforge/codebook.hpp"
#include "csiforge/nn/adam.hpp"
#include "csiforge/nn/models.hpp"
#include "csiforge/precoding.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csiforge::training {

enum class Scheme : std::uint8_t {
  kEndToEnd,
  kTwoStageRate,
  kTwoStageRecon,
  kEncoderDecoder,
  kCodebookOnly,
  kGenie,
};

std::string to_string(Scheme s);
/// Accepts the names produced by to_string(); throws ConfigError otherwise.
Scheme scheme_from_string(const std::string& name);
bool is_learned(Scheme s);

struct TrainOptions {
  int epochs = 30;
  int batch_size = 32;
  nn::AdamOptions adam{};
  nn::InitMode init = nn::InitMode::kResidualZero;
  double validation_fraction = 0.1;
  std::uint64_t seed = 7;
  int feedback_bits = 64;  ///< encoder-decoder benchmark only
  int threads = 1;         ///< data-parallel workers
};

struct ExperimentConfig {
  channel::ScenarioConfig scenario{};
  /// Imperfections of the digital twin in twin-study; foliage removal is
  /// always studied, position error adds a second twin.
  channel::TwinPerturbation twin{true, 5.0, 11};
  codebook::CodebookConfig codebook = codebook::TypeIIConfig{};
  Scheme scheme = Scheme::kTwoStageRate;
  TrainOptions train{};
  int n_users = 2;
  int n_samples = 5000;
  double train_fraction = 0.8;
  double estimation_nmse_db = channel::kPerfectCsi;
  std::uint64_t data_seed = 1;
  std::vector<codebook::CodebookConfig> overhead_sweep;

  /// Throws ConfigError listing every violated invariant.
  void validate() const;
};

/// Desk-scale experiment: N_t=16, K=48, D=16, U=2, 5000 samples (4000
/// train / 1000 test), Type-II L=4 with 4 subbands.
ExperimentConfig desk_experiment();

/// Git-style SHA-1 of the canonical JSON of the resolved config.
std::string config_hash(const ExperimentConfig& cfg);

/// Codebook reconstruction of every user of a record.
struct PreparedSample {
  std::vector<CMat> truth;          ///< H_u, N_t x K
  std::vector<CMat> estimate;       ///< estimated H_u
  std::vector<CMat> codebook_csi;   ///< subcarrier-level W_u, N_t x K
  std::vector<int> feedback_bits;   ///< packed report size per user
};

PreparedSample prepare_sample(const channel::DatasetRecord& record,
                              const codebook::CodebookConfig& cfg, int n_tx);
std::vector<PreparedSample> prepare_samples(std::span<const channel::DatasetRecord> records,
                                            const codebook::CodebookConfig& cfg, int n_tx);

/// A trained (or untrained) BS-side decoder.
struct Decoder {
  Scheme scheme = Scheme::kCodebookOnly;
  codebook::CodebookConfig codebook = codebook::TypeIConfig{};
  std::optional<nn::RefinerNet<double>> refiner;  ///< E2E and two-stage
  std::optional<nn::EncDecNet<double>> encdec;    ///< encoder-decoder benchmark

  /// Row label used in reports.
  std::string method() const;
  /// Codebook label ("encdec-B64" for the learned benchmark).
  std::string codebook_tag(int n_tx) const;
  int overhead(int n_tx) const;
};

Decoder codebook_only_decoder(const codebook::CodebookConfig& cfg);
Decoder genie_decoder();
/// A decoder whose network is initialized with `mode` (no training).
Decoder untrained_decoder(Scheme scheme, const codebook::CodebookConfig& cfg, int n_users,
                          const channel::ScenarioConfig& scenario, const TrainOptions& opts,
                          nn::InitMode mode);

/// Sum rate of one record: estimate -> encode per user -> decode -> expand
/// to subcarriers -> refine per scheme -> precode -> rate on TRUE channels.
double run_pipeline_sample(const channel::DatasetRecord& record, const Decoder& decoder,
                           double power, double noise_power);

/// Batched equivalent of run_pipeline_sample over prepared samples.
std::vector<double> pipeline_rates(std::span<const PreparedSample> samples,
                                   const Decoder& decoder, double power, double noise_power);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_rate = 0.0;
};

struct TrainResult {
  Decoder decoder;
  double initial_loss = 0.0;  ///< training loss of the initialized model
  std::vector<EpochLog> curve;
  int best_epoch = 0;         ///< 0 when no epoch ran
};

/// Minibatch Adam on the training records. Two-stage and encoder-decoder
/// schemes train on per-user samples. The returned decoder is the epoch
/// with the highest validation sum rate.
TrainResult train(const ExperimentConfig& cfg, std::span<const channel::DatasetRecord> records);

struct EvalRow {
  std::string method;
  std::string codebook;
  int overhead_bits = 0;
  double mean_rate = 0.0;
  double ci95 = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<double> per_sample;  ///< not serialized
};

struct EvalReport {
  std::vector<EvalRow> rows;
  const EvalRow* find(const std::string& method, const std::string& codebook = "") const;
};

EvalRow summarize(std::string method, std::string codebook, int overhead_bits,
                  std::vector<double> per_sample, std::uint64_t seed, std::string hash);

/// Rows for codebook-only, genie and every decoder whose codebook is in
/// `sweep` (the learned benchmark is always evaluated).
EvalReport evaluate(std::span<const Decoder> decoders,
                    std::span<const channel::DatasetRecord> test_records,
                    std::span<const codebook::CodebookConfig> sweep,
                    const ExperimentConfig& cfg);

/// Train/test split of a generated dataset (first train_fraction records
/// train).
struct Split {
  std::span<const channel::DatasetRecord> train;
  std::span<const channel::DatasetRecord> test;
};
Split split_dataset(const channel::Dataset& ds, double train_fraction);

/// Trains two-stage rate decoders on the target data and on two twins
/// (cfg.twin without position error; cfg.twin as given) and evaluates all
/// of them on target test data. A supplied `target_decoder` must come from
/// train() on the same config and target data; it is used instead of
/// retraining.
EvalReport twin_transfer_experiment(const ExperimentConfig& cfg,
                                    const std::optional<Decoder>& target_decoder = std::nullopt);

inline const std::string kTargetTrained = "target-trained";
inline const std::string kTwinFoliage = "twin-foliage";
inline const std::string kTwinFoliagePosition = "twin-foliage-position";

}  // namespace csiforge::training
