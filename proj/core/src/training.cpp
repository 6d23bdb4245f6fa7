#include "csiforge/training.hpp"

#include "csiforge/io/config.hpp"
#include "csiforge/nn/losses.hpp"
#include "csiforge/util.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace csiforge::training {

using channel::DatasetRecord;
using nn::Tensor;

// ---------------------------------------------------------------- naming

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kEndToEnd: return "e2e";
    case Scheme::kTwoStageRate: return "two-stage-rate";
    case Scheme::kTwoStageRecon: return "two-stage-recon";
    case Scheme::kEncoderDecoder: return "encdec";
    case Scheme::kCodebookOnly: return "codebook-only";
    case Scheme::kGenie: return "genie";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  for (Scheme s : {Scheme::kEndToEnd, Scheme::kTwoStageRate, Scheme::kTwoStageRecon,
                   Scheme::kEncoderDecoder, Scheme::kCodebookOnly, Scheme::kGenie})
    if (to_string(s) == name) return s;
  throw ConfigError("scheme must be one of {e2e, two-stage-rate, two-stage-recon, encdec, "
                    "codebook-only, genie}, got '" + name + "'");
}

bool is_learned(Scheme s) {
  return s == Scheme::kEndToEnd || s == Scheme::kTwoStageRate || s == Scheme::kTwoStageRecon ||
         s == Scheme::kEncoderDecoder;
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  std::vector<std::string> errs;
  const auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errs.emplace_back(e.what());
    }
  };
  collect([&] { scenario.validate(); });
  collect([&] { codebook::validate(codebook, scenario.n_tx); });
  for (const auto& c : overhead_sweep) collect([&] { codebook::validate(c, scenario.n_tx); });
  if (n_users < 1) errs.emplace_back("n_users must be >= 1");
  if (n_samples < 2) errs.emplace_back("n_samples must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    errs.emplace_back("train_fraction must lie in (0, 1)");
  if (!(train.validation_fraction >= 0.0 && train.validation_fraction < 1.0))
    errs.emplace_back("validation_fraction must lie in [0, 1)");
  if (train.epochs < 0) errs.emplace_back("epochs must be >= 0");
  if (train.batch_size < 1) errs.emplace_back("batch_size must be >= 1");
  if (!(train.adam.learning_rate > 0.0)) errs.emplace_back("learning_rate must be > 0");
  if (!(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0))
    errs.emplace_back("beta1 must lie in [0, 1)");
  if (!(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0))
    errs.emplace_back("beta2 must lie in [0, 1)");
  if (!(train.adam.epsilon > 0.0)) errs.emplace_back("adam_eps must be > 0");
  if (train.feedback_bits < 1) errs.emplace_back("feedback_bits must be >= 1");
  if (train.threads < 1) errs.emplace_back("threads must be >= 1");
  if (!(twin.position_error_std >= 0.0)) errs.emplace_back("position_error_m must be >= 0");
  if (std::isnan(estimation_nmse_db) || estimation_nmse_db == HUGE_VAL)
    errs.emplace_back("estimation_nmse_db must be finite or null");
  if (!errs.empty()) {
    std::ostringstream os;
    os << "invalid configuration:";
    for (const auto& e : errs) os << "\n  - " << e;
    throw ConfigError(os.str());
  }
}

ExperimentConfig desk_experiment() {
  ExperimentConfig cfg;
  cfg.scenario = channel::desk_scenario();
  cfg.codebook = codebook::TypeIIConfig{4, 4, 4};
  cfg.n_users = 2;
  cfg.n_samples = 5000;
  return cfg;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return util::git_blob_hash(io::to_json(cfg).dump());
}

// ------------------------------------------------------------ preparation

PreparedSample prepare_sample(const DatasetRecord& record, const codebook::CodebookConfig& cfg,
                              int n_tx) {
  CSIFORGE_EXPECT(!record.users.empty() && record.users.size() == record.estimates.size(),
                  "prepare_sample: record must hold U users with estimates");
  const int n_sc = static_cast<int>(record.users.front().freq.cols());
  const auto map = codebook::subband_map_for(cfg, n_sc);
  PreparedSample s;
  for (std::size_t u = 0; u < record.users.size(); ++u) {
    CSIFORGE_EXPECT(record.users[u].freq.rows() == n_tx, "prepare_sample: N_t mismatch");
    s.truth.push_back(record.users[u].freq);
    s.estimate.push_back(record.estimates[u]);
    // The base station sees only the fed-back bits.
    const auto report = codebook::encode(record.estimates[u], cfg, map);
    const auto bits = codebook::pack_bits(report, cfg, n_tx);
    const auto received = codebook::unpack_bits(bits, cfg, n_tx);
    s.codebook_csi.push_back(codebook::decode_to_subcarriers(received, cfg, n_tx, map));
    s.feedback_bits.push_back(bits.n_bits);
  }
  return s;
}

std::vector<PreparedSample> prepare_samples(std::span<const DatasetRecord> records,
                                            const codebook::CodebookConfig& cfg, int n_tx) {
  std::vector<PreparedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_sample(r, cfg, n_tx));
  return out;
}

// ---------------------------------------------------------------- decoder

std::string Decoder::method() const { return to_string(scheme); }

std::string Decoder::codebook_tag(int) const {
  if (scheme == Scheme::kEncoderDecoder && encdec)
    return "encdec-B" + std::to_string(encdec->arch().feedback_bits);
  return codebook::tag(codebook);
}

int Decoder::overhead(int n_tx) const {
  if (scheme == Scheme::kEncoderDecoder && encdec) return encdec->arch().feedback_bits;
  return codebook::overhead_bits(codebook, n_tx);
}

Decoder codebook_only_decoder(const codebook::CodebookConfig& cfg) {
  Decoder d;
  d.scheme = Scheme::kCodebookOnly;
  d.codebook = cfg;
  return d;
}

Decoder genie_decoder() {
  Decoder d;
  d.scheme = Scheme::kGenie;
  return d;
}

namespace {

nn::RefinerArch refiner_arch(Scheme scheme, int n_users) {
  nn::RefinerArch a;
  a.n_users = scheme == Scheme::kEndToEnd ? n_users : 1;
  return a;
}

nn::EncDecArch encdec_arch(const channel::ScenarioConfig& sc, int bits) {
  nn::EncDecArch a;
  a.n_tx = sc.n_tx;
  a.n_subcarriers = sc.n_subcarriers;
  a.feedback_bits = bits;
  return a;
}

}  // namespace

Decoder untrained_decoder(Scheme scheme, const codebook::CodebookConfig& cfg, int n_users,
                          const channel::ScenarioConfig& scenario, const TrainOptions& opts,
                          nn::InitMode mode) {
  Decoder d;
  d.scheme = scheme;
  d.codebook = cfg;
  if (scheme == Scheme::kEncoderDecoder) {
    nn::EncDecNet<double> net(encdec_arch(scenario, opts.feedback_bits));
    net.init(mode, opts.seed);
    d.encdec = std::move(net);
  } else if (is_learned(scheme)) {
    nn::RefinerNet<double> net(refiner_arch(scheme, n_users));
    net.init(mode, opts.seed);
    d.refiner = std::move(net);
  }
  return d;
}

// --------------------------------------------------------------- pipeline

namespace {

struct Item {
  int sample = 0;
  int user = 0;  ///< ignored by the joint (multi-user) scheme
};

/// Unit average column norm; the encoder-decoder input must not depend on
/// the absolute path loss.
CMat normalized_estimate(const CMat& h) {
  const double n = h.norm();
  if (n == 0.0) return h;
  return h * (std::sqrt(static_cast<double>(h.cols())) / n);
}

template <typename T>
Tensor<T> build_input(Scheme scheme, std::span<const PreparedSample> samples,
                      std::span<const Item> items) {
  const PreparedSample& first = samples[items.front().sample];
  const int n_users = static_cast<int>(first.truth.size());
  const int n_tx = static_cast<int>(first.truth.front().rows());
  const int n_sc = static_cast<int>(first.truth.front().cols());
  const bool joint = scheme == Scheme::kEndToEnd;
  Tensor<T> x(joint ? 2 * n_users : 2, static_cast<int>(items.size()), n_tx, n_sc);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const PreparedSample& s = samples[items[i].sample];
    const int item = static_cast<int>(i);
    if (joint) {
      nn::write_item(x, item, std::span<const CMat>(s.codebook_csi));
    } else if (scheme == Scheme::kEncoderDecoder) {
      const CMat h = normalized_estimate(s.estimate[items[i].user]);
      nn::write_item(x, item, std::span<const CMat>(&h, 1));
    } else {
      nn::write_item(x, item, std::span<const CMat>(&s.codebook_csi[items[i].user], 1));
    }
  }
  return x;
}

std::vector<const CMat*> build_truths(Scheme scheme, std::span<const PreparedSample> samples,
                                      std::span<const Item> items) {
  std::vector<const CMat*> t;
  for (const auto& it : items) {
    const PreparedSample& s = samples[it.sample];
    if (scheme == Scheme::kEndToEnd)
      for (const auto& h : s.truth) t.push_back(&h);
    else
      t.push_back(&s.truth[it.user]);
  }
  return t;
}

template <typename T>
nn::LossResult<T> compute_loss(Scheme scheme, const Tensor<T>& out,
                               std::span<const CMat* const> truths, double power,
                               double noise_power) {
  switch (scheme) {
    case Scheme::kEndToEnd: return nn::loss_e2e(out, truths, power, noise_power);
    case Scheme::kTwoStageRate:
    case Scheme::kEncoderDecoder: return nn::loss_ts_rate(out, truths, power, noise_power);
    case Scheme::kTwoStageRecon: return nn::loss_ts_recon(out, truths);
    default: break;
  }
  throw ContractViolation("compute_loss: scheme " + to_string(scheme) + " is not trainable");
}

std::vector<Item> items_for(Scheme scheme, std::span<const int> samples,
                            std::span<const PreparedSample> prepared) {
  std::vector<Item> items;
  for (int s : samples) {
    if (scheme == Scheme::kEndToEnd) {
      items.push_back({s, 0});
    } else {
      const int n_users = static_cast<int>(prepared[s].truth.size());
      for (int u = 0; u < n_users; ++u) items.push_back({s, u});
    }
  }
  return items;
}

/// Rates of samples [begin, end).
void rates_range(std::span<const PreparedSample> samples, const Decoder& decoder, double power,
                 double noise_power, std::size_t begin, std::size_t end, double* out) {
  constexpr std::size_t kChunk = 32;
  switch (decoder.scheme) {
    case Scheme::kGenie:
      for (std::size_t i = begin; i < end; ++i)
        out[i] = precoding::genie_zf_rate(samples[i].truth, power, noise_power);
      return;
    case Scheme::kCodebookOnly:
      for (std::size_t i = begin; i < end; ++i) {
        const auto f = precoding::zero_forcing(samples[i].codebook_csi, power);
        out[i] = precoding::sum_rate(samples[i].truth, f, noise_power);
      }
      return;
    default: break;
  }
  CSIFORGE_EXPECT(decoder.refiner || decoder.encdec, "pipeline: learned decoder has no network");
  std::optional<nn::RefinerNet<double>> refiner = decoder.refiner;
  std::optional<nn::EncDecNet<double>> encdec = decoder.encdec;
  std::vector<int> idx;
  for (std::size_t c0 = begin; c0 < end; c0 += kChunk) {
    const std::size_t c1 = std::min(end, c0 + kChunk);
    idx.resize(c1 - c0);
    std::iota(idx.begin(), idx.end(), static_cast<int>(c0));
    const auto items = items_for(decoder.scheme, idx, samples);
    const Tensor<double> x = build_input<double>(decoder.scheme, samples, items);
    const Tensor<double> y = encdec ? encdec->forward(x) : refiner->forward(x);
    if (decoder.scheme == Scheme::kEndToEnd) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto f = nn::output_to_precoders(y, static_cast<int>(i), power);
        out[items[i].sample] = precoding::sum_rate(samples[items[i].sample].truth, f, noise_power);
      }
      continue;
    }
    std::size_t i = 0;
    for (std::size_t s = c0; s < c1; ++s) {
      std::vector<CMat> refined;
      for (std::size_t u = 0; u < samples[s].truth.size(); ++u, ++i)
        refined.push_back(nn::read_item(y, static_cast<int>(i), 0));
      const auto f = precoding::zero_forcing(refined, power);
      out[s] = precoding::sum_rate(samples[s].truth, f, noise_power);
    }
  }
}

template <typename E>
[[noreturn]] void rethrow_with_context(const E& e, const std::string& context) {
  throw E(context + ": " + e.what());
}

}  // namespace

std::vector<double> pipeline_rates(std::span<const PreparedSample> samples,
                                   const Decoder& decoder, double power, double noise_power) {
  std::vector<double> rates(samples.size(), 0.0);
  if (samples.empty()) return rates;
  const int workers =
      std::max(1, std::min<int>(util::thread_budget(), static_cast<int>(samples.size() / 32)));
  if (workers == 1) {
    rates_range(samples, decoder, power, noise_power, 0, samples.size(), rates.data());
    return rates;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (samples.size() + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t b = w * per, e = std::min(samples.size(), b + per);
    pool.emplace_back([&, w, b, e] {
      try {
        if (b < e) rates_range(samples, decoder, power, noise_power, b, e, rates.data());
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rates;
}

double run_pipeline_sample(const DatasetRecord& record, const Decoder& decoder, double power,
                           double noise_power) {
  const std::string ctx = "sample " + std::to_string(record.sample_index);
  try {
    const int n_tx = static_cast<int>(record.users.at(0).freq.rows());
    const PreparedSample s = prepare_sample(record, decoder.codebook, n_tx);
    return pipeline_rates(std::span(&s, 1), decoder, power, noise_power).front();
  } catch (const NumericalError& e) {
    rethrow_with_context(e, ctx);
  } catch (const DataFormatError& e) {
    rethrow_with_context(e, ctx);
  } catch (const ConfigError& e) {
    rethrow_with_context(e, ctx);
  } catch (const ContractViolation& e) {
    rethrow_with_context(e, ctx);
  }
}

// --------------------------------------------------------------- training

namespace {

void shuffle(std::vector<Item>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

template <typename T>
double max_abs_param(const nn::ParamList<T>& params) {
  double m = 0.0;
  for (const auto* p : params)
    for (T v : p->value) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename Net>
Decoder to_decoder(const ExperimentConfig& cfg, const Net& net) {
  Decoder d;
  d.scheme = cfg.scheme;
  d.codebook = cfg.codebook;
  if constexpr (std::is_same_v<Net, nn::EncDecNet<float>>)
    d.encdec = net.template cast<double>();
  else
    d.refiner = net.template cast<double>();
  return d;
}

template <typename Net>
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, std::span<const PreparedSample> prepared, Net net)
      : cfg_(cfg), prepared_(prepared), net_(std::move(net)),
        power_(cfg.scenario.tx_power()), noise_(cfg.scenario.noise_power()) {
    workers_ = std::max(1, std::min(cfg.train.threads, util::thread_budget()));
    for (int w = 1; w < workers_; ++w) replicas_.push_back(net_);
  }

  /// Mean loss over `items`, forward only.
  double mean_loss(std::span<const Item> items) {
    double total = 0.0;
    const std::size_t bs = cfg_.train.batch_size;
    for (std::size_t b = 0; b < items.size(); b += bs) {
      const auto batch = items.subspan(b, std::min(bs, items.size() - b));
      total += batch_loss(net_, batch, 1.0, false) * batch.size();
    }
    return total / items.size();
  }

  /// One minibatch update; returns the batch loss.
  double step(std::span<const Item> batch, nn::Adam<float>& adam, int epoch, int index) {
    auto params = net_.params();
    nn::zero_grads(params);
    double loss = 0.0;
    if (workers_ == 1 || batch.size() < static_cast<std::size_t>(workers_)) {
      loss = batch_loss(net_, batch, 1.0, true);
    } else {
      loss = parallel_loss(batch, params);
    }
    if (!std::isfinite(loss)) {
      spdlog::error("non-finite training loss: scheme {} epoch {} batch {} loss {} "
                    "max|param| {}",
                    to_string(cfg_.scheme), epoch, index, loss, max_abs_param(params));
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(index) + " (loss " + std::to_string(loss) + ")");
    }
    adam.step(params);
    return loss;
  }

  Net& net() { return net_; }

 private:
  double batch_loss(Net& net, std::span<const Item> batch, double scale, bool backward) {
    const Tensor<float> x = build_input<float>(cfg_.scheme, prepared_, batch);
    const auto truths = build_truths(cfg_.scheme, prepared_, batch);
    const Tensor<float> y = net.forward(x);
    auto loss = compute_loss(cfg_.scheme, y, std::span<const CMat* const>(truths), power_, noise_);
    if (backward) {
      if (scale != 1.0)
        for (auto& g : loss.grad.data) g = static_cast<float>(g * scale);
      net.backward(loss.grad);
    }
    return loss.value;
  }

  /// Splits the batch into contiguous worker chunks; gradients are summed
  /// in worker order so the result depends only on the worker count.
  double parallel_loss(std::span<const Item> batch, const nn::ParamList<float>& params) {
    std::vector<double> losses(workers_, 0.0);
    std::vector<std::span<const Item>> chunks;
    const std::size_t n = batch.size();
    for (int w = 0; w < workers_; ++w) {
      const std::size_t b = n * w / workers_, e = n * (w + 1) / workers_;
      chunks.push_back(batch.subspan(b, e - b));
    }
    for (auto& r : replicas_) {
      auto rp = r.params();
      nn::copy_param_values(params, rp);
      nn::zero_grads(rp);
    }
    std::vector<std::exception_ptr> errors(workers_);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers_; ++w) {
      pool.emplace_back([&, w] {
        try {
          Net& net = w == 0 ? net_ : replicas_[w - 1];
          const double frac = static_cast<double>(chunks[w].size()) / n;
          losses[w] = batch_loss(net, chunks[w], frac, true) * frac;
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (auto& r : replicas_) {
      const auto rp = r.params();
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i]->size(); ++j) params[i]->grad[j] += rp[i]->grad[j];
    }
    double total = 0.0;
    for (double l : losses) total += l;
    return total;
  }

  const ExperimentConfig& cfg_;
  std::span<const PreparedSample> prepared_;
  Net net_;
  std::vector<Net> replicas_;
  int workers_ = 1;
  double power_, noise_;
};

template <typename Net>
TrainResult train_net(const ExperimentConfig& cfg, std::span<const PreparedSample> prepared,
                      Net net) {
  const auto& opts = cfg.train;
  const int n = static_cast<int>(prepared.size());

  // Validation records carved by a seeded permutation.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  {
    std::mt19937_64 rng(child_seed(opts.seed, 0, 0x76616c));
    for (int i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % static_cast<unsigned>(i)]);
  }
  int n_val = static_cast<int>(std::floor(n * opts.validation_fraction));
  if (opts.validation_fraction > 0.0 && n_val == 0 && n >= 2) n_val = 1;
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<PreparedSample> val_samples;
  for (int i : val_idx) val_samples.push_back(prepared[i]);

  std::vector<Item> items = items_for(cfg.scheme, train_idx, prepared);
  CSIFORGE_EXPECT(!items.empty(), "train: no training samples after the validation split");

  Trainer<Net> trainer(cfg, prepared, std::move(net));
  TrainResult result;
  result.initial_loss = trainer.mean_loss(items);
  result.decoder = to_decoder(cfg, trainer.net());
  spdlog::info("train {}: {} items, {} validation records, initial loss {:.6g}",
               to_string(cfg.scheme), items.size(), val_samples.size(), result.initial_loss);

  const double power = cfg.scenario.tx_power(), noise = cfg.scenario.noise_power();
  double best = -std::numeric_limits<double>::infinity();
  nn::Adam<float> adam(trainer.net().params(), opts.adam);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    shuffle(items, child_seed(opts.seed, static_cast<std::uint64_t>(epoch), 0x657063));
    double total = 0.0;
    int index = 0;
    for (std::size_t b = 0; b < items.size(); b += opts.batch_size, ++index) {
      const auto batch =
          std::span<const Item>(items).subspan(b, std::min<std::size_t>(opts.batch_size,
                                                                        items.size() - b));
      total += trainer.step(batch, adam, epoch, index) * batch.size();
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / items.size();
    Decoder current = to_decoder(cfg, trainer.net());
    if (!val_samples.empty()) {
      const auto rates = pipeline_rates(val_samples, current, power, noise);
      log.validation_rate = std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
    }
    result.curve.push_back(log);
    spdlog::info("epoch {}/{} loss {:.6g} validation sum rate {:.6g}", epoch, opts.epochs,
                 log.train_loss, log.validation_rate);
    const bool better = val_samples.empty() || log.validation_rate > best;
    if (better) {
      best = log.validation_rate;
      result.best_epoch = epoch;
      result.decoder = std::move(current);
    }
  }
  return result;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, std::span<const DatasetRecord> records) {
  cfg.validate();
  if (!is_learned(cfg.scheme))
    throw ConfigError("train: scheme " + to_string(cfg.scheme) + " has nothing to train");
  if (records.empty()) throw ConfigError("train: empty training set");
  for (const auto& r : records)
    if (static_cast<int>(r.users.size()) != cfg.n_users)
      throw ConfigError("train: dataset has " + std::to_string(r.users.size()) +
                        " users per record, config expects " + std::to_string(cfg.n_users));
  const auto prepared = prepare_samples(records, cfg.codebook, cfg.scenario.n_tx);
  if (cfg.scheme == Scheme::kEncoderDecoder) {
    nn::EncDecNet<float> net(encdec_arch(cfg.scenario, cfg.train.feedback_bits));
    net.init(cfg.train.init, cfg.train.seed);
    return train_net(cfg, prepared, std::move(net));
  }
  nn::RefinerNet<float> net(refiner_arch(cfg.scheme, cfg.n_users));
  net.init(cfg.train.init, cfg.train.seed);
  return train_net(cfg, prepared, std::move(net));
}

// ------------------------------------------------------------- evaluation

const EvalRow* EvalReport::find(const std::string& method, const std::string& codebook) const {
  for (const auto& r : rows)
    if (r.method == method && (codebook.empty() || r.codebook == codebook)) return &r;
  return nullptr;
}

EvalRow summarize(std::string method, std::string codebook, int overhead_bits,
                  std::vector<double> per_sample, std::uint64_t seed, std::string hash) {
  if (per_sample.empty()) throw ConfigError("summarize: no samples");
  EvalRow r;
  r.method = std::move(method);
  r.codebook = std::move(codebook);
  r.overhead_bits = overhead_bits;
  r.n = static_cast<int>(per_sample.size());
  double sum = 0.0;
  for (double v : per_sample) sum += v;
  r.mean_rate = sum / r.n;
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : per_sample) ss += (v - r.mean_rate) * (v - r.mean_rate);
    r.ci95 = 1.96 * std::sqrt(ss / (r.n - 1)) / std::sqrt(static_cast<double>(r.n));
  }
  r.seed = seed;
  r.config_hash = std::move(hash);
  r.per_sample = std::move(per_sample);
  for (double v : r.per_sample)
    if (!std::isfinite(v)) throw NumericalError("summarize: non-finite rate in " + r.method);
  return r;
}

EvalReport evaluate(std::span<const Decoder> decoders, std::span<const DatasetRecord> test_records,
                    std::span<const codebook::CodebookConfig> sweep,
                    const ExperimentConfig& cfg) {
  if (test_records.empty()) throw ConfigError("evaluate: empty test set");
  const int n_tx = cfg.scenario.n_tx;
  const double power = cfg.scenario.tx_power(), noise = cfg.scenario.noise_power();
  const std::string hash = config_hash(cfg);
  const std::uint64_t seed = cfg.train.seed;
  std::vector<codebook::CodebookConfig> points(sweep.begin(), sweep.end());
  if (points.empty()) points.push_back(cfg.codebook);

  EvalReport report;
  std::optional<std::vector<double>> genie;
  std::vector<PreparedSample> prepared;
  for (const auto& cb : points) {
    const std::string tag = codebook::tag(cb);
    const int bits = codebook::overhead_bits(cb, n_tx);
    prepared = prepare_samples(test_records, cb, n_tx);
    if (!genie) genie = pipeline_rates(prepared, genie_decoder(), power, noise);
    report.rows.push_back(summarize(to_string(Scheme::kCodebookOnly), tag, bits,
                                    pipeline_rates(prepared, codebook_only_decoder(cb), power,
                                                   noise),
                                    seed, hash));
    for (const auto& d : decoders) {
      if (d.scheme == Scheme::kEncoderDecoder || d.scheme == Scheme::kGenie ||
          d.scheme == Scheme::kCodebookOnly || codebook::tag(d.codebook) != tag)
        continue;
      report.rows.push_back(summarize(d.method(), tag, bits,
                                      pipeline_rates(prepared, d, power, noise), seed, hash));
    }
    report.rows.push_back(summarize(to_string(Scheme::kGenie), tag, bits, *genie, seed, hash));
  }
  for (const auto& d : decoders) {
    if (d.scheme != Scheme::kEncoderDecoder) continue;
    report.rows.push_back(summarize(d.method(), d.codebook_tag(n_tx), d.overhead(n_tx),
                                    pipeline_rates(prepared, d, power, noise), seed, hash));
  }
  return report;
}

Split split_dataset(const channel::Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  const std::size_t n = ds.records.size();
  const auto n_train = static_cast<std::size_t>(std::llround(n * train_fraction));
  std::span<const DatasetRecord> all(ds.records);
  return {all.subspan(0, n_train), all.subspan(n_train)};
}

EvalReport twin_transfer_experiment(const ExperimentConfig& cfg,
                                    const std::optional<Decoder>& target_decoder) {
  cfg.validate();
  ExperimentConfig c = cfg;
  c.scheme = Scheme::kTwoStageRate;
  const auto target = channel::generate_dataset(c.scenario, c.n_users, c.n_samples, std::nullopt,
                                                c.data_seed, c.estimation_nmse_db);
  const Split target_split = split_dataset(target, c.train_fraction);
  const auto test = prepare_samples(target_split.test, c.codebook, c.scenario.n_tx);

  const double power = c.scenario.tx_power(), noise = c.scenario.noise_power();
  const std::string hash = config_hash(cfg);
  const std::string tag = codebook::tag(c.codebook);
  const int bits = codebook::overhead_bits(c.codebook, c.scenario.n_tx);
  EvalReport report;
  const auto add = [&](const std::string& method, const Decoder& d) {
    report.rows.push_back(
        summarize(method, tag, bits, pipeline_rates(test, d, power, noise), c.train.seed, hash));
  };

  add(kTargetTrained, target_decoder ? *target_decoder : train(c, target_split.train).decoder);
  const channel::TwinPerturbation twins[2] = {
      {c.twin.drop_foliage, 0.0, c.twin.rng_seed},
      {c.twin.drop_foliage, c.twin.position_error_std, c.twin.rng_seed}};
  const std::string names[2] = {kTwinFoliage, kTwinFoliagePosition};
  for (int t = 0; t < 2; ++t) {
    const auto twin = channel::generate_dataset(c.scenario, c.n_users, c.n_samples, twins[t],
                                                c.data_seed, c.estimation_nmse_db);
    const Split twin_split = split_dataset(twin, c.train_fraction);
    add(names[t], train(c, twin_split.train).decoder);
  }
  add(to_string(Scheme::kCodebookOnly), codebook_only_decoder(c.codebook));
  add(to_string(Scheme::kGenie), genie_decoder());
  return report;
}

}  // namespace csiforge::training
