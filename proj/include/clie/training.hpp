#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clie/autodiff.hpp"
#include "clie/corpus.hpp"
#include "clie/eval.hpp"
#include "clie/halo.hpp"
#include "clie/model.hpp"

namespace clie::training {

enum class OptimizerKind { Sgd, Adam };

struct ConfigKey {
  std::string name;
  std::string help;
};

// Flat key = value configuration. Every key doubles as a CLI flag.
struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::uint64_t halo_seed = 2;
  int dev_eval_every = 1;
  int patience = 5;
  int min_count = 1;
  std::size_t hidden = 64;
  std::size_t embed = 32;
  double init_scale = 0.08;
  std::size_t max_decode_len = 50;
  halo::HaloConfig halo;
  // bytag | singleton | custom(<path>)
  std::string partition = "bytag";

  static const std::vector<ConfigKey>& keys();

  // Throws ConfigError on unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  void validate() const;
};

// Lines of "key = value"; '#' starts a comment.
void load_config(std::istream& is, TrainConfig& config);
void load_config_file(const std::filesystem::path& path, TrainConfig& config);

// Scales every gradient by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns g (before clipping).
double clip_gradients(std::span<const ad::Var> params, double max_norm);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::span<const ad::Var> params);

  // Applies one update from the parameters' accumulated gradients.
  void step(std::span<const ad::Var> params);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  std::vector<ad::Array> m_;
  std::vector<ad::Array> v_;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  halo::LossBreakdown loss;  // mean per target token
  std::optional<eval::EvalResult> dev;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_dev_bleu = -1.0;
  bool stopped_early = false;

  // Wall-clock times are omitted unless requested, so reports of identical
  // runs compare byte-for-byte.
  void write(std::ostream& os, bool with_timing = false) const;
};

struct TrainResult {
  TrainReport report;
  model::ModelParams best;
};

model::ModelParams init_model(const corpus::TaggedVocabulary& vocab, const TrainConfig& config,
                              std::mt19937_64& rng);

corpus::ClassPartition make_partition(const corpus::TaggedVocabulary& vocab, const std::string& spec);

// Mean per-token total over a batch, as one differentiable scalar per example
// (each scaled by 1/batch tokens). Returns the summed breakdown.
halo::LossBreakdown accumulate_batch_gradients(const model::ModelParams& params,
                                               std::span<const corpus::ParallelExample* const> batch,
                                               const corpus::ClassPartition& partition,
                                               const halo::HaloConfig& halo_config, halo::Rng& halo_rng,
                                               std::size_t* tokens = nullptr);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Training examples must be encoded with `vocab` (ids in range); dev pairs
// stay raw so metrics see the original reference tokens. Keeps the parameters
// with the best dev BLEU (ties go to the higher F1-Pred + F1-Arg) and stops
// after `patience` evaluations without such an improvement.
TrainResult train(const corpus::TaggedVocabulary& vocab, std::span<const corpus::ParallelExample> train_set,
                  std::span<const corpus::RawPair> dev_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace clie::training
