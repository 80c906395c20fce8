#pragma once

// Optimizer, batching and sampling, the training loop, checkpoints, model
// scoring and the hyper-parameter sweep.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interbin/data.hpp"
#include "interbin/evaluation.hpp"
#include "interbin/model.hpp"

namespace interbin::train {

using model::InterBinModel;

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t num_neg = 20;
  std::uint64_t seed = 1;
  std::string precision = "float64";
  data::Task task = data::Task::Classification;
  // Ranking: draw fresh negatives for every training group each epoch.
  bool resample_negatives = true;
  // Off for byte-comparable metrics logs.
  bool record_wall_time = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  bool operator==(const AdamState&) const = default;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update from the accumulated gradients. All
// gradients are checked before any parameter changes. Throws NonFiniteGradient.
void adam_step(std::span<ad::Tensor> params, AdamState& state, double lr, const AdamHyper& hyper = {});

// ---------------------------------------------------------------------------
// Featurized records

class Corpus {
 public:
  Corpus(std::span<const data::FunctionRecord> records, const asmnorm::ArchDictionaries& dicts,
         const model::ModelConfig& config);

  bool contains(const std::string& uid) const { return entries_.contains(uid); }
  // Throws ValidationError for an unknown uid.
  const model::Sequence& sequence(const std::string& uid) const;
  const data::FunctionRecord& record(const std::string& uid) const;
  std::vector<std::string> uids() const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    data::FunctionRecord record;
    model::Sequence sequence;
  };
  std::map<std::string, Entry> entries_;
};

// Index batches covering 0..n-1 once in a uniformly shuffled order.
// Throws EmptyDataset.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

// Candidate uids grouped by architecture, each with its identity.
using NegativePools = std::map<Arch, std::vector<std::pair<std::string, std::string>>>;
// Every uid referenced by the groups of `split`.
NegativePools negative_pools(const Corpus& corpus, const data::PairSet& pairs, std::string_view split);

// `group` with num_neg fresh negatives on the positive's architecture.
// Throws InsufficientNegatives.
data::RankingGroup resample_group(const data::RankingGroup& group, const Corpus& corpus, const NegativePools& pools,
                                  std::size_t num_neg, std::mt19937_64& rng);

// Copies padded to the longest sequence of the batch.
std::vector<model::Sequence> pad_batch(std::span<const model::Sequence* const> seqs,
                                       const asmnorm::ArchDictionaries& dicts, std::size_t max_chars);

// ---------------------------------------------------------------------------
// Scoring and evaluation (no graph is recorded)

std::vector<double> score_pairs(const InterBinModel& model, const Corpus& corpus,
                                std::span<const data::PairExample> pairs);
// Candidate order: positive first, then negatives.
std::vector<eval::ScoredGroup> score_groups(const InterBinModel& model, const Corpus& corpus,
                                            std::span<const data::RankingGroup> groups);

using SequenceScorer = std::function<double(const model::Sequence&, const model::Sequence&)>;
// Edit-distance similarity and char 4-gram Jaccard over normalized texts.
// Texts shorter than four characters score 0 under Jaccard.
double edit_baseline(const model::Sequence& a, const model::Sequence& b);
double jaccard_baseline(const model::Sequence& a, const model::Sequence& b);
std::vector<eval::ScoredGroup> score_groups_with(const SequenceScorer& scorer, const Corpus& corpus,
                                                 std::span<const data::RankingGroup> groups);

eval::EvalReport evaluate(const InterBinModel& model, const Corpus& corpus, const data::PairSet& pairs,
                          std::string_view split, bool with_baselines = true);

// ---------------------------------------------------------------------------
// Checkpoints

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  static constexpr const char* kFormat = "interbin-checkpoint";
  static constexpr int kVersion = 1;

  model::ModelConfig model_config;
  TrainConfig train_config;
  std::string dict_hash;
  std::vector<NamedTensor> params;
  AdamState optimizer;
  std::size_t epoch = 0;
  std::string rng_state;
  std::optional<double> best_metric;
  std::size_t best_epoch = 0;

  nlohmann::json to_json() const;
  // Throws VersionMismatch for a foreign or corrupted document.
  static Checkpoint from_json(const nlohmann::json& doc);
};

Checkpoint snapshot(const InterBinModel& model, const TrainConfig& train_config, const AdamState& optimizer,
                    std::size_t epoch, const std::mt19937_64& rng);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws IoError, VersionMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies parameter values into an existing model. Throws HashMismatch when the
// dictionaries differ and ShapeMismatch when the parameter sets differ.
void restore_parameters(InterBinModel& model, const Checkpoint& ckpt);
std::unique_ptr<InterBinModel> model_from_checkpoint(const Checkpoint& ckpt, const asmnorm::ArchDictionaries& dicts);

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;      // mean per example
  double train_loss_sum = 0.0;  // summed over the epoch
  std::size_t train_examples = 0;
  std::optional<double> val_accuracy;
  std::optional<double> val_auc;
  std::optional<double> val_precision_at_1;
  std::optional<double> val_mrr;
  double wall_time_s = 0.0;

  nlohmann::json to_json(bool with_wall_time) const;
};

struct TrainOptions {
  // When set: metrics.jsonl, best.ckpt.json and last.ckpt.json are written here.
  std::optional<std::filesystem::path> out_dir;
  // Continue from a last.ckpt.json; its configuration must match.
  std::optional<std::filesystem::path> resume_from;
  std::string train_split = "train";
  std::string val_split = "val";
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  Checkpoint best;
  Checkpoint last;
  std::string metrics_jsonl;
};

// Trains `model` in place; on return it holds the last-epoch parameters.
TrainResult train(InterBinModel& model, const Corpus& corpus, const data::PairSet& pairs, const TrainConfig& config,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Sweep

struct SweepVariant {
  std::string axis;
  std::string value;
  model::ModelConfig config;
};

// Axes: rnn, hidden, attention, enhancement, ablation, or all. Each axis
// varies one setting of `base`.
std::vector<SweepVariant> sweep_variants(const model::ModelConfig& base, std::string_view axis);

struct SweepResult {
  SweepVariant variant;
  eval::EvalReport report;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

std::vector<SweepResult> run_sweep(std::span<const SweepVariant> variants, const TrainConfig& config,
                                   const asmnorm::ArchDictionaries& dicts,
                                   std::span<const data::FunctionRecord> records, const data::PairSet& pairs,
                                   std::string_view eval_split);
// Tab-separated summary with one row per variant.
std::string sweep_table(std::span<const SweepResult> results);

}  // namespace interbin::train
