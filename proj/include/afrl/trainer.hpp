#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "afrl/aggregation.hpp"
#include "afrl/alignment.hpp"
#include "afrl/base_recommender.hpp"
#include "afrl/data.hpp"
#include "afrl/nn.hpp"

namespace afrl {

struct TrainingConfig {
  double beta = 0.1;
  double lambda = 0.1;
  double learning_rate = 5e-5;
  int batch_size = 256;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::uint64_t seed = 2024;
  int encoder_layers = 6;
  int classifier_layers = 2;
  AdversaryMode adversary = AdversaryMode::negative_log_likelihood;
  bool per_user_requirement = false;  // one requirement per sample instead of per batch
  bool end_to_end = false;            // let the recommendation loss reach E_i and F
  AggregatorVariant variant = AggregatorVariant::full;
  int eval_negatives = 99;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

/// Everything a config file can set. Keys outside a section belong to [afrl].
struct ExperimentConfig {
  SplitOptions split;
  BaseTrainConfig base;
  TrainingConfig afrl;
  int probe_max_epochs = 300;
  int probe_patience = 20;
  double probe_learning_rate = 1e-3;
};

/// `key = value` lines, `#` comments and `[data]`, `[base]`, `[afrl]`, `[probe]`
/// sections. Unknown keys and malformed values throw UsageError naming the line.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig defaults = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig defaults = {});

struct AfrlModel {
  AlignmentNetworks nets;
  Mlp aggregator;  // G
  std::vector<std::string> attribute_names;
  std::vector<std::string> short_names;
  std::vector<int> cardinalities;
  TrainingConfig config;
  std::string base_digest;  // EmbeddingSpace::digest() of the frozen base model

  int dim() const { return nets.dim(); }
  int num_attributes() const { return nets.num_attributes(); }
  std::string digest() const;
};

AfrlModel init_model(const EmbeddingSpace& space, const AttributeTable& attributes, const TrainingConfig& config,
                     Rng& rng);

/// Uniform over the 2^M flag vectors.
FairnessRequirement sample_requirement(int num_attributes, Rng& rng);

/// u* for every column of `users` under one requirement, using the model's variant.
Matrix fair_embeddings(const AfrlModel& model, const Matrix& users, const FairnessRequirement& req);

struct EpochLog {
  int epoch = 0;
  double alignment = 0.0;       // mean encoder objective, summed over attributes
  double classifier = 0.0;      // mean classifier cross-entropy, summed over attributes
  double collaborative = 0.0;   // F objective
  double discriminator = 0.0;   // D objective
  double recommendation = 0.0;  // G objective
  double valid_ndcg_at_10 = 0.0;
  double valid_hit_at_10 = 0.0;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  /// Called once per parameter update with "C0", "E1", "D0", "F", "G" and so on.
  std::function<void(std::string_view)> on_update;
  std::function<void(const EpochLog&)> on_epoch;
  /// When set, the last-good model is written here before a TrainingError propagates.
  std::filesystem::path failure_checkpoint;
};

/// Complete resumable state of a training run.
struct TrainerState {
  AfrlModel model;
  std::vector<AlignmentOptimizers> alignment_opts;
  Adam collaborative_opt;
  std::vector<Adam> discriminator_opts;
  Adam aggregator_opt;
  Rng rng;
  int epoch = 0;
  double best_score = -1.0;
  AfrlModel best;
  int since_best = 0;
  bool stopped = false;
  std::vector<EpochLog> history;
};

/// Validates shapes and builds fresh networks and optimizers.
TrainerState init_trainer(const InteractionDataset& data, const EmbeddingSpace& space, const TrainingConfig& config);

/// Runs up to `epochs` more epochs (bounded by max_epochs and early stopping).
void train_epochs(TrainerState& state, const InteractionDataset& data, const EmbeddingSpace& space, int epochs,
                  const TrainHooks& hooks = {});

/// Full run; returns the model with the best validation score, or the
/// initial model when no epoch ran.
AfrlModel train_afrl(const InteractionDataset& data, const EmbeddingSpace& space, const TrainingConfig& config,
                     const TrainHooks& hooks = {});

/// Validation N@10 averaged over all 2^M requirements.
double validation_score(const AfrlModel& model, const EmbeddingSpace& space, const InteractionDataset& data,
                        double* hit = nullptr);

void save_checkpoint(const AfrlModel& model, const std::filesystem::path& path);
AfrlModel load_checkpoint(const std::filesystem::path& path);

void save_trainer_state(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_trainer_state(const std::filesystem::path& path);

}  // namespace afrl
