#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "afrl/data.hpp"
#include "afrl/nn.hpp"

namespace afrl {

/// Frozen output of the base recommender. Column u of `users` is user u's
/// embedding; column v of `items` is item v's.
struct EmbeddingSpace {
  Matrix users;  // d x num_users
  Matrix items;  // d x num_items

  int dim() const { return static_cast<int>(users.rows()); }
  int num_users() const { return static_cast<int>(users.cols()); }
  int num_items() const { return static_cast<int>(items.cols()); }

  std::string digest() const;
};

struct BprTriple {
  int user = 0;
  int pos_item = 0;
  int neg_item = 0;
};

/// Inner-product scorer R(u, v).
double score(const Eigen::Ref<const Vector>& user, const Eigen::Ref<const Vector>& item);

/// Uniform draws from the items a user never rated.
class NegativeSampler {
 public:
  explicit NegativeSampler(const InteractionDataset& data) : data_(&data) {}

  int sample(int user, Rng& rng) const;

  /// `count` distinct non-rated items, or an empty vector when fewer exist.
  std::vector<int> sample_distinct(int user, int count, Rng& rng) const;

  int available(int user) const;

 private:
  const InteractionDataset* data_;
};

struct EmbeddingGradient {
  Matrix users;
  Matrix items;
};

/// Mean of -ln sigmoid(R(u,v+) - R(u,v-)) over the triples. Gradients are
/// written into `grad` (resized and zeroed) when non-null.
double bpr_loss(const EmbeddingSpace& space, std::span<const BprTriple> triples, EmbeddingGradient* grad);

struct BaseTrainConfig {
  int dim = 64;
  double learning_rate = 5e-5;
  int batch_size = 256;
  int max_epochs = 200;
  int early_stop_patience = 10;
  double init_std = 0.1;
  int eval_negatives = 99;
  std::uint64_t seed = 2024;

  nlohmann::json to_json() const;
  static BaseTrainConfig from_json(const nlohmann::json& j);
};

struct BaseEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double valid_ndcg_at_10 = 0.0;
  double valid_hit_at_10 = 0.0;
};

struct BaseTrainResult {
  EmbeddingSpace space;
  std::vector<BaseEpochLog> history;
  int best_epoch = 0;
};

EmbeddingSpace init_embeddings(int num_users, int num_items, int dim, double init_std, Rng& rng);

/// BPR matrix factorisation with Adam and early stopping on validation NDCG@10.
BaseTrainResult train_base(const InteractionDataset& data, const BaseTrainConfig& config,
                           const std::function<void(const BaseEpochLog&)>& on_epoch = {});

void save_embeddings(const EmbeddingSpace& space, const nlohmann::json& config_echo,
                     const std::filesystem::path& path);
EmbeddingSpace load_embeddings(const std::filesystem::path& path, nlohmann::json* config_echo = nullptr);

}  // namespace afrl
