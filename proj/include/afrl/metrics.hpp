#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "afrl/data.hpp"
#include "afrl/nn.hpp"

namespace afrl {

/// Seed of the frozen evaluation candidate sets, shared by every model.
inline constexpr std::uint64_t kEvaluationSeed = 20240601;

enum class HoldOut { validation, test };

/// Frozen per-user candidate sets: one held-out positive plus sampled negatives.
struct RankCandidates {
  std::vector<int> users;
  std::vector<int> positives;
  std::vector<std::vector<int>> negatives;
};

/// Negatives are drawn without replacement from items the user never rated,
/// seeded per user so every model is ranked against the same candidates.
/// Users with too few unrated items are skipped with a warning.
RankCandidates build_candidates(const InteractionDataset& data, HoldOut split, int num_negatives,
                                std::uint64_t seed);

struct RankMetrics {
  double ndcg_at_10 = 0.0;
  double hit_at_10 = 0.0;
  std::size_t users = 0;
};

/// 1-based rank of the positive among the candidates. Higher scores rank
/// first; equal scores are ordered by ascending item id.
int rank_of_positive(double positive_score, int positive_item, std::span<const double> negative_scores,
                     std::span<const int> negative_items);

double ndcg_at(int rank, int k);
double hit_at(int rank, int k);

/// `user_embeddings` holds one column per dataset user.
RankMetrics rank_metrics(const Matrix& user_embeddings, const Matrix& item_embeddings,
                         const RankCandidates& candidates, int k = 10);

/// Mann-Whitney AUC; tied scores count one half.
double binary_auc(std::span<const double> scores, std::span<const int> is_positive);

/// Macro one-vs-rest AUC over the classes that appear both as positive and
/// negative in `labels`. `probabilities` is classes x samples.
double macro_ovr_auc(const Matrix& probabilities, std::span<const int> labels);

struct ProbeOptions {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 300;
  int patience = 20;
  double test_fraction = 0.2;
  double valid_fraction = 0.1;
  std::uint64_t seed = 7;
};

struct ProbeSplit {
  std::vector<int> train;
  std::vector<int> valid;
  std::vector<int> test;
};

/// Stratified by label: each class contributes its share to every part.
ProbeSplit stratified_split(std::span<const int> labels, double test_fraction, double valid_fraction,
                            std::uint64_t seed);

/// Trains a fresh two-layer ReLU surrogate classifier on `embeddings`
/// (d x n, one column per user) and returns its held-out macro OvR AUC.
double fairness_auc(const Matrix& embeddings, std::span<const int> labels, int cardinality,
                    const ProbeOptions& options = {});

}  // namespace afrl
