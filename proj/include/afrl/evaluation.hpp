#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "afrl/aggregation.hpp"
#include "afrl/base_recommender.hpp"
#include "afrl/data.hpp"
#include "afrl/metrics.hpp"
#include "afrl/trainer.hpp"

namespace afrl {

struct AttributeAuc {
  std::string attribute;  // short name
  double auc = 0.5;
};

struct MetricsReport {
  std::string requirement;  // label such as "G+A" or "none"
  std::optional<double> auc;  // mean over sensitive attributes; absent when none are sensitive
  std::vector<AttributeAuc> per_attribute_auc;
  double ndcg_at_10 = 0.0;
  double hit_at_10 = 0.0;
  std::size_t users = 0;

  nlohmann::json to_json() const;
};

struct EvaluationOptions {
  ProbeOptions probe;
  int num_negatives = 99;
  HoldOut split = HoldOut::test;
};

/// Ranks with `user_embeddings` (d x num_users) against frozen items and
/// probes every sensitive attribute of `req` on the same embeddings.
MetricsReport evaluate_embeddings(const Matrix& user_embeddings, const Matrix& item_embeddings,
                                  const InteractionDataset& data, const FairnessRequirement& req,
                                  const EvaluationOptions& options = {});

/// Fair embeddings u* of `model` under `req`.
MetricsReport evaluate(const AfrlModel& model, const EmbeddingSpace& space, const InteractionDataset& data,
                       const FairnessRequirement& req, const EvaluationOptions& options = {});

struct SweepRecord {
  double lambda = 0.0;
  MetricsReport report;
  std::string error;  // non-empty when this run failed
};

/// One model per lambda, all else fixed; each model is evaluated under every
/// requirement in `reqs`. Failed runs are recorded and the sweep continues.
std::vector<SweepRecord> pareto_sweep(const InteractionDataset& data, const EmbeddingSpace& space,
                                      const TrainingConfig& config, std::span<const double> lambdas,
                                      std::span<const FairnessRequirement> reqs, const EvaluationOptions& options = {},
                                      const std::function<void(const SweepRecord&)>& on_record = {});

/// Retrains with `variant` and evaluates under `req`.
MetricsReport ablation(const InteractionDataset& data, const EmbeddingSpace& space, TrainingConfig config,
                       AggregatorVariant variant, const FairnessRequirement& req,
                       const EvaluationOptions& options = {});

/// One CSV row: the report plus the run that produced it.
struct ResultRow {
  std::string manifest;
  std::string model;  // "base" or "afrl"
  std::string variant = "full";
  double beta = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  MetricsReport report;
  std::string error;

  nlohmann::json to_json() const;
};

std::string metrics_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> parse_metrics_csv(std::string_view text);

}  // namespace afrl
