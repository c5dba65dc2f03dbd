#include "afrl/evaluation.hpp"

#include <sstream>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "afrl/io.hpp"

namespace afrl {
namespace {

constexpr std::string_view kCsvHeader =
    "manifest,model,variant,beta,lambda,seed,requirement,auc,ndcg_at_10,hit_at_10,users,per_attribute_auc,error";

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line, int line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw DataError(fmt::format("metrics CSV line {}: unterminated quote", line_no));
  return fields;
}

double to_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(fmt::format("metrics CSV line {}: '{}' is not a number", line_no, s));
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& a : per_attribute_auc) per[a.attribute] = a.auc;
  return {{"requirement", requirement},
          {"auc", auc ? nlohmann::json(*auc) : nlohmann::json(nullptr)},
          {"per_attribute_auc", per},
          {"ndcg_at_10", ndcg_at_10},
          {"hit_at_10", hit_at_10},
          {"users", users}};
}

MetricsReport evaluate_embeddings(const Matrix& user_embeddings, const Matrix& item_embeddings,
                                  const InteractionDataset& data, const FairnessRequirement& req,
                                  const EvaluationOptions& options) {
  if (req.num_attributes() != data.attributes.num_attributes()) {
    throw UsageError(fmt::format("requirement has {} flags, dataset has {} attributes", req.num_attributes(),
                                 data.attributes.num_attributes()));
  }
  MetricsReport r;
  r.requirement = req.label(data.attributes.short_names);
  const auto cands = build_candidates(data, options.split, options.num_negatives, kEvaluationSeed);
  const auto rank = rank_metrics(user_embeddings, item_embeddings, cands);
  r.ndcg_at_10 = rank.ndcg_at_10;
  r.hit_at_10 = rank.hit_at_10;
  r.users = rank.users;
  const auto sensitive = req.sensitive_attributes();
  if (!sensitive.empty()) {
    double sum = 0.0;
    for (int i : sensitive) {
      const auto labels = data.attributes.column(i);
      const double auc = fairness_auc(user_embeddings, labels, data.attributes.cardinalities[static_cast<std::size_t>(i)],
                                      options.probe);
      r.per_attribute_auc.push_back({data.attributes.short_names[static_cast<std::size_t>(i)], auc});
      sum += auc;
    }
    r.auc = sum / static_cast<double>(sensitive.size());
  }
  return r;
}

MetricsReport evaluate(const AfrlModel& model, const EmbeddingSpace& space, const InteractionDataset& data,
                       const FairnessRequirement& req, const EvaluationOptions& options) {
  if (model.base_digest != space.digest()) {
    throw DataError("model was trained against a different base embedding space");
  }
  return evaluate_embeddings(fair_embeddings(model, space.users, req), space.items, data, req, options);
}

std::vector<SweepRecord> pareto_sweep(const InteractionDataset& data, const EmbeddingSpace& space,
                                      const TrainingConfig& config, std::span<const double> lambdas,
                                      std::span<const FairnessRequirement> reqs, const EvaluationOptions& options,
                                      const std::function<void(const SweepRecord&)>& on_record) {
  if (lambdas.empty()) throw UsageError("pareto sweep needs at least one lambda");
  std::vector<SweepRecord> out;
  for (double lambda : lambdas) {
    auto cfg = config;
    cfg.lambda = lambda;
    try {
      const auto model = train_afrl(data, space, cfg);
      for (const auto& req : reqs) {
        SweepRecord rec{lambda, evaluate(model, space, data, req, options), {}};
        if (on_record) on_record(rec);
        out.push_back(std::move(rec));
      }
    } catch (const std::exception& e) {
      spdlog::warn("sweep run lambda={} failed: {}", lambda, e.what());
      for (const auto& req : reqs) {
        SweepRecord rec;
        rec.lambda = lambda;
        rec.report.requirement = req.label(data.attributes.short_names);
        rec.error = e.what();
        if (on_record) on_record(rec);
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

MetricsReport ablation(const InteractionDataset& data, const EmbeddingSpace& space, TrainingConfig config,
                       AggregatorVariant variant, const FairnessRequirement& req, const EvaluationOptions& options) {
  config.variant = variant;
  return evaluate(train_afrl(data, space, config), space, data, req, options);
}

nlohmann::json ResultRow::to_json() const {
  auto j = report.to_json();
  j["manifest"] = manifest;
  j["model"] = model;
  j["variant"] = variant;
  j["beta"] = beta;
  j["lambda"] = lambda;
  j["seed"] = seed;
  if (!error.empty()) j["error"] = error;
  return j;
}

std::string metrics_csv(std::span<const ResultRow> rows) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::string per;
    for (const auto& a : r.per_attribute_auc) {
      if (!per.empty()) per += ';';
      per += fmt::format("{}={:.17g}", a.attribute, a.auc);
    }
    out += fmt::format("{},{},{},{:.17g},{:.17g},{},{},{},{:.17g},{:.17g},{},{},{}\n", csv_field(row.manifest),
                       csv_field(row.model), csv_field(row.variant), row.beta, row.lambda, row.seed,
                       csv_field(r.requirement), r.auc ? fmt::format("{:.17g}", *r.auc) : std::string(),
                       r.ndcg_at_10, r.hit_at_10, r.users, csv_field(per), csv_field(row.error));
  }
  return out;
}

std::vector<ResultRow> parse_metrics_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw DataError("metrics CSV is empty or has an unexpected header");
  }
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 13) throw DataError(fmt::format("metrics CSV line {}: expected 13 fields, got {}", line_no, f.size()));
    ResultRow row;
    row.manifest = f[0];
    row.model = f[1];
    row.variant = f[2];
    row.beta = to_double(f[3], line_no);
    row.lambda = to_double(f[4], line_no);
    try {
      row.seed = std::stoull(f[5]);
    } catch (const std::exception&) {
      throw DataError(fmt::format("metrics CSV line {}: bad seed '{}'", line_no, f[5]));
    }
    row.report.requirement = f[6];
    if (!f[7].empty()) row.report.auc = to_double(f[7], line_no);
    row.report.ndcg_at_10 = to_double(f[8], line_no);
    row.report.hit_at_10 = to_double(f[9], line_no);
    row.report.users = static_cast<std::size_t>(to_double(f[10], line_no));
    std::istringstream per(f[11]);
    std::string item;
    while (std::getline(per, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw DataError(fmt::format("metrics CSV line {}: bad per-attribute AUC '{}'", line_no, item));
      row.report.per_attribute_auc.push_back({item.substr(0, eq), to_double(item.substr(eq + 1), line_no)});
    }
    row.error = f[12];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace afrl
