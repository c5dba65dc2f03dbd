#include "afrl/base_recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "afrl/metrics.hpp"

namespace afrl {

std::string EmbeddingSpace::digest() const {
  BinaryWriter w;
  w.put_matrix(users);
  w.put_matrix(items);
  return sha256_hex(w.bytes());
}

double score(const Eigen::Ref<const Vector>& user, const Eigen::Ref<const Vector>& item) {
  if (user.size() != item.size()) {
    throw std::invalid_argument(fmt::format("score: user has dimension {}, item {}", user.size(), item.size()));
  }
  return user.dot(item);
}

int NegativeSampler::available(int user) const {
  return data_->num_items - static_cast<int>(data_->users.at(static_cast<std::size_t>(user)).rated.size());
}

int NegativeSampler::sample(int user, Rng& rng) const {
  if (available(user) <= 0) throw DataError(fmt::format("user {} has rated every item; no negative exists", user));
  std::uniform_int_distribution<int> pick(0, data_->num_items - 1);
  while (true) {
    const int item = pick(rng);
    if (!data_->has_interacted(user, item)) return item;
  }
}

std::vector<int> NegativeSampler::sample_distinct(int user, int count, Rng& rng) const {
  const int avail = available(user);
  if (count <= 0 || avail < count) return {};
  if (avail <= 4 * count) {
    std::vector<int> pool;
    pool.reserve(static_cast<std::size_t>(avail));
    for (int item = 0; item < data_->num_items; ++item)
      if (!data_->has_interacted(user, item)) pool.push_back(item);
    for (int k = 0; k < count; ++k) {
      std::uniform_int_distribution<int> pick(k, avail - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
  }
  std::vector<int> out;
  std::unordered_set<int> seen;
  while (static_cast<int>(out.size()) < count) {
    const int item = sample(user, rng);
    if (seen.insert(item).second) out.push_back(item);
  }
  return out;
}

double bpr_loss(const EmbeddingSpace& space, std::span<const BprTriple> triples, EmbeddingGradient* grad) {
  if (grad != nullptr) {
    grad->users = Matrix::Zero(space.users.rows(), space.users.cols());
    grad->items = Matrix::Zero(space.items.rows(), space.items.cols());
  }
  if (triples.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(triples.size());
  double total = 0.0;
  for (const auto& t : triples) {
    const auto u = space.users.col(t.user);
    const auto vp = space.items.col(t.pos_item);
    const auto vn = space.items.col(t.neg_item);
    const double x = u.dot(vp) - u.dot(vn);
    total -= log_sigmoid(x);
    if (grad != nullptr) {
      const double g = -sigmoid(-x) * inv;  // d/dx of -ln sigmoid(x), averaged
      grad->users.col(t.user) += g * (vp - vn);
      grad->items.col(t.pos_item) += g * u;
      grad->items.col(t.neg_item) -= g * u;
    }
  }
  return total * inv;
}

nlohmann::json BaseTrainConfig::to_json() const {
  return {{"dim", dim},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"init_std", init_std},
          {"eval_negatives", eval_negatives},
          {"seed", seed}};
}

BaseTrainConfig BaseTrainConfig::from_json(const nlohmann::json& j) {
  BaseTrainConfig c;
  c.dim = j.value("dim", c.dim);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.init_std = j.value("init_std", c.init_std);
  c.eval_negatives = j.value("eval_negatives", c.eval_negatives);
  c.seed = j.value("seed", c.seed);
  return c;
}

EmbeddingSpace init_embeddings(int num_users, int num_items, int dim, double init_std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, init_std);
  EmbeddingSpace s;
  s.users.resize(dim, num_users);
  s.items.resize(dim, num_items);
  for (Eigen::Index i = 0; i < s.users.size(); ++i) s.users.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < s.items.size(); ++i) s.items.data()[i] = normal(rng);
  return s;
}

BaseTrainResult train_base(const InteractionDataset& data, const BaseTrainConfig& config,
                           const std::function<void(const BaseEpochLog&)>& on_epoch) {
  if (config.dim < 1 || config.batch_size < 1 || config.learning_rate <= 0.0) {
    throw UsageError("base training needs dim >= 1, batch_size >= 1 and learning_rate > 0");
  }
  Rng rng(config.seed);
  BaseTrainResult result;
  EmbeddingSpace space = init_embeddings(data.num_users, data.num_items, config.dim, config.init_std, rng);
  result.space = space;

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(data.train_size());
  for (int u = 0; u < data.num_users; ++u)
    for (const auto& t : data.users[static_cast<std::size_t>(u)].train) pairs.emplace_back(u, t.item);

  const auto candidates = build_candidates(data, HoldOut::validation, config.eval_negatives, kEvaluationSeed);
  const NegativeSampler sampler(data);
  const AdamOptions adam{.learning_rate = config.learning_rate};
  EmbeddingGradient m{Matrix::Zero(space.users.rows(), space.users.cols()),
                      Matrix::Zero(space.items.rows(), space.items.cols())};
  EmbeddingGradient v = m;
  EmbeddingGradient grad;
  std::int64_t t = 0;

  double best = -1.0;
  int since_best = 0;
  std::vector<BprTriple> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(pairs.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back({pairs[k].first, pairs[k].second, sampler.sample(pairs[k].first, rng)});
      }
      const double loss = bpr_loss(space, batch, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("base training diverged: loss {} at epoch {}, batch {} (|U|max={:.3g}, |V|max={:.3g})",
                                        loss, epoch, batches, space.users.cwiseAbs().maxCoeff(),
                                        space.items.cwiseAbs().maxCoeff()));
      }
      ++t;
      adam_update(space.users, grad.users, m.users, v.users, t, adam);
      adam_update(space.items, grad.items, m.items, v.items, t, adam);
      loss_sum += loss;
      ++batches;
    }
    const auto metrics = rank_metrics(space.users, space.items, candidates);
    BaseEpochLog log{epoch, batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0, metrics.ndcg_at_10,
                     metrics.hit_at_10};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (metrics.ndcg_at_10 > best) {
      best = metrics.ndcg_at_10;
      result.space = space;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      spdlog::info("base training: early stop at epoch {} (best epoch {})", epoch, result.best_epoch);
      break;
    }
  }
  return result;
}

void save_embeddings(const EmbeddingSpace& space, const nlohmann::json& config_echo,
                     const std::filesystem::path& path) {
  BinaryWriter w;
  w.put_matrix(space.users);
  w.put_matrix(space.items);
  nlohmann::json meta{{"dim", space.dim()},
                      {"num_users", space.num_users()},
                      {"num_items", space.num_items()},
                      {"config", config_echo},
                      {"digest", space.digest()}};
  write_file(path, encode_checkpoint({"base-embeddings", meta, w.bytes()}));
}

EmbeddingSpace load_embeddings(const std::filesystem::path& path, nlohmann::json* config_echo) {
  if (!std::filesystem::exists(path)) throw DataError(fmt::format("embedding checkpoint '{}' does not exist", path.string()));
  const auto ckpt = decode_checkpoint(read_file(path), "base-embeddings");
  BinaryReader r(ckpt.payload);
  EmbeddingSpace s;
  s.users = r.get_matrix();
  s.items = r.get_matrix();
  if (s.users.rows() != s.items.rows()) throw DataError("embedding checkpoint: user and item dimensions differ");
  if (!s.users.allFinite() || !s.items.allFinite()) throw DataError("embedding checkpoint contains non-finite values");
  if (config_echo != nullptr) *config_echo = ckpt.meta.value("config", nlohmann::json::object());
  return s;
}

}  // namespace afrl
