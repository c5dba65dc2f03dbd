#include "afrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "afrl/base_recommender.hpp"

namespace afrl {

RankCandidates build_candidates(const InteractionDataset& data, HoldOut split, int num_negatives,
                                std::uint64_t seed) {
  if (num_negatives < 0) throw std::invalid_argument("num_negatives must be non-negative");
  RankCandidates out;
  const NegativeSampler sampler(data);
  std::size_t skipped = 0;
  for (int u = 0; u < data.num_users; ++u) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(split)};
    Rng rng(seq);
    auto negatives = sampler.sample_distinct(u, num_negatives, rng);
    if (static_cast<int>(negatives.size()) < num_negatives) {
      ++skipped;
      continue;
    }
    const auto& h = data.users[static_cast<std::size_t>(u)];
    out.users.push_back(u);
    out.positives.push_back(split == HoldOut::test ? h.test.item : h.valid.item);
    out.negatives.push_back(std::move(negatives));
  }
  if (skipped > 0) {
    spdlog::warn("{} users have fewer than {} unrated items and were skipped from ranking", skipped, num_negatives);
  }
  return out;
}

int rank_of_positive(double positive_score, int positive_item, std::span<const double> negative_scores,
                     std::span<const int> negative_items) {
  int rank = 1;
  for (std::size_t k = 0; k < negative_scores.size(); ++k) {
    const double s = negative_scores[k];
    if (s > positive_score || (s == positive_score && negative_items[k] < positive_item)) ++rank;
  }
  return rank;
}

double ndcg_at(int rank, int k) { return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0; }

double hit_at(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

RankMetrics rank_metrics(const Matrix& user_embeddings, const Matrix& item_embeddings,
                         const RankCandidates& candidates, int k) {
  if (user_embeddings.rows() != item_embeddings.rows()) {
    throw std::invalid_argument("user and item embeddings have different dimensions");
  }
  RankMetrics m;
  std::vector<double> neg_scores;
  for (std::size_t j = 0; j < candidates.users.size(); ++j) {
    const auto u = user_embeddings.col(candidates.users[j]);
    const int pos = candidates.positives[j];
    const auto& negs = candidates.negatives[j];
    neg_scores.resize(negs.size());
    for (std::size_t t = 0; t < negs.size(); ++t) neg_scores[t] = u.dot(item_embeddings.col(negs[t]));
    const int rank = rank_of_positive(u.dot(item_embeddings.col(pos)), pos, neg_scores, negs);
    m.ndcg_at_10 += ndcg_at(rank, k);
    m.hit_at_10 += hit_at(rank, k);
  }
  m.users = candidates.users.size();
  if (m.users > 0) {
    m.ndcg_at_10 /= static_cast<double>(m.users);
    m.hit_at_10 /= static_cast<double>(m.users);
  }
  return m;
}

double binary_auc(std::span<const double> scores, std::span<const int> is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (is_positive[order[t]] != 0) {
        positive_rank_sum += mid_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw std::invalid_argument("AUC needs both positive and negative samples");
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double macro_ovr_auc(const Matrix& probabilities, std::span<const int> labels) {
  if (probabilities.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("probability columns differ from label count");
  }
  double total = 0.0;
  int classes = 0;
  std::vector<double> scores(labels.size());
  std::vector<int> flags(labels.size());
  for (Eigen::Index c = 0; c < probabilities.rows(); ++c) {
    std::size_t pos = 0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      flags[j] = labels[j] == c ? 1 : 0;
      pos += static_cast<std::size_t>(flags[j]);
      scores[j] = probabilities(c, static_cast<Eigen::Index>(j));
    }
    if (pos == 0 || pos == labels.size()) continue;
    total += binary_auc(scores, flags);
    ++classes;
  }
  if (classes == 0) throw DataError("AUC undefined: fewer than two classes observed");
  return total / classes;
}

ProbeSplit stratified_split(std::span<const int> labels, double test_fraction, double valid_fraction,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::map<int, std::vector<int>> by_class;
  for (std::size_t j = 0; j < labels.size(); ++j) by_class[labels[j]].push_back(static_cast<int>(j));
  ProbeSplit split;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_fraction));
    const auto n_valid = static_cast<std::size_t>(std::lround(static_cast<double>(n - n_test) * valid_fraction));
    split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.valid.insert(split.valid.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                       idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), idx.end());
  }
  return split;
}

namespace {

Matrix gather_columns(const Matrix& m, std::span<const int> cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

std::vector<int> gather(std::span<const int> values, std::span<const int> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = values[idx[j]];
  return out;
}

}  // namespace

double fairness_auc(const Matrix& embeddings, std::span<const int> labels, int cardinality,
                    const ProbeOptions& options) {
  if (embeddings.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("embedding columns differ from label count");
  }
  std::set<int> observed(labels.begin(), labels.end());
  if (observed.size() < 2) throw DataError("attribute has a single observed class; AUC is undefined");
  for (int y : observed) {
    if (y < 0 || y >= cardinality) throw DataError(fmt::format("label {} outside [0, {})", y, cardinality));
  }

  const auto split = stratified_split(labels, options.test_fraction, options.valid_fraction, options.seed);
  Matrix x_train = gather_columns(embeddings, split.train);
  const Vector mean = x_train.rowwise().mean();
  Vector scale = ((x_train.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
  for (Eigen::Index i = 0; i < scale.size(); ++i) scale(i) = scale(i) > 1e-12 ? 1.0 / scale(i) : 0.0;
  auto standardize = [&](const Matrix& x) -> Matrix {
    return ((x.colwise() - mean).array().colwise() * scale.array()).matrix();
  };
  x_train = standardize(x_train);
  const Matrix x_valid = standardize(gather_columns(embeddings, split.valid));
  const Matrix x_test = standardize(gather_columns(embeddings, split.test));
  const auto y_train = gather(labels, split.train);
  const auto y_valid = gather(labels, split.valid);
  const auto y_test = gather(labels, split.test);

  Rng rng(options.seed + 1);
  const int d = static_cast<int>(embeddings.rows());
  const std::vector<int> widths{d, d, cardinality};
  Mlp probe(widths, rng);
  Adam opt(probe, AdamOptions{.learning_rate = options.learning_rate});
  Mlp best = probe;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<int> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(std::max(1, options.batch_size));
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      std::span<const int> idx(order.data() + start, end - start);
      const Matrix xb = gather_columns(x_train, idx);
      const auto yb = gather(y_train, idx);
      Mlp::Tape tape;
      const Matrix logits = probe.forward(xb, tape);
      const auto loss = cross_entropy(logits, yb);
      auto grad = probe.zero_gradient();
      probe.backward(tape, loss.grad, &grad);
      opt.step(probe, grad);
    }
    const double monitor = y_valid.empty() ? cross_entropy(probe.forward(x_train), y_train).value
                                           : cross_entropy(probe.forward(x_valid), y_valid).value;
    if (monitor < best_loss - 1e-9) {
      best_loss = monitor;
      best = probe;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  return macro_ovr_auc(softmax(best.forward(x_test)), y_test);
}

}  // namespace afrl
