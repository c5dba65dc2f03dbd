#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "afrl/data.hpp"
#include "afrl/nn.hpp"

namespace afrl::test {

/// Dense toy dataset. `train[u]` lists user u's training positives; valid and
/// test items are given per user. Every listed item counts as rated.
inline InteractionDataset make_dataset(int num_items, const std::vector<std::vector<int>>& train,
                                       const std::vector<int>& valid, const std::vector<int>& test,
                                       const std::vector<std::vector<int>>& codes = {},
                                       std::vector<int> cardinalities = {2}) {
  InteractionDataset d;
  d.num_users = static_cast<int>(train.size());
  d.num_items = num_items;
  for (int u = 0; u < d.num_users; ++u) d.user_ids.push_back(u + 1);
  for (int i = 0; i < num_items; ++i) d.item_ids.push_back(i + 1);
  const int m = static_cast<int>(cardinalities.size());
  d.attributes.cardinalities = cardinalities;
  for (int i = 0; i < m; ++i) {
    d.attributes.names.push_back("Attr" + std::to_string(i));
    d.attributes.short_names.push_back(std::string(1, static_cast<char>('P' + i)));
  }
  std::int64_t t = 0;
  for (int u = 0; u < d.num_users; ++u) {
    UserHistory h;
    for (int item : train[u]) h.train.push_back({item, ++t});
    h.valid = {valid[u], ++t};
    h.test = {test[u], ++t};
    h.rated = train[u];
    h.rated.push_back(valid[u]);
    h.rated.push_back(test[u]);
    std::sort(h.rated.begin(), h.rated.end());
    h.rated.erase(std::unique(h.rated.begin(), h.rated.end()), h.rated.end());
    d.users.push_back(std::move(h));
    d.attributes.user_ids.push_back(u + 1);
    for (int i = 0; i < m; ++i) d.attributes.codes.push_back(codes.empty() ? u % cardinalities[i] : codes[u][i]);
  }
  return d;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

/// Largest relative error between an analytic gradient and central differences of `f`.
inline double max_gradient_error(std::vector<double> x, const std::vector<double>& analytic,
                                 const std::function<double(const std::vector<double>&)>& f, double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f(x);
    x[k] = saved - h;
    const double down = f(x);
    x[k] = saved;
    const double numeric = (up - down) / (2 * h);
    // Entries near zero are compared absolutely; relative error is meaningless there.
    const double err = std::max(std::abs(numeric), std::abs(analytic[k])) < 1e-7
                           ? std::abs(numeric - analytic[k])
                           : relative_error(numeric, analytic[k]);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace afrl::test
