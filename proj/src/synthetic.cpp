#include "afrl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "afrl/io.hpp"

namespace afrl {

SyntheticFiles generate_synthetic(const SyntheticOptions& o) {
  if (o.num_users < 1 || o.num_items < 2 || o.min_ratings < 1 || o.max_ratings < o.min_ratings ||
      o.max_ratings > o.num_items || o.latent_dim < 1) {
    throw UsageError("synthetic options are inconsistent");
  }
  constexpr std::array<int, 7> kAges{1, 18, 25, 35, 45, 50, 56};
  constexpr std::array<int, 3> kCards{2, 7, 21};
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](int n, double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * normal(rng);
    return v;
  };

  // One preference offset per attribute value.
  std::vector<std::vector<Eigen::VectorXd>> offsets;
  for (int card : kCards) {
    offsets.emplace_back();
    for (int a = 0; a < card; ++a) offsets.back().push_back(gaussian(o.latent_dim, o.attribute_strength));
  }
  std::vector<Eigen::VectorXd> items;
  for (int j = 0; j < o.num_items; ++j) items.push_back(gaussian(o.latent_dim, 1.0 / std::sqrt(o.latent_dim)));

  SyntheticFiles files;
  std::uniform_int_distribution<int> count(o.min_ratings, o.max_ratings);
  std::uniform_int_distribution<int> gap(60, 86400);
  std::extreme_value_distribution<double> gumbel(0.0, 1.0);
  std::vector<int> codes(3);
  for (int u = 1; u <= o.num_users; ++u) {
    for (std::size_t i = 0; i < kCards.size(); ++i) {
      codes[i] = std::uniform_int_distribution<int>(0, kCards[i] - 1)(rng);
    }
    Eigen::VectorXd pref = gaussian(o.latent_dim, o.noise);
    for (std::size_t i = 0; i < kCards.size(); ++i) pref += offsets[i][static_cast<std::size_t>(codes[i])];
    files.users += fmt::format("{}::{}::{}::{}::{:05d}\n", u, codes[0] == 0 ? 'F' : 'M', kAges[static_cast<std::size_t>(codes[1])],
                               codes[2], 10000 + u);

    // Users pick what to rate by perturbed preference, then rate it by preference.
    std::vector<std::pair<double, int>> keyed;
    for (int j = 0; j < o.num_items; ++j) keyed.emplace_back(pref.dot(items[static_cast<std::size_t>(j)]) + gumbel(rng), j);
    const int n = count(rng);
    std::partial_sort(keyed.begin(), keyed.begin() + n, keyed.end(), std::greater<>());
    std::vector<int> chosen;
    for (int k = 0; k < n; ++k) chosen.push_back(keyed[static_cast<std::size_t>(k)].second);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    std::int64_t ts = 978300000 + static_cast<std::int64_t>(u) * 7;
    for (int j : chosen) {
      const double s = pref.dot(items[static_cast<std::size_t>(j)]) + 0.5 * normal(rng);
      const int rating = std::clamp(static_cast<int>(std::floor(3.5 + s)), 1, 5);
      ts += gap(rng);
      files.ratings += fmt::format("{}::{}::{}::{}\n", u, j + 1, rating, ts);
    }
  }
  return files;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticOptions& options) {
  const auto files = generate_synthetic(options);
  write_file(dir / "ratings.dat", files.ratings);
  write_file(dir / "users.dat", files.users);
}

}  // namespace afrl
