#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace afrl {

/// Knobs for a MovieLens-shaped synthetic corpus whose preferences depend on
/// the user attributes, so that base embeddings leak them.
struct SyntheticOptions {
  int num_users = 300;
  int num_items = 200;
  int min_ratings = 20;
  int max_ratings = 60;
  int latent_dim = 8;
  double attribute_strength = 1.5;  // scale of the per-attribute preference offsets
  double noise = 0.5;               // scale of the idiosyncratic preference part
  std::uint64_t seed = 1;
};

struct SyntheticFiles {
  std::string ratings;  // ratings.dat lines "user::item::rating::timestamp"
  std::string users;    // users.dat lines "user::gender::age::occupation::zip"
};

SyntheticFiles generate_synthetic(const SyntheticOptions& options);

/// Writes ratings.dat and users.dat into `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticOptions& options);

}  // namespace afrl
