#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace afrl {

struct RawRating {
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
};

/// Per-user categorical attributes, one row per user.
struct AttributeTable {
  std::vector<std::string> names;        // "Gender", "Age", "Occupation"
  std::vector<std::string> short_names;  // "G", "A", "O"
  std::vector<int> cardinalities;
  std::vector<std::int64_t> user_ids;    // raw user id of each row
  std::vector<int> codes;                // row-major, rows x num_attributes()

  int num_attributes() const { return static_cast<int>(cardinalities.size()); }
  std::size_t num_rows() const { return user_ids.size(); }
  int code(std::size_t row, int attribute) const { return codes[row * cardinalities.size() + attribute]; }
  std::vector<int> column(int attribute) const;

  /// Throws DataError when a code falls outside its cardinality or shapes disagree.
  void validate() const;
};

struct MovieLensData {
  std::vector<RawRating> ratings;
  AttributeTable attributes;
};

/// Native ML-1M age codes {1,18,25,35,45,50,56} map onto buckets 0..6.
int age_bucket(int age_code);

MovieLensData parse_movielens(const std::filesystem::path& ratings_path, const std::filesystem::path& users_path);
MovieLensData parse_movielens_text(std::string_view ratings_text, std::string_view users_text);

struct LabeledInteraction {
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  int label = 0;  // 1 iff rating >= 4
  std::int64_t timestamp = 0;
};

std::vector<LabeledInteraction> binarize(std::span<const RawRating> ratings);

struct TimedItem {
  int item = -1;
  std::int64_t timestamp = 0;
};

struct UserHistory {
  std::vector<TimedItem> train;  // chronological positives
  TimedItem valid;
  TimedItem test;
  std::vector<int> rated;  // every item the user rated, sorted; excluded from negative pools
};

struct SplitOptions {
  int min_count = 10;
  int window = 100;
};

/// Dense users and items with a chronological leave-two-out split of positives.
struct InteractionDataset {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::int64_t> user_ids;  // dense -> raw
  std::vector<std::int64_t> item_ids;  // dense -> raw
  std::vector<UserHistory> users;
  AttributeTable attributes;  // row u describes dense user u
  SplitOptions options;

  std::size_t train_size() const;
  bool has_interacted(int user, int item) const;

  std::string serialize() const;
  static InteractionDataset deserialize(std::string_view bytes);
};

/// Drops users with fewer than `min_count` rated instances, orders each user's
/// positives by (timestamp, item id), holds out the newest as test and the
/// second newest as validation, and keeps the newest `window` of the rest for
/// training. Users left with fewer than three positives are dropped with a warning.
InteractionDataset filter_and_split(std::span<const LabeledInteraction> interactions,
                                    const AttributeTable& attributes, SplitOptions options = {});

void save_dataset(const InteractionDataset& data, const std::filesystem::path& path);
InteractionDataset load_dataset(const std::filesystem::path& path);

/// Counts, split sizes and the artifact checksum.
nlohmann::json dataset_manifest(const InteractionDataset& data, const std::string& artifact_sha256);

}  // namespace afrl
