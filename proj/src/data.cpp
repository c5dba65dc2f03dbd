#include "afrl/data.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <unordered_map>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "afrl/io.hpp"

namespace afrl {
namespace {

constexpr std::string_view kDatasetMagic = "AFRLDATA";
constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::string_view> split_fields(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Calls fn(line_number, line) for each non-empty line; tolerates CRLF endings.
template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!line.empty()) fn(line_no, line);
    start = end + 1;
  }
}

AttributeTable parse_users(std::string_view text) {
  AttributeTable table;
  table.names = {"Gender", "Age", "Occupation"};
  table.short_names = {"G", "A", "O"};
  table.cardinalities = {2, 7, 21};
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = split_fields(line, "::");
    auto fail = [&](std::string_view why) {
      throw DataError(fmt::format("users.dat line {}: {} ('{}')", line_no, why, line));
    };
    // UserID::Gender::Age::Occupation[::Zip-code]
    if (f.size() != 4 && f.size() != 5) fail("expected 4 or 5 '::'-separated fields");
    std::int64_t user = 0;
    int age = 0;
    int occupation = 0;
    if (!parse_int(f[0], user)) fail("bad user id");
    int gender = 0;
    if (f[1] == "F") {
      gender = 0;
    } else if (f[1] == "M") {
      gender = 1;
    } else {
      fail("gender must be F or M");
    }
    if (!parse_int(f[2], age)) fail("bad age code");
    if (!parse_int(f[3], occupation)) fail("bad occupation code");
    if (occupation < 0 || occupation >= 21) fail("occupation code outside 0..20");
    int bucket = 0;
    try {
      bucket = age_bucket(age);
    } catch (const DataError& e) {
      fail(e.what());
    }
    table.user_ids.push_back(user);
    table.codes.insert(table.codes.end(), {gender, bucket, occupation});
  });
  return table;
}

}  // namespace

std::vector<int> AttributeTable::column(int attribute) const {
  std::vector<int> out(num_rows());
  for (std::size_t r = 0; r < num_rows(); ++r) out[r] = code(r, attribute);
  return out;
}

void AttributeTable::validate() const {
  const auto m = cardinalities.size();
  if (names.size() != m || short_names.size() != m) throw DataError("attribute names and cardinalities disagree");
  if (codes.size() != user_ids.size() * m) throw DataError("attribute code table has the wrong size");
  for (std::size_t r = 0; r < num_rows(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      const int c = codes[r * m + i];
      if (c < 0 || c >= cardinalities[i]) {
        throw DataError(fmt::format("attribute {} of row {} is {}, outside [0, {})", names[i], r, c, cardinalities[i]));
      }
    }
  }
}

int age_bucket(int age_code) {
  switch (age_code) {
    case 1: return 0;
    case 18: return 1;
    case 25: return 2;
    case 35: return 3;
    case 45: return 4;
    case 50: return 5;
    case 56: return 6;
    default: throw DataError(fmt::format("unknown age code {}", age_code));
  }
}

MovieLensData parse_movielens_text(std::string_view ratings_text, std::string_view users_text) {
  MovieLensData data;
  data.attributes = parse_users(users_text);
  std::unordered_map<std::int64_t, std::size_t> known;
  for (std::size_t r = 0; r < data.attributes.user_ids.size(); ++r) {
    if (!known.emplace(data.attributes.user_ids[r], r).second) {
      throw DataError(fmt::format("users.dat: duplicate user id {}", data.attributes.user_ids[r]));
    }
  }
  for_each_line(ratings_text, [&](std::size_t line_no, std::string_view line) {
    const auto f = split_fields(line, "::");
    auto fail = [&](std::string_view why) {
      throw DataError(fmt::format("ratings.dat line {}: {} ('{}')", line_no, why, line));
    };
    if (f.size() != 4) fail("expected 4 '::'-separated fields");
    RawRating r;
    if (!parse_int(f[0], r.user_id)) fail("bad user id");
    if (!parse_int(f[1], r.item_id)) fail("bad item id");
    if (!parse_int(f[2], r.rating) || r.rating < 1 || r.rating > 5) fail("rating must be an integer in 1..5");
    if (!parse_int(f[3], r.timestamp) || r.timestamp < 0) fail("timestamp must be a non-negative integer");
    if (!known.contains(r.user_id)) fail(fmt::format("user {} is not listed in users.dat", r.user_id));
    data.ratings.push_back(r);
  });
  return data;
}

MovieLensData parse_movielens(const std::filesystem::path& ratings_path, const std::filesystem::path& users_path) {
  for (const auto& p : {ratings_path, users_path}) {
    if (!std::filesystem::exists(p)) throw DataError(fmt::format("missing input file '{}'", p.string()));
  }
  const std::string users = read_file(users_path);
  const std::string ratings = read_file(ratings_path);
  return parse_movielens_text(ratings, users);
}

std::vector<LabeledInteraction> binarize(std::span<const RawRating> ratings) {
  std::vector<LabeledInteraction> out;
  out.reserve(ratings.size());
  for (const auto& r : ratings) out.push_back({r.user_id, r.item_id, r.rating >= 4 ? 1 : 0, r.timestamp});
  return out;
}

std::size_t InteractionDataset::train_size() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.train.size();
  return n;
}

bool InteractionDataset::has_interacted(int user, int item) const {
  const auto& rated = users.at(static_cast<std::size_t>(user)).rated;
  return std::binary_search(rated.begin(), rated.end(), item);
}

InteractionDataset filter_and_split(std::span<const LabeledInteraction> interactions,
                                    const AttributeTable& attributes, SplitOptions options) {
  if (options.min_count < 3) throw std::invalid_argument("min_count must be at least 3");
  if (options.window < 1) throw std::invalid_argument("window must be positive");

  std::map<std::int64_t, std::vector<const LabeledInteraction*>> by_user;
  for (const auto& x : interactions) by_user[x.user_id].push_back(&x);

  std::unordered_map<std::int64_t, std::size_t> attribute_row;
  for (std::size_t r = 0; r < attributes.num_rows(); ++r) attribute_row.emplace(attributes.user_ids[r], r);

  std::vector<std::int64_t> kept_users;
  for (auto& [user, rows] : by_user) {
    if (static_cast<int>(rows.size()) < options.min_count) continue;
    const auto positives = std::count_if(rows.begin(), rows.end(), [](const auto* x) { return x->label == 1; });
    if (positives < 3) {
      spdlog::warn("user {} has {} positive interactions after filtering; excluded", user, positives);
      continue;
    }
    if (!attribute_row.contains(user)) throw DataError(fmt::format("user {} has no attribute row", user));
    kept_users.push_back(user);
  }

  InteractionDataset data;
  data.options = options;
  std::vector<std::int64_t> item_ids;
  for (auto user : kept_users)
    for (const auto* x : by_user[user]) item_ids.push_back(x->item_id);
  std::sort(item_ids.begin(), item_ids.end());
  item_ids.erase(std::unique(item_ids.begin(), item_ids.end()), item_ids.end());
  std::unordered_map<std::int64_t, int> item_index;
  for (std::size_t i = 0; i < item_ids.size(); ++i) item_index.emplace(item_ids[i], static_cast<int>(i));

  data.item_ids = item_ids;
  data.num_items = static_cast<int>(item_ids.size());
  data.user_ids = kept_users;
  data.num_users = static_cast<int>(kept_users.size());
  data.attributes.names = attributes.names;
  data.attributes.short_names = attributes.short_names;
  data.attributes.cardinalities = attributes.cardinalities;

  for (auto user : kept_users) {
    auto& rows = by_user[user];
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      return std::tie(a->timestamp, a->item_id) < std::tie(b->timestamp, b->item_id);
    });
    UserHistory h;
    std::vector<TimedItem> positives;
    for (const auto* x : rows) {
      const int item = item_index.at(x->item_id);
      h.rated.push_back(item);
      if (x->label == 1) positives.push_back({item, x->timestamp});
    }
    std::sort(h.rated.begin(), h.rated.end());
    h.rated.erase(std::unique(h.rated.begin(), h.rated.end()), h.rated.end());

    h.test = positives.back();
    h.valid = positives[positives.size() - 2];
    const std::size_t train_end = positives.size() - 2;
    const std::size_t train_begin =
        train_end > static_cast<std::size_t>(options.window) ? train_end - options.window : 0;
    h.train.assign(positives.begin() + static_cast<std::ptrdiff_t>(train_begin),
                   positives.begin() + static_cast<std::ptrdiff_t>(train_end));
    data.users.push_back(std::move(h));

    const auto row = attribute_row.at(user);
    data.attributes.user_ids.push_back(user);
    for (int i = 0; i < attributes.num_attributes(); ++i) data.attributes.codes.push_back(attributes.code(row, i));
  }
  data.attributes.validate();
  return data;
}

std::string InteractionDataset::serialize() const {
  BinaryWriter w;
  w.put_string(kDatasetMagic);
  w.put(kDatasetVersion);
  w.put<std::int32_t>(num_users);
  w.put<std::int32_t>(num_items);
  w.put<std::int32_t>(options.min_count);
  w.put<std::int32_t>(options.window);
  w.put_vector<std::int64_t>(user_ids);
  w.put_vector<std::int64_t>(item_ids);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(attributes.num_attributes()));
  for (int i = 0; i < attributes.num_attributes(); ++i) {
    w.put_string(attributes.names[i]);
    w.put_string(attributes.short_names[i]);
  }
  w.put_vector<int>(attributes.cardinalities);
  w.put_vector<std::int64_t>(attributes.user_ids);
  w.put_vector<int>(attributes.codes);

  for (const auto& h : users) {
    std::vector<std::int32_t> items;
    std::vector<std::int64_t> times;
    for (const auto& t : h.train) {
      items.push_back(t.item);
      times.push_back(t.timestamp);
    }
    w.put_vector<std::int32_t>(items);
    w.put_vector<std::int64_t>(times);
    w.put<std::int32_t>(h.valid.item);
    w.put<std::int64_t>(h.valid.timestamp);
    w.put<std::int32_t>(h.test.item);
    w.put<std::int64_t>(h.test.timestamp);
    w.put_vector<int>(h.rated);
  }
  return w.bytes();
}

InteractionDataset InteractionDataset::deserialize(std::string_view bytes) {
  BinaryReader r(bytes);
  if (r.get_string() != kDatasetMagic) throw DataError("not a dataset artifact (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw DataError(fmt::format("dataset artifact version {} is not supported (expected {})", version, kDatasetVersion));
  }
  InteractionDataset d;
  d.num_users = r.get<std::int32_t>();
  d.num_items = r.get<std::int32_t>();
  d.options.min_count = r.get<std::int32_t>();
  d.options.window = r.get<std::int32_t>();
  d.user_ids = r.get_vector<std::int64_t>();
  d.item_ids = r.get_vector<std::int64_t>();
  const auto m = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < m; ++i) {
    d.attributes.names.push_back(r.get_string());
    d.attributes.short_names.push_back(r.get_string());
  }
  d.attributes.cardinalities = r.get_vector<int>();
  d.attributes.user_ids = r.get_vector<std::int64_t>();
  d.attributes.codes = r.get_vector<int>();
  for (int u = 0; u < d.num_users; ++u) {
    UserHistory h;
    const auto items = r.get_vector<std::int32_t>();
    const auto times = r.get_vector<std::int64_t>();
    if (items.size() != times.size()) throw DataError("corrupt dataset: train items and timestamps disagree");
    for (std::size_t k = 0; k < items.size(); ++k) h.train.push_back({items[k], times[k]});
    h.valid.item = r.get<std::int32_t>();
    h.valid.timestamp = r.get<std::int64_t>();
    h.test.item = r.get<std::int32_t>();
    h.test.timestamp = r.get<std::int64_t>();
    h.rated = r.get_vector<int>();
    d.users.push_back(std::move(h));
  }
  if (!r.at_end()) throw DataError("dataset artifact has trailing bytes");
  if (static_cast<int>(d.user_ids.size()) != d.num_users || static_cast<int>(d.item_ids.size()) != d.num_items) {
    throw DataError("corrupt dataset: id tables disagree with counts");
  }
  d.attributes.validate();
  return d;
}

void save_dataset(const InteractionDataset& data, const std::filesystem::path& path) {
  write_file(path, data.serialize());
}

InteractionDataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(fmt::format("dataset artifact '{}' does not exist", path.string()));
  return InteractionDataset::deserialize(read_file(path));
}

nlohmann::json dataset_manifest(const InteractionDataset& data, const std::string& artifact_sha256) {
  nlohmann::json j;
  j["format"] = "afrl-dataset-v1";
  j["num_users"] = data.num_users;
  j["num_items"] = data.num_items;
  j["split_sizes"] = {{"train", data.train_size()}, {"valid", data.users.size()}, {"test", data.users.size()}};
  j["min_count"] = data.options.min_count;
  j["window"] = data.options.window;
  j["attributes"] = nlohmann::json::array();
  for (int i = 0; i < data.attributes.num_attributes(); ++i) {
    j["attributes"].push_back({{"name", data.attributes.names[i]},
                               {"short", data.attributes.short_names[i]},
                               {"cardinality", data.attributes.cardinalities[i]}});
  }
  j["artifact_sha256"] = artifact_sha256;
  return j;
}

}  // namespace afrl
