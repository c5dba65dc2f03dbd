#include <doctest.h>

#include <filesystem>
#include <map>
#include <string>

#include <fmt/core.h>

#include "afrl/data.hpp"
#include "afrl/io.hpp"

using namespace afrl;

namespace {

// n ratings for one user, item ids start at `first_item`, timestamps increase.
std::string user_ratings(int user, int n, int rating, int first_item = 1, int first_ts = 1000) {
  std::string out;
  for (int k = 0; k < n; ++k) out += fmt::format("{}::{}::{}::{}\n", user, first_item + k, rating, first_ts + k);
  return out;
}

InteractionDataset split_text(const std::string& ratings, const std::string& users, SplitOptions opts = {}) {
  const auto raw = parse_movielens_text(ratings, users);
  const auto labeled = binarize(raw.ratings);
  return filter_and_split(labeled, raw.attributes, opts);
}

}  // namespace

TEST_CASE("rating and user lines split into their fields") {
  const auto d = parse_movielens_text("1::1193::5::978300760\n", "1::F::1::10::48067\n");
  REQUIRE(d.ratings.size() == 1);
  CHECK(d.ratings[0].user_id == 1);
  CHECK(d.ratings[0].item_id == 1193);
  CHECK(d.ratings[0].rating == 5);
  CHECK(d.ratings[0].timestamp == 978300760);
  REQUIRE(d.attributes.num_rows() == 1);
  CHECK(d.attributes.code(0, 0) == 0);  // F
  CHECK(d.attributes.code(0, 1) == 0);  // age code 1 is the first bucket
  CHECK(d.attributes.code(0, 2) == 10);
  CHECK(d.attributes.short_names == std::vector<std::string>{"G", "A", "O"});
  CHECK(d.attributes.cardinalities == std::vector<int>{2, 7, 21});
}

TEST_CASE("age codes map onto seven buckets") {
  const int codes[] = {1, 18, 25, 35, 45, 50, 56};
  for (int k = 0; k < 7; ++k) CHECK(age_bucket(codes[k]) == k);
  CHECK_THROWS_AS(age_bucket(30), DataError);
}

TEST_CASE("malformed lines name their line number") {
  const std::string users = "1::F::1::10::0\n2::M::25::3::0\n";
  try {
    parse_movielens_text("1::10::4::5\n1::11::x::6\n", users);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_movielens_text("", "1::F::1::10::0\n2::Q::25::3::0\n");
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("users.dat line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_movielens_text("1::10::7::5\n", users), DataError);
  CHECK_THROWS_AS(parse_movielens_text("1::10::4\n", users), DataError);
}

TEST_CASE("a rating by an unknown user is an error") {
  CHECK_THROWS_WITH_AS(parse_movielens_text("9::10::4::5\n", "1::F::1::10::0\n"),
                       doctest::Contains("user 9"), DataError);
}

TEST_CASE("binarization thresholds at four") {
  std::vector<RawRating> r{{1, 1, 4, 0}, {1, 2, 3, 0}, {1, 3, 5, 0}, {1, 4, 1, 0}};
  const auto b = binarize(r);
  CHECK(b[0].label == 1);
  CHECK(b[1].label == 0);
  CHECK(b[2].label == 1);
  CHECK(b[3].label == 0);
}

TEST_CASE("users below ten instances are removed, exactly ten are kept") {
  const std::string users = "1::F::1::10::0\n2::M::25::3::0\n";
  const auto d = split_text(user_ratings(1, 9, 5) + user_ratings(2, 10, 5), users);
  REQUIRE(d.num_users == 1);
  CHECK(d.user_ids[0] == 2);
  CHECK(d.users[0].train.size() == 8);
  CHECK(d.users[0].valid.item >= 0);
  CHECK(d.users[0].test.item >= 0);
  CHECK(d.users[0].rated.size() == 10);
}

TEST_CASE("three-user toy file splits as enumerated by hand") {
  // User 1: 12 ratings; items 1..12 at t=1..12, ratings alternate 5,3 so the
  //         positives are items 1,3,5,7,9,11 -> test 11, valid 9, train 1,3,5,7.
  // User 2: 10 ratings, only two of them positive -> excluded.
  // User 3: 11 ratings, all positive, two share the last timestamp: items 20
  //         and 21 at t=50 -> (timestamp, item) order puts 21 last, so test 21,
  //         valid 20, train the nine older items.
  std::string ratings;
  for (int k = 1; k <= 12; ++k) ratings += fmt::format("1::{}::{}::{}\n", k, k % 2 == 1 ? 5 : 3, k);
  for (int k = 1; k <= 10; ++k) ratings += fmt::format("2::{}::{}::{}\n", k, k <= 2 ? 4 : 2, k);
  for (int k = 0; k < 9; ++k) ratings += fmt::format("3::{}::4::{}\n", 30 + k, 10 + k);
  ratings += "3::21::5::50\n3::20::5::50\n";
  const std::string users = "1::F::1::10::0\n2::M::25::3::0\n3::M::56::20::0\n";
  const auto d = split_text(ratings, users);

  REQUIRE(d.num_users == 2);
  CHECK(d.user_ids == std::vector<std::int64_t>{1, 3});
  auto raw = [&](int dense) { return d.item_ids[static_cast<std::size_t>(dense)]; };

  const auto& u1 = d.users[0];
  CHECK(raw(u1.test.item) == 11);
  CHECK(raw(u1.valid.item) == 9);
  REQUIRE(u1.train.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(raw(u1.train[k].item) == static_cast<std::int64_t>(2 * k + 1));
  CHECK(u1.rated.size() == 12);  // negatives exclude rated non-likes too

  const auto& u3 = d.users[1];
  CHECK(raw(u3.test.item) == 21);
  CHECK(raw(u3.valid.item) == 20);
  CHECK(u3.train.size() == 9);
  CHECK(d.train_size() == 13);
  CHECK(d.attributes.code(1, 1) == 6);
  CHECK(d.attributes.code(1, 2) == 20);
}

TEST_CASE("the training window keeps the newest positives") {
  const std::string users = "1::F::1::10::0\n";
  const auto d = split_text(user_ratings(1, 20, 5), users, SplitOptions{10, 5});
  const auto& h = d.users[0];
  REQUIRE(h.train.size() == 5);
  CHECK(h.train.front().timestamp == 1013);
  CHECK(h.train.back().timestamp == 1017);
}

TEST_CASE("split invariants hold on every retained user") {
  std::string ratings, users;
  for (int u = 1; u <= 40; ++u) {
    users += fmt::format("{}::{}::18::{}::0\n", u, u % 2 ? "F" : "M", u % 21);
    const int n = 5 + (u * 7) % 20;
    for (int k = 0; k < n; ++k) {
      const int ts = (k * 37 + u * 11) % 23;  // shuffled, with repeats
      ratings += fmt::format("{}::{}::{}::{}\n", u, 1 + (k * 13 + u) % 60, 1 + (k + u) % 5, ts);
    }
  }
  const auto raw = parse_movielens_text(ratings, users);
  std::map<std::int64_t, int> counts;
  for (const auto& r : raw.ratings) ++counts[r.user_id];
  const auto d = filter_and_split(binarize(raw.ratings), raw.attributes);
  REQUIRE(d.num_users > 0);
  for (int u = 0; u < d.num_users; ++u) {
    const auto& h = d.users[static_cast<std::size_t>(u)];
    CHECK(counts[d.user_ids[static_cast<std::size_t>(u)]] >= 10);
    for (const auto& t : h.train) CHECK(t.timestamp <= h.valid.timestamp);
    CHECK(h.valid.timestamp <= h.test.timestamp);
  }
}

TEST_CASE("serialization is byte-identical across runs and round-trips") {
  std::string ratings;
  for (int u = 1; u <= 3; ++u) ratings += user_ratings(u, 12, 4 + u % 2, u, 100 * u);
  const std::string users = "1::F::1::10::0\n2::M::25::3::0\n3::M::56::20::0\n";
  const auto a = split_text(ratings, users).serialize();
  const auto b = split_text(ratings, users).serialize();
  CHECK(a == b);
  const auto back = InteractionDataset::deserialize(a);
  CHECK(back.serialize() == a);
  CHECK_THROWS_AS(InteractionDataset::deserialize(a.substr(0, a.size() / 2)), DataError);
}

TEST_CASE("missing input files raise a data error naming the file") {
  const auto dir = std::filesystem::temp_directory_path() / "afrl_missing_inputs";
  std::filesystem::create_directories(dir);
  write_file(dir / "ratings.dat", "1::1::5::1\n");
  CHECK_THROWS_WITH_AS(parse_movielens(dir / "ratings.dat", dir / "users.dat"), doctest::Contains("users.dat"),
                       DataError);
}
