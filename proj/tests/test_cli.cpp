#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <string>

#include <fmt/core.h>
#include <json.hpp>

#include "afrl/evaluation.hpp"
#include "afrl/io.hpp"

namespace fs = std::filesystem;
using namespace afrl;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(AFRL_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Result r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("afrl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small but complete run settings for the synthetic corpus.
fs::path write_config(const fs::path& dir) {
  const auto path = dir / "experiment.ini";
  write_file(path, R"([base]
dim = 16
lr = 0.01
max_epochs = 30
early_stop_patience = 5
[afrl]
lr = 0.001
encoder_layers = 2
batch_size = 128
max_epochs = 3
early_stop_patience = 0
[probe]
max_epochs = 40
)");
  return path;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "manifest.json")); }

}  // namespace

TEST_CASE("prepare is idempotent and reports missing inputs") {
  const auto dir = fresh_dir("prepare");
  REQUIRE(run(fmt::format("synth --quiet --data-dir {} --users 80 --items 60", (dir / "raw").string())).code == 0);
  const auto out = dir / "artifacts";
  const auto args = fmt::format("prepare --quiet --data-dir {} --out {}", (dir / "raw").string(), out.string());
  REQUIRE(run(args).code == 0);
  const auto first = sha256_file(out / "data" / "dataset.bin");
  const auto first_manifest = read_file(out / "data" / "manifest.json");
  REQUIRE(run(args).code == 0);
  CHECK(sha256_file(out / "data" / "dataset.bin") == first);
  CHECK(read_file(out / "data" / "manifest.json") == first_manifest);
  CHECK(manifest(out / "data")["outputs"]["dataset.bin"] == first);

  fs::remove(dir / "raw" / "users.dat");
  const auto missing = run(args);
  CHECK(missing.code == 1);
  CHECK(missing.output.find("users.dat") != std::string::npos);

  const auto env = run(fmt::format("prepare --quiet --out {}", out.string()));
  CHECK(env.code == 1);
}

TEST_CASE("a three-user fixture yields a three-user manifest") {
  const auto dir = fresh_dir("fixture");
  std::string ratings;
  for (int u = 1; u <= 3; ++u)
    for (int k = 0; k < 10 + u; ++k) ratings += fmt::format("{}::{}::{}::{}\n", u, 100 + k, k % 3 ? 5 : 2, 1000 * u + k);
  write_file(dir / "raw" / "ratings.dat", ratings);
  write_file(dir / "raw" / "users.dat", "1::F::1::10::0\n2::M::25::3::0\n3::M::56::20::0\n");
  const auto r = run(fmt::format("prepare --quiet --data-dir {} --out {}", (dir / "raw").string(), (dir / "a").string()));
  REQUIRE(r.code == 0);
  const auto m = manifest(dir / "a" / "data");
  CHECK(m["dataset"]["num_users"] == 3);
  CHECK(m["dataset"]["num_items"] == 13);
  CHECK(m["inputs"]["users"]["sha256"] == sha256_file(dir / "raw" / "users.dat"));
  CHECK(m["hash"].get<std::string>().size() == 64);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("").code == 1);
  CHECK(run("train-afrl --no-such-flag").code == 1);
  CHECK(run("plot --quiet").code == 1);
  CHECK(run("plot --quiet --csv /nonexistent/metrics.csv").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("evaluate without a trained model fails cleanly") {
  const auto dir = fresh_dir("untrained");
  REQUIRE(run(fmt::format("synth --quiet --data-dir {} --users 60 --items 120", (dir / "raw").string())).code == 0);
  const auto out = dir / "artifacts";
  REQUIRE(run(fmt::format("prepare --quiet --data-dir {} --out {}", (dir / "raw").string(), out.string())).code == 0);
  auto r = run(fmt::format("evaluate --quiet --out {}", out.string()));
  CHECK(r.code == 2);
  CHECK(r.output.find("train-base") != std::string::npos);
  REQUIRE(run(fmt::format("train-base --quiet --out {} --epochs 2", out.string())).code == 0);
  r = run(fmt::format("evaluate --quiet --out {} --model {}", out.string(), (out / "afrl" / "nothing").string()));
  CHECK(r.code == 2);
  CHECK(r.output.find("train-afrl") != std::string::npos);
}

TEST_CASE("the synthetic pipeline runs end to end in under five minutes") {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = fresh_dir("pipeline");
  const auto cfg = write_config(dir);
  const auto out = dir / "artifacts";
  const auto common = fmt::format("--quiet --out {} --config {}", out.string(), cfg.string());
  REQUIRE(run(fmt::format("synth --quiet --data-dir {}", (dir / "raw").string())).code == 0);
  REQUIRE(run(fmt::format("prepare {} --data-dir {}", common, (dir / "raw").string())).code == 0);
  REQUIRE(run(fmt::format("train-base {}", common)).code == 0);
  REQUIRE(run(fmt::format("evaluate {} --base", common)).code == 0);
  REQUIRE(run(fmt::format("train-afrl {} --lambda 1", common)).code == 0);
  const auto eval = run(fmt::format("evaluate {} --lambda 1", common));
  REQUIRE(eval.code == 0);

  const auto run_dir = out / "eval" / "b0.1_l1_s2024_full";
  const auto rows = parse_metrics_csv(read_file(run_dir / "metrics.csv"));
  CHECK(rows.size() == 8);
  const std::string hash = manifest(run_dir)["hash"];
  for (const auto& r : rows) {
    CHECK(r.manifest == hash);
    CHECK(r.error.empty());
    CHECK(r.report.ndcg_at_10 <= r.report.hit_at_10);
  }
  for (const auto& line : std::vector<std::string>{read_file(run_dir / "metrics.jsonl")}) {
    CHECK(line.find(hash) != std::string::npos);
  }
  const auto base_rows = parse_metrics_csv(read_file(out / "eval" / "base" / "metrics.csv"));
  CHECK(base_rows.size() == 8);

  // A one-lambda sweep reproduces train-afrl followed by evaluate.
  const auto before = read_file(run_dir / "metrics.csv");
  const auto sweep = run(fmt::format("sweep {} --lambdas 1", common));
  REQUIRE(sweep.code == 0);
  const auto sweep_csv = read_file(out / "eval" / "sweep_b0.1_s2024_full.csv");
  CHECK(sweep_csv == before);

  // Resuming a finished run with more epochs continues from the saved state.
  REQUIRE(run(fmt::format("train-afrl {} --lambda 1 --epochs 4 --resume", common)).code == 0);
  CHECK(manifest(out / "afrl" / "b0.1_l1_s2024_full")["epochs"] == 4);

  REQUIRE(run(fmt::format("ablate {} --lambda 1 --variants full,no_z_ui", common)).code == 0);
  CHECK(parse_metrics_csv(read_file(out / "eval" / "ablation_b0.1_l1_s2024.csv")).size() == 16);

  const auto plot = run(fmt::format("plot {} --csv {}", common, (out / "eval" / "sweep_b0.1_s2024_full.csv").string()));
  REQUIRE(plot.code == 0);
  CHECK(fs::exists(out / "plots" / "pareto_G_A.svg"));
  CHECK(fs::exists(out / "plots" / "manifest.json"));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("pipeline took " << seconds << " s");
  CHECK(seconds < 300.0);
}

TEST_CASE("stale upstream artifacts are refused unless forced") {
  const auto dir = fresh_dir("stale");
  const auto cfg = write_config(dir);
  const auto out = dir / "artifacts";
  const auto common = fmt::format("--quiet --out {} --config {} --epochs 1", out.string(), cfg.string());
  REQUIRE(run(fmt::format("synth --quiet --data-dir {} --users 60 --items 120", (dir / "raw").string())).code == 0);
  REQUIRE(run(fmt::format("prepare {} --data-dir {}", common, (dir / "raw").string())).code == 0);
  REQUIRE(run(fmt::format("train-base {}", common)).code == 0);
  REQUIRE(run(fmt::format("train-afrl {}", common)).code == 0);

  // A shorter training window changes the dataset but not its users or items.
  write_file(dir / "narrow.ini", read_file(cfg) + "[data]\nwindow = 3\n");
  REQUIRE(run(fmt::format("prepare --quiet --out {} --config {} --data-dir {}", out.string(), (dir / "narrow.ini").string(),
                          (dir / "raw").string()))
              .code == 0);
  auto r = run(fmt::format("train-afrl {}", common));
  CHECK(r.code == 2);
  CHECK(r.output.find("stale upstream") != std::string::npos);
  CHECK(run(fmt::format("evaluate {}", common)).code == 2);
  CHECK(run(fmt::format("train-afrl {} --force", common)).code == 0);

  // Retraining the base invalidates the AFRL run.
  REQUIRE(run(fmt::format("train-base {}", common)).code == 0);
  r = run(fmt::format("evaluate {}", common));
  CHECK(r.code == 2);
  CHECK(r.output.find("stale upstream") != std::string::npos);
}

TEST_CASE("plots reject empty input and bracket the data") {
  const auto dir = fresh_dir("plot");
  const auto out = dir / "artifacts";
  write_file(dir / "empty.csv", metrics_csv({}));
  CHECK(run(fmt::format("plot --quiet --out {} --csv {}", out.string(), (dir / "empty.csv").string())).code == 2);
  write_file(dir / "blank.csv", "");
  CHECK(run(fmt::format("plot --quiet --out {} --csv {}", out.string(), (dir / "blank.csv").string())).code == 2);

  ResultRow row;
  row.model = "afrl";
  row.report.requirement = "G";
  row.report.auc = 0.61;
  row.report.ndcg_at_10 = 0.33;
  row.report.hit_at_10 = 0.5;
  std::vector<ResultRow> rows{row};
  write_file(dir / "one.csv", metrics_csv(rows));
  REQUIRE(run(fmt::format("plot --quiet --out {} --csv {}", out.string(), (dir / "one.csv").string())).code == 0);
  REQUIRE(fs::exists(out / "plots" / "pareto_G.svg"));

  for (double auc : {0.52, 0.71, 0.58}) {
    row.report.auc = auc;
    row.report.ndcg_at_10 = 0.2 + auc / 4;
    rows.push_back(row);
  }
  write_file(dir / "many.csv", metrics_csv(rows));
  REQUIRE(run(fmt::format("plot --quiet --out {} --csv {}", out.string(), (dir / "many.csv").string())).code == 0);
  const auto svg = read_file(out / "plots" / "pareto_G.svg");
  auto attr = [&](const std::string& name) {
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex(name + "=\"([^\"]+)\"")));
    return std::stod(m[1]);
  };
  CHECK(attr("data-x-min") <= 0.52);
  CHECK(attr("data-x-max") >= 0.71);
  CHECK(attr("data-y-min") <= 0.33);
  CHECK(attr("data-y-max") >= 0.2 + 0.71 / 4);
  CHECK(attr("data-x-min") < attr("data-x-max"));
}

TEST_CASE("oracle verification passes and writes its table") {
  const auto dir = fresh_dir("oracle");
  const auto r = run(fmt::format("verify-oracle --quiet --out {} --instances 10", dir.string()));
  CHECK(r.code == 0);
  const auto csv = read_file(dir / "eval" / "oracle" / "oracle.csv");
  CHECK(csv.find(",0\n") == std::string::npos);
  CHECK(csv.find("em_monotonicity") != std::string::npos);

  write_file(dir / "joint.txt", "sizes 2 2\n0.5 0\n0 0.5\n");
  const auto j = run(fmt::format("verify-oracle --quiet --joint {}", (dir / "joint.txt").string()));
  CHECK(j.code == 0);
  CHECK(j.output.find("0.69314718") != std::string::npos);
}
