// afrl: data preparation, base and AFRL training, evaluation, sweeps,
// ablations, oracle checks and plots. Exit codes: 0 ok, 1 usage, 2 data,
// 3 training or verification failure.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "afrl/aggregation.hpp"
#include "afrl/base_recommender.hpp"
#include "afrl/data.hpp"
#include "afrl/evaluation.hpp"
#include "afrl/io.hpp"
#include "afrl/mi_oracle.hpp"
#include "afrl/plot.hpp"
#include "afrl/synthetic.hpp"
#include "afrl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace afrl;

namespace {

constexpr const char* kDataRootEnv = "AFRL_DATA_ROOT";

struct Options {
  fs::path out = "artifacts";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::string requirement = "all";
  std::string variant = "full";
  int jobs = 1;
  bool force = false;
  bool quiet = false;

  std::string data_dir;
  std::string model;
  std::string lambdas = "100,10,1,0.1,0.01,0.001";
  std::string variants = "full,no_z_ui,no_z_u0";
  std::string csv;
  std::string joint;
  bool resume = false;
  bool base_only = false;
  int instances = 100;
  int synth_users = 300;
  int synth_items = 200;
};

struct Layout {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path dataset() const { return data() / "dataset.bin"; }
  fs::path base() const { return root / "base"; }
  fs::path embeddings() const { return base() / "embeddings.ckpt"; }
  fs::path afrl() const { return root / "afrl"; }
  fs::path eval() const { return root / "eval"; }
  fs::path plots() const { return root / "plots"; }
};

ExperimentConfig resolve_config(const Options& o) {
  auto cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) {
    cfg.base.seed = *o.seed;
    cfg.afrl.seed = *o.seed;
  }
  if (o.beta) cfg.afrl.beta = *o.beta;
  if (o.lambda) cfg.afrl.lambda = *o.lambda;
  if (o.epochs) {
    cfg.base.max_epochs = *o.epochs;
    cfg.afrl.max_epochs = *o.epochs;
  }
  cfg.afrl.variant = parse_variant(o.variant);
  cfg.afrl.validate();
  return cfg;
}

ProbeOptions probe_options(const ExperimentConfig& cfg) {
  ProbeOptions p;
  p.max_epochs = cfg.probe_max_epochs;
  p.patience = cfg.probe_patience;
  p.learning_rate = cfg.probe_learning_rate;
  return p;
}

// The manifest hash covers everything that determines a run's outputs.
json make_manifest(const std::string& command, const std::map<std::string, fs::path>& inputs, const json& config) {
  json in = json::object();
  for (const auto& [name, path] : inputs) in[name] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
  json m{{"command", command}, {"inputs", in}, {"config", config}, {"format", "afrl-manifest-v1"}};
  m["hash"] = sha256_hex(m.dump());
  return m;
}

void write_manifest(const fs::path& dir, json manifest, const std::vector<fs::path>& outputs) {
  json out = json::object();
  for (const auto& p : outputs) out[p.filename().string()] = sha256_file(p);
  manifest["outputs"] = out;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw DataError(fmt::format("manifest '{}' is missing; run the upstream step first", path.string()));
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("manifest '{}' is malformed: {}", path.string(), e.what()));
  }
}

void require_file(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw DataError(fmt::format("'{}' does not exist; run `afrl {}` first", path.string(), producer));
  }
}

// Refuses when an upstream artifact changed after a downstream one recorded it.
void check_fresh(const json& manifest, const std::string& input, const fs::path& current, bool force) {
  const auto recorded = manifest.value("inputs", json::object()).value(input, json::object()).value("sha256", "");
  const auto actual = sha256_file(current);
  if (recorded == actual) return;
  const auto msg = fmt::format("stale upstream: '{}' changed since it was recorded ({} vs {}); rerun the downstream "
                               "step or pass --force",
                               current.string(), recorded.substr(0, 12), actual.substr(0, 12));
  if (!force) throw DataError(msg);
  spdlog::warn("{} (continuing because of --force)", msg);
}

std::string run_name(const TrainingConfig& c) {
  return fmt::format("b{:g}_l{:g}_s{}_{}", c.beta, c.lambda, c.seed, variant_name(c.variant));
}

std::vector<FairnessRequirement> requirements_from(const std::string& text, const AttributeTable& attrs) {
  if (text == "all") return all_requirements(attrs.num_attributes());
  std::vector<FairnessRequirement> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(FairnessRequirement::parse(item, attrs.short_names, attrs.names));
  if (out.empty()) throw UsageError("no requirement given");
  return out;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("'{}' is not a number", item));
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Options& o) {
  if (o.data_dir.empty()) throw UsageError("synth needs --data-dir");
  SyntheticOptions s;
  s.num_users = o.synth_users;
  s.num_items = o.synth_items;
  // Leave every user unrated items to sample negatives from.
  s.max_ratings = std::min(s.max_ratings, s.num_items / 2);
  s.min_ratings = std::min(s.min_ratings, s.max_ratings);
  if (o.seed) s.seed = *o.seed;
  write_synthetic(o.data_dir, s);
  spdlog::info("wrote synthetic ratings.dat and users.dat to {}", o.data_dir);
  return 0;
}

int cmd_prepare(const Options& o, const Layout& L) {
  std::string dir = o.data_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv(kDataRootEnv)) dir = env;
  }
  if (dir.empty()) throw UsageError(fmt::format("prepare needs --data-dir or ${}", kDataRootEnv));
  const fs::path ratings = fs::path(dir) / "ratings.dat";
  const fs::path users = fs::path(dir) / "users.dat";
  for (const auto& p : {ratings, users}) {
    if (!fs::exists(p)) throw UsageError(fmt::format("input file '{}' does not exist", p.string()));
  }
  const auto cfg = resolve_config(o);
  const json config{{"min_count", cfg.split.min_count}, {"window", cfg.split.window}};
  const auto manifest = make_manifest("prepare", {{"ratings", ratings}, {"users", users}}, config);
  const auto raw = parse_movielens(ratings, users);
  const auto data = filter_and_split(binarize(raw.ratings), raw.attributes, cfg.split);
  save_dataset(data, L.dataset());
  auto m = manifest;
  m["dataset"] = dataset_manifest(data, sha256_file(L.dataset()));
  write_manifest(L.data(), m, {L.dataset()});
  std::cout << fmt::format("prepared {} users, {} items, {} training positives -> {}\n", data.num_users, data.num_items,
                           data.train_size(), L.dataset().string());
  return 0;
}

int cmd_train_base(const Options& o, const Layout& L) {
  require_file(L.dataset(), "prepare");
  const auto cfg = resolve_config(o);
  const auto data = load_dataset(L.dataset());
  const auto manifest = make_manifest("train-base", {{"dataset", L.dataset()}}, cfg.base.to_json());
  const std::string hash = manifest["hash"];
  std::string progress;
  const auto result = train_base(data, cfg.base, [&](const BaseEpochLog& log) {
    json rec{{"manifest", hash},        {"epoch", log.epoch},
             {"loss", log.loss},        {"valid_ndcg_at_10", log.valid_ndcg_at_10},
             {"valid_hit_at_10", log.valid_hit_at_10}};
    progress += rec.dump() + "\n";
    spdlog::info("base epoch {}: loss {:.5f} valid N@10 {:.4f}", log.epoch, log.loss, log.valid_ndcg_at_10);
  });
  save_embeddings(result.space, cfg.base.to_json(), L.embeddings());
  write_file(L.base() / "progress.jsonl", progress);
  auto m = manifest;
  m["best_epoch"] = result.best_epoch;
  m["digest"] = result.space.digest();
  write_manifest(L.base(), m, {L.embeddings(), L.base() / "progress.jsonl"});
  std::cout << fmt::format("base model: best epoch {} -> {}\n", result.best_epoch, L.embeddings().string());
  return 0;
}

int cmd_train_afrl(const Options& o, const Layout& L) {
  require_file(L.dataset(), "prepare");
  require_file(L.embeddings(), "train-base");
  check_fresh(read_manifest(L.base()), "dataset", L.dataset(), o.force);
  const auto cfg = resolve_config(o);
  const auto data = load_dataset(L.dataset());
  const auto space = load_embeddings(L.embeddings());
  const auto dir = L.afrl() / run_name(cfg.afrl);
  const auto manifest =
      make_manifest("train-afrl", {{"dataset", L.dataset()}, {"base", L.embeddings()}}, cfg.afrl.to_json());
  const std::string hash = manifest["hash"];
  const auto state_path = dir / "trainer_state.ckpt";
  const auto model_path = dir / "model.ckpt";

  TrainerState state;
  std::string progress;
  if (o.resume && fs::exists(state_path)) {
    state = load_trainer_state(state_path);
    if (state.model.base_digest != space.digest() && !o.force) {
      throw DataError("stale upstream: trainer state was built on different base embeddings; pass --force to continue");
    }
    state.model.config.max_epochs = cfg.afrl.max_epochs;
    state.best.config.max_epochs = cfg.afrl.max_epochs;
    if (fs::exists(dir / "progress.jsonl")) progress = read_file(dir / "progress.jsonl");
    spdlog::info("resuming {} at epoch {}", dir.string(), state.epoch);
  } else {
    state = init_trainer(data, space, cfg.afrl);
  }
  TrainHooks hooks;
  hooks.failure_checkpoint = dir / "last_good.ckpt";
  hooks.on_epoch = [&](const EpochLog& log) {
    auto rec = log.to_json();
    rec["manifest"] = hash;
    progress += rec.dump() + "\n";
    spdlog::info("afrl epoch {}: rec {:.5f} valid N@10 {:.4f}", log.epoch, log.recommendation, log.valid_ndcg_at_10);
  };
  train_epochs(state, data, space, cfg.afrl.max_epochs, hooks);
  save_trainer_state(state, state_path);
  save_checkpoint(state.epoch > 0 ? state.best : state.model, model_path);
  write_file(dir / "progress.jsonl", progress);
  auto m = manifest;
  m["epochs"] = state.epoch;
  m["best_score"] = state.best_score;
  write_manifest(dir, m, {model_path, state_path, dir / "progress.jsonl"});
  std::cout << fmt::format("AFRL model after {} epochs -> {}\n", state.epoch, model_path.string());
  return 0;
}

int cmd_evaluate(const Options& o, const Layout& L) {
  require_file(L.dataset(), "prepare");
  require_file(L.embeddings(), "train-base");
  check_fresh(read_manifest(L.base()), "dataset", L.dataset(), o.force);
  const auto cfg = resolve_config(o);
  const auto data = load_dataset(L.dataset());
  const auto space = load_embeddings(L.embeddings());
  const auto reqs = requirements_from(o.requirement, data.attributes);
  EvaluationOptions eval;
  eval.probe = probe_options(cfg);
  eval.num_negatives = cfg.afrl.eval_negatives;

  std::string name;
  std::map<std::string, fs::path> inputs{{"dataset", L.dataset()}, {"base", L.embeddings()}};
  std::optional<AfrlModel> model;
  if (o.base_only) {
    name = "base";
  } else {
    const fs::path run = o.model.empty() ? L.afrl() / run_name(cfg.afrl) : fs::path(o.model);
    const auto model_path = run / "model.ckpt";
    require_file(model_path, "train-afrl");
    check_fresh(read_manifest(run), "base", L.embeddings(), o.force);
    model = load_checkpoint(model_path);
    if (model->base_digest != space.digest() && !o.force) {
      throw DataError("stale upstream: model was trained on different base embeddings; pass --force to evaluate anyway");
    }
    inputs["model"] = model_path;
    name = run.filename().string();
  }
  const auto dir = L.eval() / name;
  json config{{"requirement", o.requirement}, {"eval_negatives", eval.num_negatives},
              {"probe", {{"max_epochs", eval.probe.max_epochs}, {"patience", eval.probe.patience},
                         {"learning_rate", eval.probe.learning_rate}}}};
  const auto manifest = make_manifest("evaluate", inputs, config);
  std::vector<ResultRow> rows;
  std::string jsonl;
  for (const auto& req : reqs) {
    ResultRow row;
    row.manifest = manifest["hash"];
    if (model) {
      row.model = "afrl";
      row.variant = std::string(variant_name(model->config.variant));
      row.beta = model->config.beta;
      row.lambda = model->config.lambda;
      row.seed = model->config.seed;
      row.report = evaluate_embeddings(fair_embeddings(*model, space.users, req), space.items, data, req, eval);
    } else {
      row.model = "base";
      row.seed = cfg.base.seed;
      row.report = evaluate_embeddings(space.users, space.items, data, req, eval);
    }
    spdlog::info("{} [{}]: AUC {} N@10 {:.4f} H@10 {:.4f}", name, row.report.requirement,
                 row.report.auc ? fmt::format("{:.4f}", *row.report.auc) : "n/a", row.report.ndcg_at_10,
                 row.report.hit_at_10);
    jsonl += row.to_json().dump() + "\n";
    rows.push_back(std::move(row));
  }
  write_file(dir / "metrics.csv", metrics_csv(rows));
  write_file(dir / "metrics.jsonl", jsonl);
  write_manifest(dir, manifest, {dir / "metrics.csv", dir / "metrics.jsonl"});
  std::cout << metrics_csv(rows);
  return 0;
}

// Runs each task's command lines in order, at most `jobs` tasks at a time.
// Returns one exit status per task (the first non-zero status, or 0).
std::vector<int> run_tasks(const std::vector<std::vector<std::vector<std::string>>>& tasks, int jobs) {
  const std::string self = fs::read_symlink("/proc/self/exe").string();
  std::vector<int> status(tasks.size(), 0);
  std::vector<std::size_t> next_step(tasks.size(), 0);
  std::map<pid_t, std::size_t> running;
  std::deque<std::size_t> pending;
  for (std::size_t t = 0; t < tasks.size(); ++t) pending.push_back(t);

  auto launch = [&](std::size_t t) {
    const auto& args = tasks[t][next_step[t]];
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(self.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const pid_t pid = fork();
    if (pid < 0) throw TrainingError("fork failed");
    if (pid == 0) {
      execv(self.c_str(), argv.data());
      _exit(127);
    }
    running[pid] = t;
  };

  while (!pending.empty() || !running.empty()) {
    while (!pending.empty() && static_cast<int>(running.size()) < std::max(1, jobs)) {
      launch(pending.front());
      pending.pop_front();
    }
    int ws = 0;
    const pid_t pid = waitpid(-1, &ws, 0);
    if (pid < 0) break;
    const auto t = running.at(pid);
    running.erase(pid);
    const int code = WIFEXITED(ws) ? WEXITSTATUS(ws) : 128;
    if (code != 0) {
      status[t] = code;
    } else if (++next_step[t] < tasks[t].size()) {
      launch(t);
    }
  }
  return status;
}

std::vector<std::string> common_flags(const Options& o) {
  std::vector<std::string> f{"--out", o.out.string(), "--requirement", o.requirement};
  if (!o.config.empty()) f.insert(f.end(), {"--config", o.config});
  if (o.seed) f.insert(f.end(), {"--seed", std::to_string(*o.seed)});
  if (o.beta) f.insert(f.end(), {"--beta", fmt::format("{:.17g}", *o.beta)});
  if (o.epochs) f.insert(f.end(), {"--epochs", std::to_string(*o.epochs)});
  if (o.force) f.push_back("--force");
  if (o.quiet) f.push_back("--quiet");
  return f;
}

// Concatenates per-run metrics; runs that failed contribute one error row each.
int collect(const std::vector<std::pair<std::string, fs::path>>& runs, const std::vector<int>& status,
            const std::vector<ResultRow>& error_templates, const fs::path& out_csv) {
  std::vector<ResultRow> rows;
  int failures = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto csv = runs[k].second / "metrics.csv";
    if (status[k] == 0 && fs::exists(csv)) {
      for (auto& r : parse_metrics_csv(read_file(csv))) rows.push_back(std::move(r));
    } else {
      ++failures;
      auto r = error_templates[k];
      r.error = fmt::format("run {} failed with exit code {}", runs[k].first, status[k]);
      rows.push_back(std::move(r));
    }
  }
  write_file(out_csv, metrics_csv(rows));
  std::cout << metrics_csv(rows);
  return failures;
}

int cmd_sweep(const Options& o, const Layout& L) {
  require_file(L.embeddings(), "train-base");
  const auto cfg = resolve_config(o);
  const auto lambdas = parse_list(o.lambdas);
  std::vector<std::vector<std::vector<std::string>>> tasks;
  std::vector<std::pair<std::string, fs::path>> runs;
  std::vector<ResultRow> templates;
  for (double lambda : lambdas) {
    auto c = cfg.afrl;
    c.lambda = lambda;
    auto flags = common_flags(o);
    flags.insert(flags.end(), {"--lambda", fmt::format("{:.17g}", lambda), "--variant", o.variant});
    auto train = std::vector<std::string>{"train-afrl"};
    train.insert(train.end(), flags.begin(), flags.end());
    auto eval = std::vector<std::string>{"evaluate"};
    eval.insert(eval.end(), flags.begin(), flags.end());
    tasks.push_back({train, eval});
    runs.emplace_back(run_name(c), L.eval() / run_name(c));
    ResultRow t;
    t.model = "afrl";
    t.variant = std::string(variant_name(c.variant));
    t.beta = c.beta;
    t.lambda = lambda;
    t.seed = c.seed;
    t.report.requirement = o.requirement;
    templates.push_back(t);
  }
  const auto status = run_tasks(tasks, o.jobs);
  const auto out = L.eval() / fmt::format("sweep_b{:g}_s{}_{}.csv", cfg.afrl.beta, cfg.afrl.seed, o.variant);
  const int failures = collect(runs, status, templates, out);
  spdlog::info("sweep written to {} ({} of {} runs failed)", out.string(), failures, runs.size());
  return failures == static_cast<int>(runs.size()) ? 3 : 0;
}

int cmd_ablate(const Options& o, const Layout& L) {
  require_file(L.embeddings(), "train-base");
  const auto cfg = resolve_config(o);
  std::vector<std::vector<std::vector<std::string>>> tasks;
  std::vector<std::pair<std::string, fs::path>> runs;
  std::vector<ResultRow> templates;
  std::stringstream ss(o.variants);
  std::string v;
  while (std::getline(ss, v, ',')) {
    auto c = cfg.afrl;
    c.variant = parse_variant(v);
    auto flags = common_flags(o);
    flags.insert(flags.end(), {"--lambda", fmt::format("{:.17g}", c.lambda), "--variant", v});
    auto train = std::vector<std::string>{"train-afrl"};
    train.insert(train.end(), flags.begin(), flags.end());
    auto eval = std::vector<std::string>{"evaluate"};
    eval.insert(eval.end(), flags.begin(), flags.end());
    tasks.push_back({train, eval});
    runs.emplace_back(run_name(c), L.eval() / run_name(c));
    ResultRow t;
    t.model = "afrl";
    t.variant = v;
    t.beta = c.beta;
    t.lambda = c.lambda;
    t.seed = c.seed;
    t.report.requirement = o.requirement;
    templates.push_back(t);
  }
  if (tasks.empty()) throw UsageError("ablate needs at least one variant");
  const auto status = run_tasks(tasks, o.jobs);
  const auto out = L.eval() / fmt::format("ablation_b{:g}_l{:g}_s{}.csv", cfg.afrl.beta, cfg.afrl.lambda, cfg.afrl.seed);
  const int failures = collect(runs, status, templates, out);
  return failures > 0 ? 3 : 0;
}

int cmd_verify_oracle(const Options& o, const Layout& L) {
  if (!o.joint.empty()) {
    if (!fs::exists(o.joint)) throw UsageError(fmt::format("joint file '{}' does not exist", o.joint));
    const auto j = mi::parse_joint(read_file(o.joint));
    if (j.num_vars() < 2) throw DataError("joint needs at least two variables");
    std::cout << fmt::format("I(X0;X1) = {:.12g} nats\n", mi::exact_mi(j, 0, 1));
    return 0;
  }
  const std::uint64_t seed = o.seed.value_or(2024);
  struct Check {
    std::string name;
    int instances = 0;
    double worst = 0.0;  // the quantity compared against the tolerance
    double tolerance = 0.0;
    bool passed = true;
  };
  std::vector<Check> checks;

  Check em{"em_monotonicity", o.instances, 0.0, 1e-9};
  for (int s = 0; s < o.instances; ++s) {
    Rng rng(seed + static_cast<std::uint64_t>(s));
    const auto inst = mi::random_instance(8, 2, rng);
    mi::QuantizedEncoder enc{std::vector<int>(8), 4};
    std::uniform_int_distribution<int> pick(0, 3);
    for (auto& c : enc.code) c = pick(rng);
    const auto trace = mi::verify_em_monotonicity(inst, enc, 20);
    for (std::size_t t = 1; t < trace.size(); ++t) em.worst = std::max(em.worst, trace[t - 1] - trace[t]);
  }
  em.passed = em.worst <= em.tolerance;
  checks.push_back(em);

  Check opt{"informativeness_optimal", o.instances, 0.0, 1e-9};
  Check lossy{"informativeness_lossy_positive", o.instances, 1e300, 0.0};
  Check dep{"informativeness_dependent_positive", o.instances, 1e300, 0.0};
  for (int s = 0; s < o.instances; ++s) {
    Rng rng(seed + 1000 + static_cast<std::uint64_t>(s));
    const auto base = mi::grouped_instance(8, 3, 3, rng);
    opt.worst = std::max(opt.worst, mi::verify_informativeness(mi::optimal_informativeness_instance(base, rng)));
    lossy.worst = std::min(lossy.worst, mi::verify_informativeness(mi::lossy_informativeness_instance(base, rng)));
    dep.worst = std::min(dep.worst, mi::verify_informativeness(mi::dependent_informativeness_instance(base, rng)));
  }
  opt.passed = opt.worst <= opt.tolerance;
  lossy.passed = lossy.worst > 0.0;
  dep.passed = dep.worst > 0.0;
  checks.insert(checks.end(), {opt, lossy, dep});

  Check beta{"beta_regime_monotone", o.instances, 0.0, 1e-9};
  const std::vector<double> betas{1e6, 100, 10, 3, 1, 0.3, 0.1, 0.03, 0.01, 1e-6};
  for (int s = 0; s < std::min(o.instances, 20); ++s) {
    Rng rng(seed + 5000 + static_cast<std::uint64_t>(s));
    const auto inst = mi::random_instance(8, 2, rng);
    const auto curve = mi::beta_regime_curve(inst, betas, 8);
    for (std::size_t k = 1; k < curve.size(); ++k) beta.worst = std::max(beta.worst, curve[k - 1].i_z_u - curve[k].i_z_u);
  }
  beta.instances = std::min(o.instances, 20);
  beta.passed = beta.worst <= beta.tolerance;
  checks.push_back(beta);

  std::string csv = "check,instances,value,tolerance,passed\n";
  bool all = true;
  for (const auto& c : checks) {
    csv += fmt::format("{},{},{:.6g},{:.3g},{}\n", c.name, c.instances, c.worst, c.tolerance, c.passed ? 1 : 0);
    all = all && c.passed;
  }
  const auto dir = L.eval() / "oracle";
  write_file(dir / "oracle.csv", csv);
  write_manifest(dir, make_manifest("verify-oracle", {}, {{"seed", seed}, {"instances", o.instances}}),
                 {dir / "oracle.csv"});
  std::cout << csv;
  return all ? 0 : 3;
}

int cmd_plot(const Options& o, const Layout& L) {
  if (o.csv.empty()) throw UsageError("plot needs --csv");
  if (!fs::exists(o.csv)) throw UsageError(fmt::format("metrics CSV '{}' does not exist", o.csv));
  const auto rows = parse_metrics_csv(read_file(o.csv));
  const auto written = plot_pareto(rows, L.plots());
  write_manifest(L.plots(), make_manifest("plot", {{"metrics", o.csv}}, json::object()), written);
  for (const auto& p : written) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalised fair representation learning: training, evaluation and analysis"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "Artifact root (data, base, afrl, eval, plots)");
    c->add_option("--config", o.config, "key = value config file; flags override it");
    c->add_option("--seed", o.seed, "Random seed");
    c->add_option("--beta", o.beta, "Information-alignment multiplier");
    c->add_option("--lambda", o.lambda, "Adversarial trade-off multiplier");
    c->add_option("--epochs", o.epochs, "Override max_epochs");
    c->add_option("--requirement", o.requirement, "Sensitive attributes, e.g. G+A; comma list or 'all'");
    c->add_option("--variant", o.variant, "full, no_z_ui or no_z_u0");
    c->add_option("--jobs", o.jobs, "Parallel processes for sweep and ablate");
    c->add_flag("--force", o.force, "Proceed even when upstream artifacts are stale");
    c->add_flag("--quiet", o.quiet, "Only log warnings and errors");
  };
  auto* synth = app.add_subcommand("synth", "Write a synthetic ratings.dat/users.dat pair");
  auto* prepare = app.add_subcommand("prepare", "Parse, binarise, filter and split the raw ratings");
  auto* train_base_cmd = app.add_subcommand("train-base", "Train the base BPR matrix factorisation");
  auto* train_afrl_cmd = app.add_subcommand("train-afrl", "Train the fair representation model");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy and fairness metrics per requirement");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one model per lambda");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate aggregator variants");
  auto* oracle = app.add_subcommand("verify-oracle", "Exact mutual-information property checks");
  auto* plot = app.add_subcommand("plot", "Pareto front images from a metrics CSV");
  for (auto* c : {synth, prepare, train_base_cmd, train_afrl_cmd, evaluate_cmd, sweep, ablate, oracle, plot}) add_common(c);
  synth->add_option("--data-dir", o.data_dir, "Output directory")->required();
  synth->add_option("--users", o.synth_users, "Number of users");
  synth->add_option("--items", o.synth_items, "Number of items");
  prepare->add_option("--data-dir", o.data_dir, fmt::format("Directory with ratings.dat and users.dat (default ${})", kDataRootEnv));
  train_afrl_cmd->add_flag("--resume", o.resume, "Continue from the run's trainer state");
  evaluate_cmd->add_option("--model", o.model, "AFRL run directory (default derived from the flags)");
  evaluate_cmd->add_flag("--base", o.base_only, "Evaluate the base embeddings instead");
  sweep->add_option("--lambdas", o.lambdas, "Comma-separated lambda values");
  ablate->add_option("--variants", o.variants, "Comma-separated variants");
  oracle->add_option("--instances", o.instances, "Random instances per check");
  oracle->add_option("--joint", o.joint, "Print I(X0;X1) for a joint table file instead");
  plot->add_option("--csv", o.csv, "Metrics CSV from sweep or evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("afrl"));
  spdlog::set_level(o.quiet ? spdlog::level::warn : spdlog::level::info);
  const Layout L{o.out};
  try {
    if (*synth) return cmd_synth(o);
    if (*prepare) return cmd_prepare(o, L);
    if (*train_base_cmd) return cmd_train_base(o, L);
    if (*train_afrl_cmd) return cmd_train_afrl(o, L);
    if (*evaluate_cmd) return cmd_evaluate(o, L);
    if (*sweep) return cmd_sweep(o, L);
    if (*ablate) return cmd_ablate(o, L);
    if (*oracle) return cmd_verify_oracle(o, L);
    if (*plot) return cmd_plot(o, L);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const TrainingError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  }
  return 1;
}
