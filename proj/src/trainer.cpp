#include "afrl/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "afrl/io.hpp"
#include "afrl/metrics.hpp"

namespace afrl {
namespace {

std::string_view adversary_name(AdversaryMode m) {
  return m == AdversaryMode::confusion ? "confusion" : "nll";
}

AdversaryMode parse_adversary(std::string_view s) {
  if (s == "nll" || s == "negative_log_likelihood") return AdversaryMode::negative_log_likelihood;
  if (s == "confusion") return AdversaryMode::confusion;
  throw UsageError(fmt::format("unknown adversary mode '{}' (expected nll or confusion)", s));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Typed parsing for config values; errors carry the line number.
struct ValueParser {
  int line;
  std::string key;
  std::string value;

  [[noreturn]] void fail(std::string_view expected) const {
    throw UsageError(fmt::format("config line {}: '{}' expects {}, got '{}'", line, key, expected, value));
  }
  double real() const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      fail("a number");
    }
    if (used != value.size() || !std::isfinite(v)) fail("a number");
    return v;
  }
  template <class T>
  T integer() const {
    T v{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) fail("an integer");
    return v;
  }
  bool boolean() const {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("true or false");
  }
};

void write_model(BinaryWriter& w, const AfrlModel& m) {
  m.nets.collaborative.save(w);
  w.put<std::uint64_t>(m.nets.attribute_encoders.size());
  for (std::size_t i = 0; i < m.nets.attribute_encoders.size(); ++i) {
    m.nets.attribute_encoders[i].save(w);
    m.nets.attribute_classifiers[i].save(w);
    m.nets.discriminators[i].save(w);
  }
  m.aggregator.save(w);
}

nlohmann::json model_meta(const AfrlModel& m) {
  return {{"attribute_names", m.attribute_names},
          {"short_names", m.short_names},
          {"cardinalities", m.cardinalities},
          {"config", m.config.to_json()},
          {"base_digest", m.base_digest},
          {"dim", m.dim()}};
}

AfrlModel read_model(BinaryReader& r, const nlohmann::json& meta) {
  AfrlModel m;
  m.nets.collaborative = Mlp::load(r);
  const auto n = r.get<std::uint64_t>();
  if (n > 64) throw DataError("model checkpoint: implausible attribute count");
  for (std::uint64_t i = 0; i < n; ++i) {
    m.nets.attribute_encoders.push_back(Mlp::load(r));
    m.nets.attribute_classifiers.push_back(Mlp::load(r));
    m.nets.discriminators.push_back(Mlp::load(r));
  }
  m.aggregator = Mlp::load(r);
  try {
    m.attribute_names = meta.at("attribute_names").get<std::vector<std::string>>();
    m.short_names = meta.at("short_names").get<std::vector<std::string>>();
    m.cardinalities = meta.at("cardinalities").get<std::vector<int>>();
    m.config = TrainingConfig::from_json(meta.at("config"));
    m.base_digest = meta.at("base_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("model checkpoint metadata is malformed: {}", e.what()));
  }
  if (m.cardinalities.size() != n || m.short_names.size() != n) {
    throw DataError("model checkpoint: attribute metadata does not match the networks");
  }
  return m;
}

double score_with(const AfrlModel& model, const EmbeddingSpace& space, const RankCandidates& cands, double* hit) {
  const auto reqs = all_requirements(model.num_attributes());
  double ndcg = 0.0;
  double hits = 0.0;
  for (const auto& req : reqs) {
    const auto m = rank_metrics(fair_embeddings(model, space.users, req), space.items, cands);
    ndcg += m.ndcg_at_10;
    hits += m.hit_at_10;
  }
  if (hit != nullptr) *hit = hits / static_cast<double>(reqs.size());
  return ndcg / static_cast<double>(reqs.size());
}

// Gradient of the recommendation loss pushed back into one encoder, with the
// masked columns of its block zeroed.
MlpGradient encoder_grad_from_input(const Mlp& encoder, const Mlp::Tape& tape, const Matrix& input_grad, int block,
                                    int dim, std::span<const FairnessRequirement> reqs, AggregatorVariant variant) {
  Matrix dz = input_grad.middleRows(static_cast<Eigen::Index>(block) * dim, dim);
  for (Eigen::Index b = 0; b < dz.cols(); ++b) {
    bool masked;
    if (block == 0) {
      masked = variant == AggregatorVariant::no_z_u0;
    } else {
      masked = variant == AggregatorVariant::no_z_ui || reqs[static_cast<std::size_t>(b)].flags[static_cast<std::size_t>(block - 1)] == 0;
    }
    if (masked) dz.col(b).setZero();
  }
  auto grad = encoder.zero_gradient();
  encoder.backward(tape, dz, &grad);
  return grad;
}

void add_into(MlpGradient& acc, const MlpGradient& extra) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += extra[l].weight;
    acc[l].bias += extra[l].bias;
  }
}

void emit(const TrainHooks& hooks, std::string_view tag) {
  if (hooks.on_update) hooks.on_update(tag);
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (!(lambda >= 0.0)) throw UsageError("lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (max_epochs < 0) throw UsageError("max_epochs must be non-negative");
  if (encoder_layers < 1 || classifier_layers < 1) throw UsageError("layer counts must be at least 1");
  if (eval_negatives < 1) throw UsageError("eval_negatives must be at least 1");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"beta", beta},
          {"lambda", lambda},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"encoder_layers", encoder_layers},
          {"classifier_layers", classifier_layers},
          {"adversary", adversary_name(adversary)},
          {"per_user_requirement", per_user_requirement},
          {"end_to_end", end_to_end},
          {"variant", variant_name(variant)},
          {"eval_negatives", eval_negatives}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.beta = j.value("beta", c.beta);
  c.lambda = j.value("lambda", c.lambda);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.classifier_layers = j.value("classifier_layers", c.classifier_layers);
  c.adversary = parse_adversary(j.value("adversary", std::string("nll")));
  c.per_user_requirement = j.value("per_user_requirement", c.per_user_requirement);
  c.end_to_end = j.value("end_to_end", c.end_to_end);
  c.variant = parse_variant(j.value("variant", std::string("full")));
  c.eval_negatives = j.value("eval_negatives", c.eval_negatives);
  return c;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section = "afrl";
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const auto stripped = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') throw UsageError(fmt::format("config line {}: unterminated section header", line));
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section != "data" && section != "base" && section != "afrl" && section != "probe") {
        throw UsageError(fmt::format("config line {}: unknown section [{}]", line, section));
      }
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("config line {}: expected 'key = value'", line));
    const ValueParser v{line, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1))};
    const auto& k = v.key;
    bool known = true;
    if (section == "data") {
      if (k == "min_count") cfg.split.min_count = v.integer<int>();
      else if (k == "window") cfg.split.window = v.integer<int>();
      else known = false;
    } else if (section == "base") {
      auto& b = cfg.base;
      if (k == "dim") b.dim = v.integer<int>();
      else if (k == "learning_rate" || k == "lr") b.learning_rate = v.real();
      else if (k == "batch_size") b.batch_size = v.integer<int>();
      else if (k == "max_epochs") b.max_epochs = v.integer<int>();
      else if (k == "early_stop_patience") b.early_stop_patience = v.integer<int>();
      else if (k == "init_std") b.init_std = v.real();
      else if (k == "eval_negatives") b.eval_negatives = v.integer<int>();
      else if (k == "seed") b.seed = v.integer<std::uint64_t>();
      else known = false;
    } else if (section == "afrl") {
      auto& a = cfg.afrl;
      if (k == "beta") a.beta = v.real();
      else if (k == "lambda") a.lambda = v.real();
      else if (k == "learning_rate" || k == "lr") a.learning_rate = v.real();
      else if (k == "batch_size") a.batch_size = v.integer<int>();
      else if (k == "max_epochs") a.max_epochs = v.integer<int>();
      else if (k == "early_stop_patience") a.early_stop_patience = v.integer<int>();
      else if (k == "seed") a.seed = v.integer<std::uint64_t>();
      else if (k == "encoder_layers") a.encoder_layers = v.integer<int>();
      else if (k == "classifier_layers") a.classifier_layers = v.integer<int>();
      else if (k == "adversary") a.adversary = parse_adversary(v.value);
      else if (k == "per_user_requirement") a.per_user_requirement = v.boolean();
      else if (k == "end_to_end") a.end_to_end = v.boolean();
      else if (k == "variant") a.variant = parse_variant(v.value);
      else if (k == "eval_negatives") a.eval_negatives = v.integer<int>();
      else known = false;
    } else {
      if (k == "max_epochs") cfg.probe_max_epochs = v.integer<int>();
      else if (k == "patience") cfg.probe_patience = v.integer<int>();
      else if (k == "learning_rate" || k == "lr") cfg.probe_learning_rate = v.real();
      else known = false;
    }
    if (!known) throw UsageError(fmt::format("config line {}: unknown key '{}' in [{}]", line, k, section));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig defaults) {
  if (!std::filesystem::exists(path)) throw UsageError(fmt::format("config file '{}' does not exist", path.string()));
  return parse_config(read_file(path), std::move(defaults));
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"alignment", alignment},
          {"classifier", classifier},
          {"collaborative", collaborative},
          {"discriminator", discriminator},
          {"recommendation", recommendation},
          {"valid_ndcg_at_10", valid_ndcg_at_10},
          {"valid_hit_at_10", valid_hit_at_10}};
}

std::string AfrlModel::digest() const {
  BinaryWriter w;
  write_model(w, *this);
  return sha256_hex(w.bytes());
}

AfrlModel init_model(const EmbeddingSpace& space, const AttributeTable& attributes, const TrainingConfig& config,
                     Rng& rng) {
  config.validate();
  if (space.dim() < 1) throw UsageError("base embeddings are empty");
  if (attributes.num_attributes() < 1) throw DataError("at least one user attribute is required");
  AfrlModel m;
  m.nets = AlignmentNetworks::create(space.dim(), attributes.cardinalities, config.encoder_layers,
                                     config.classifier_layers, rng);
  m.aggregator = make_aggregator(space.dim(), attributes.num_attributes(), rng);
  m.attribute_names = attributes.names;
  m.short_names = attributes.short_names;
  m.cardinalities = attributes.cardinalities;
  m.config = config;
  m.base_digest = space.digest();
  return m;
}

FairnessRequirement sample_requirement(int num_attributes, Rng& rng) {
  if (num_attributes < 1 || num_attributes > 20) throw std::invalid_argument("num_attributes must be in [1, 20]");
  std::uniform_int_distribution<std::uint32_t> pick(0, (1u << num_attributes) - 1);
  const auto k = pick(rng);
  auto req = FairnessRequirement::none(num_attributes);
  for (int i = 0; i < num_attributes; ++i)
    if (k & (1u << i)) req.flags[static_cast<std::size_t>(i)] = 0;
  return req;
}

Matrix fair_embeddings(const AfrlModel& model, const Matrix& users, const FairnessRequirement& req) {
  if (users.rows() != model.dim()) {
    throw std::invalid_argument(fmt::format("users have dimension {}, model {}", users.rows(), model.dim()));
  }
  std::vector<Matrix> z;
  z.reserve(static_cast<std::size_t>(model.num_attributes()));
  for (int i = 0; i < model.num_attributes(); ++i) z.push_back(encode_attribute(model.nets, users, i));
  return aggregate(model.aggregator, encode_collaborative(model.nets, users), z, req, model.config.variant);
}

double validation_score(const AfrlModel& model, const EmbeddingSpace& space, const InteractionDataset& data,
                        double* hit) {
  const auto cands = build_candidates(data, HoldOut::validation, model.config.eval_negatives, kEvaluationSeed);
  return score_with(model, space, cands, hit);
}

TrainerState init_trainer(const InteractionDataset& data, const EmbeddingSpace& space, const TrainingConfig& config) {
  config.validate();
  if (space.num_users() != data.num_users || space.num_items() != data.num_items) {
    throw DataError(fmt::format("base embeddings cover {} users / {} items, dataset has {} / {}", space.num_users(),
                                space.num_items(), data.num_users, data.num_items));
  }
  if (data.attributes.num_rows() != static_cast<std::size_t>(data.num_users)) {
    throw DataError("attribute table does not have one row per user");
  }
  TrainerState s;
  s.rng.seed(config.seed);
  s.model = init_model(space, data.attributes, config, s.rng);
  const AdamOptions adam{.learning_rate = config.learning_rate};
  for (int i = 0; i < s.model.num_attributes(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    s.alignment_opts.push_back({Adam(s.model.nets.attribute_encoders[k], adam),
                                Adam(s.model.nets.attribute_classifiers[k], adam)});
    s.discriminator_opts.emplace_back(s.model.nets.discriminators[k], adam);
  }
  s.collaborative_opt = Adam(s.model.nets.collaborative, adam);
  s.aggregator_opt = Adam(s.model.aggregator, adam);
  s.best = s.model;
  return s;
}

void train_epochs(TrainerState& state, const InteractionDataset& data, const EmbeddingSpace& space, int epochs,
                  const TrainHooks& hooks) {
  const auto& cfg = state.model.config;
  auto& model = state.model;
  const int m = model.num_attributes();
  const int d = model.dim();
  const auto cands = build_candidates(data, HoldOut::validation, cfg.eval_negatives, kEvaluationSeed);
  const NegativeSampler sampler(data);

  std::vector<std::pair<int, int>> canonical;
  canonical.reserve(data.train_size());
  for (int u = 0; u < data.num_users; ++u)
    for (const auto& t : data.users[static_cast<std::size_t>(u)].train) canonical.emplace_back(u, t.item);
  if (canonical.empty()) throw DataError("dataset has no training interactions");

  std::vector<std::vector<int>> all_labels(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) all_labels[static_cast<std::size_t>(i)] = data.attributes.column(i);

  for (int run = 0; run < epochs && !state.stopped && state.epoch < cfg.max_epochs; ++run) {
    const AfrlModel last_good = model;
    const int epoch = state.epoch + 1;
    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    try {
      // Shuffled from the canonical order so a resumed run sees the same batches.
      auto pairs = canonical;
      std::shuffle(pairs.begin(), pairs.end(), state.rng);
      for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batches) {
        const auto end = std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const auto bsz = static_cast<Eigen::Index>(end - start);
        Matrix users(d, bsz);
        std::vector<int> pos(static_cast<std::size_t>(bsz));
        std::vector<int> neg(static_cast<std::size_t>(bsz));
        std::vector<std::vector<int>> labels(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(bsz)));
        for (Eigen::Index b = 0; b < bsz; ++b) {
          const auto [u, item] = pairs[start + static_cast<std::size_t>(b)];
          users.col(b) = space.users.col(u);
          pos[static_cast<std::size_t>(b)] = item;
          neg[static_cast<std::size_t>(b)] = sampler.sample(u, state.rng);
          for (int i = 0; i < m; ++i)
            labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] =
                all_labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(u)];
        }

        // Forward passes and the requirement for this batch.
        std::vector<Mlp::Tape> enc_tapes(static_cast<std::size_t>(m));
        Mlp::Tape f_tape;
        std::vector<Matrix> z(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
          const auto k = static_cast<std::size_t>(i);
          z[k] = model.nets.attribute_encoders[k].forward(users, enc_tapes[k]);
        }
        const Matrix z0 = model.nets.collaborative.forward(users, f_tape);
        std::vector<FairnessRequirement> reqs;
        if (cfg.per_user_requirement) {
          for (Eigen::Index b = 0; b < bsz; ++b) reqs.push_back(sample_requirement(m, state.rng));
        } else {
          reqs.assign(static_cast<std::size_t>(bsz), sample_requirement(m, state.rng));
        }
        const Matrix input = aggregator_input(z0, z, reqs, cfg.variant);
        RecLoss rec;
        if (cfg.end_to_end) rec = aggregator_rec_loss(model.aggregator, input, space.items, pos, neg, batches);

        for (int i = 0; i < m; ++i) {
          const auto k = static_cast<std::size_t>(i);
          const auto inner = alignment_loss(model.nets.attribute_encoders[k], model.nets.attribute_classifiers[k],
                                            users, labels[k], cfg.beta, batches);
          state.alignment_opts[k].classifier.step(model.nets.attribute_classifiers[k], inner.classifier_grad);
          log.classifier += inner.classifier_objective;
          emit(hooks, fmt::format("C{}", i));
        }
        for (int i = 0; i < m; ++i) {
          const auto k = static_cast<std::size_t>(i);
          auto outer = alignment_loss(model.nets.attribute_encoders[k], model.nets.attribute_classifiers[k], users,
                                      labels[k], cfg.beta, batches);
          if (cfg.end_to_end) {
            add_into(outer.encoder_grad, encoder_grad_from_input(model.nets.attribute_encoders[k], enc_tapes[k],
                                                                 rec.input_grad, i + 1, d, reqs, cfg.variant));
          }
          state.alignment_opts[k].encoder.step(model.nets.attribute_encoders[k], outer.encoder_grad);
          log.alignment += outer.encoder_objective;
          emit(hooks, fmt::format("E{}", i));
        }

        const auto inner = adversarial_objectives(model.nets.collaborative, model.nets.discriminators, users, labels,
                                                  cfg.lambda, cfg.adversary, batches);
        for (int i = 0; i < m; ++i) {
          const auto k = static_cast<std::size_t>(i);
          state.discriminator_opts[k].step(model.nets.discriminators[k], inner.discriminator_grads[k]);
          emit(hooks, fmt::format("D{}", i));
        }
        log.discriminator += inner.discriminator_objective;
        auto outer = adversarial_objectives(model.nets.collaborative, model.nets.discriminators, users, labels,
                                            cfg.lambda, cfg.adversary, batches);
        if (cfg.end_to_end) {
          add_into(outer.collaborative_grad,
                   encoder_grad_from_input(model.nets.collaborative, f_tape, rec.input_grad, 0, d, reqs, cfg.variant));
        }
        state.collaborative_opt.step(model.nets.collaborative, outer.collaborative_grad);
        log.collaborative += outer.collaborative_objective;
        emit(hooks, "F");

        if (!cfg.end_to_end) rec = aggregator_rec_loss(model.aggregator, input, space.items, pos, neg, batches);
        state.aggregator_opt.step(model.aggregator, rec.aggregator_grad);
        log.recommendation += rec.value;
        emit(hooks, "G");
      }
    } catch (const TrainingError& e) {
      spdlog::error("AFRL training failed in epoch {}: {}", epoch, e.what());
      if (!hooks.failure_checkpoint.empty()) {
        save_checkpoint(state.epoch > 0 ? state.best : last_good, hooks.failure_checkpoint);
        spdlog::error("last-good model written to {}", hooks.failure_checkpoint.string());
      }
      throw;
    }

    const double n = static_cast<double>(std::max<std::size_t>(batches, 1));
    log.alignment /= n;
    log.classifier /= n;
    log.collaborative /= n;
    log.discriminator /= n;
    log.recommendation /= n;
    log.valid_ndcg_at_10 = score_with(model, space, cands, &log.valid_hit_at_10);
    state.epoch = epoch;
    state.history.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
    if (log.valid_ndcg_at_10 > state.best_score) {
      state.best_score = log.valid_ndcg_at_10;
      state.best = model;
      state.since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++state.since_best >= cfg.early_stop_patience) {
      spdlog::info("AFRL training: early stop at epoch {}", epoch);
      state.stopped = true;
    }
  }
}

AfrlModel train_afrl(const InteractionDataset& data, const EmbeddingSpace& space, const TrainingConfig& config,
                     const TrainHooks& hooks) {
  auto state = init_trainer(data, space, config);
  train_epochs(state, data, space, config.max_epochs, hooks);
  return state.epoch > 0 ? state.best : state.model;
}

void save_checkpoint(const AfrlModel& model, const std::filesystem::path& path) {
  BinaryWriter w;
  write_model(w, model);
  auto meta = model_meta(model);
  meta["digest"] = model.digest();
  write_file(path, encode_checkpoint({"afrl-model", meta, w.bytes()}));
}

AfrlModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(fmt::format("model checkpoint '{}' does not exist", path.string()));
  const auto ckpt = decode_checkpoint(read_file(path), "afrl-model");
  BinaryReader r(ckpt.payload);
  auto model = read_model(r, ckpt.meta);
  if (!r.at_end()) throw DataError("model checkpoint has trailing bytes");
  return model;
}

void save_trainer_state(const TrainerState& s, const std::filesystem::path& path) {
  BinaryWriter w;
  write_model(w, s.model);
  write_model(w, s.best);
  for (const auto& o : s.alignment_opts) {
    o.encoder.save(w);
    o.classifier.save(w);
  }
  for (const auto& o : s.discriminator_opts) o.save(w);
  s.collaborative_opt.save(w);
  s.aggregator_opt.save(w);
  std::ostringstream rng;
  rng << s.rng;
  w.put_string(rng.str());
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : s.history) history.push_back(h.to_json());
  auto meta = model_meta(s.model);
  meta["epoch"] = s.epoch;
  meta["best_score"] = s.best_score;
  meta["since_best"] = s.since_best;
  meta["stopped"] = s.stopped;
  meta["history"] = history;
  write_file(path, encode_checkpoint({"afrl-trainer-state", meta, w.bytes()}));
}

TrainerState load_trainer_state(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(fmt::format("trainer state '{}' does not exist", path.string()));
  const auto ckpt = decode_checkpoint(read_file(path), "afrl-trainer-state");
  BinaryReader r(ckpt.payload);
  TrainerState s;
  s.model = read_model(r, ckpt.meta);
  s.best = read_model(r, ckpt.meta);
  for (int i = 0; i < s.model.num_attributes(); ++i) {
    auto enc = Adam::load(r);
    auto cls = Adam::load(r);
    s.alignment_opts.push_back({std::move(enc), std::move(cls)});
  }
  for (int i = 0; i < s.model.num_attributes(); ++i) s.discriminator_opts.push_back(Adam::load(r));
  s.collaborative_opt = Adam::load(r);
  s.aggregator_opt = Adam::load(r);
  std::istringstream rng(r.get_string());
  rng >> s.rng;
  if (rng.fail()) throw DataError("trainer state: RNG state is malformed");
  if (!r.at_end()) throw DataError("trainer state has trailing bytes");
  try {
    s.epoch = ckpt.meta.at("epoch").get<int>();
    s.best_score = ckpt.meta.at("best_score").get<double>();
    s.since_best = ckpt.meta.at("since_best").get<int>();
    s.stopped = ckpt.meta.at("stopped").get<bool>();
    for (const auto& h : ckpt.meta.at("history")) {
      EpochLog log;
      log.epoch = h.at("epoch").get<int>();
      log.alignment = h.at("alignment").get<double>();
      log.classifier = h.at("classifier").get<double>();
      log.collaborative = h.at("collaborative").get<double>();
      log.discriminator = h.at("discriminator").get<double>();
      log.recommendation = h.at("recommendation").get<double>();
      log.valid_ndcg_at_10 = h.at("valid_ndcg_at_10").get<double>();
      log.valid_hit_at_10 = h.at("valid_hit_at_10").get<double>();
      s.history.push_back(log);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("trainer state metadata is malformed: {}", e.what()));
  }
  return s;
}

}  // namespace afrl
