#include "afrl/aggregation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "afrl/io.hpp"

namespace afrl {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

void check_blocks(const Matrix& z0, const std::vector<Matrix>& z) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i].rows() != z0.rows() || z[i].cols() != z0.cols()) {
      throw std::invalid_argument(fmt::format("aggregate: block {} is {}x{}, expected {}x{}", i + 1, z[i].rows(),
                                              z[i].cols(), z0.rows(), z0.cols()));
    }
  }
}

}  // namespace

int FairnessRequirement::num_sensitive() const {
  return static_cast<int>(std::count(flags.begin(), flags.end(), 0));
}

std::vector<int> FairnessRequirement::sensitive_attributes() const {
  std::vector<int> out;
  for (int i = 0; i < num_attributes(); ++i)
    if (flags[static_cast<std::size_t>(i)] == 0) out.push_back(i);
  return out;
}

FairnessRequirement FairnessRequirement::parse(std::string_view text, std::span<const std::string> short_names,
                                               std::span<const std::string> names) {
  auto req = none(static_cast<int>(short_names.size()));
  const auto whole = lower(trim(text));
  if (whole.empty() || whole == "none") return req;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('+', start), text.size());
    const auto token = lower(trim(text.substr(start, end - start)));
    bool found = false;
    for (std::size_t i = 0; i < short_names.size() && !found; ++i) {
      if (token == lower(short_names[i]) || (i < names.size() && token == lower(names[i]))) {
        req.flags[i] = 0;
        found = true;
      }
    }
    if (!found) throw UsageError(fmt::format("unknown attribute '{}' in requirement '{}'", token, text));
    start = end + 1;
  }
  return req;
}

std::string FairnessRequirement::label(std::span<const std::string> short_names) const {
  std::string out;
  for (int i : sensitive_attributes()) {
    if (!out.empty()) out += '+';
    out += static_cast<std::size_t>(i) < short_names.size() ? short_names[static_cast<std::size_t>(i)]
                                                            : fmt::format("a{}", i);
  }
  return out.empty() ? "none" : out;
}

FairnessRequirement FairnessRequirement::none(int num_attributes) {
  return {std::vector<int>(static_cast<std::size_t>(num_attributes), 1)};
}

FairnessRequirement FairnessRequirement::all_sensitive(int num_attributes) {
  return {std::vector<int>(static_cast<std::size_t>(num_attributes), 0)};
}

std::vector<FairnessRequirement> all_requirements(int num_attributes) {
  if (num_attributes < 1 || num_attributes > 20) throw std::invalid_argument("num_attributes must be in [1, 20]");
  std::vector<FairnessRequirement> out;
  for (int k = 0; k < (1 << num_attributes); ++k) {
    auto req = FairnessRequirement::none(num_attributes);
    for (int i = 0; i < num_attributes; ++i)
      if (k & (1 << i)) req.flags[static_cast<std::size_t>(i)] = 0;
    out.push_back(std::move(req));
  }
  return out;
}

Vector expand_mask(const FairnessRequirement& req, int dim) {
  Vector s(static_cast<Eigen::Index>(req.num_attributes()) * dim);
  for (int i = 0; i < req.num_attributes(); ++i) {
    s.segment(static_cast<Eigen::Index>(i) * dim, dim).setConstant(req.flags[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  }
  return s;
}

std::string_view variant_name(AggregatorVariant v) {
  switch (v) {
    case AggregatorVariant::full: return "full";
    case AggregatorVariant::no_z_ui: return "no_z_ui";
    case AggregatorVariant::no_z_u0: return "no_z_u0";
  }
  return "full";
}

AggregatorVariant parse_variant(std::string_view name) {
  if (name == "full") return AggregatorVariant::full;
  if (name == "no_z_ui") return AggregatorVariant::no_z_ui;
  if (name == "no_z_u0") return AggregatorVariant::no_z_u0;
  throw UsageError(fmt::format("unknown variant '{}' (expected full, no_z_ui or no_z_u0)", name));
}

Mlp make_aggregator(int dim, int num_attributes, Rng& rng) {
  const std::vector<int> widths{(num_attributes + 1) * dim, 2 * dim, 2 * dim, dim};
  return Mlp(widths, rng);
}

Matrix aggregator_input(const Matrix& z0, const std::vector<Matrix>& z, std::span<const FairnessRequirement> reqs,
                        AggregatorVariant variant) {
  check_blocks(z0, z);
  if (static_cast<Eigen::Index>(reqs.size()) != z0.cols()) {
    throw std::invalid_argument("aggregator_input: one requirement per column expected");
  }
  const Eigen::Index d = z0.rows();
  const Eigen::Index m = static_cast<Eigen::Index>(z.size());
  Matrix x(d * (m + 1), z0.cols());
  if (variant == AggregatorVariant::no_z_u0) {
    x.topRows(d).setZero();
  } else {
    x.topRows(d) = z0;
  }
  for (Eigen::Index b = 0; b < z0.cols(); ++b) {
    const auto& req = reqs[static_cast<std::size_t>(b)];
    if (req.num_attributes() != m) {
      throw std::invalid_argument(fmt::format("requirement has {} flags, model has {} attributes", req.num_attributes(), m));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      auto block = x.block(d * (i + 1), b, d, 1);
      if (variant == AggregatorVariant::no_z_ui || req.flags[static_cast<std::size_t>(i)] == 0) {
        block.setZero();
      } else {
        block = z[static_cast<std::size_t>(i)].col(b);
      }
    }
  }
  return x;
}

Matrix aggregator_input(const Matrix& z0, const std::vector<Matrix>& z, const FairnessRequirement& req,
                        AggregatorVariant variant) {
  const std::vector<FairnessRequirement> reqs(static_cast<std::size_t>(z0.cols()), req);
  return aggregator_input(z0, z, reqs, variant);
}

Matrix aggregate(const Mlp& aggregator, const Matrix& z0, const std::vector<Matrix>& z,
                 const FairnessRequirement& req, AggregatorVariant variant) {
  return aggregator.forward(aggregator_input(z0, z, req, variant));
}

RecLoss aggregator_rec_loss(const Mlp& aggregator, const Matrix& input, const Matrix& items,
                            std::span<const int> positives, std::span<const int> negatives, std::size_t batch_index) {
  const auto batch = static_cast<std::size_t>(input.cols());
  if (positives.size() != batch || negatives.size() != batch) {
    throw std::invalid_argument("aggregator_rec_loss: one positive and one negative per column expected");
  }
  Mlp::Tape tape;
  const Matrix u = aggregator.forward(input, tape);
  if (u.rows() != items.rows()) {
    throw std::invalid_argument(fmt::format("aggregator output has dimension {}, items {}", u.rows(), items.rows()));
  }
  RecLoss out;
  Matrix du(u.rows(), u.cols());
  const double inv = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const auto diff = items.col(positives[b]) - items.col(negatives[b]);
    const double x = u.col(col).dot(diff);
    out.value -= log_sigmoid(x);
    du.col(col) = -sigmoid(-x) * inv * diff;
  }
  out.value *= inv;
  if (!std::isfinite(out.value)) {
    throw TrainingError(fmt::format("recommendation loss is non-finite ({}) at batch {}", out.value, batch_index));
  }
  out.aggregator_grad = aggregator.zero_gradient();
  out.input_grad = aggregator.backward(tape, du, &out.aggregator_grad);
  return out;
}

}  // namespace afrl
