#include "afrl/mi_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>

#include "afrl/io.hpp"

namespace afrl::mi {
namespace {

std::vector<int> decode(std::size_t index, std::span<const int> sizes) {
  std::vector<int> v(sizes.size());
  for (std::size_t k = sizes.size(); k-- > 0;) {
    v[k] = static_cast<int>(index % static_cast<std::size_t>(sizes[k]));
    index /= static_cast<std::size_t>(sizes[k]);
  }
  return v;
}

std::vector<int> concat(std::span<const int> a, std::span<const int> b, std::span<const int> c = {}) {
  std::vector<int> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<int> range(int from, int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), from);
  return v;
}

void check_vars(const DiscreteJoint& joint, std::span<const int> vars) {
  std::vector<int> seen;
  for (int v : vars) {
    if (v < 0 || v >= joint.num_vars()) throw std::invalid_argument(fmt::format("variable {} out of range", v));
    if (std::find(seen.begin(), seen.end(), v) != seen.end()) {
      throw std::invalid_argument("variable groups must be disjoint");
    }
    seen.push_back(v);
  }
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

// States that share a row of p(a|u), in order of first appearance.
std::vector<int> group_ids(const TabularInstance& inst, double tolerance, int* num_groups) {
  const int n = inst.num_states();
  std::vector<int> group(static_cast<std::size_t>(n), -1);
  std::vector<int> reps;
  for (int u = 0; u < n; ++u) {
    for (std::size_t g = 0; g < reps.size(); ++g) {
      if ((inst.p_a_given_u.row(u) - inst.p_a_given_u.row(reps[g])).cwiseAbs().maxCoeff() <= tolerance) {
        group[static_cast<std::size_t>(u)] = static_cast<int>(g);
        break;
      }
    }
    if (group[static_cast<std::size_t>(u)] < 0) {
      group[static_cast<std::size_t>(u)] = static_cast<int>(reps.size());
      reps.push_back(u);
    }
  }
  *num_groups = static_cast<int>(reps.size());
  return group;
}

Vector dirichlet_one(int n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = e(rng) + 1e-12;
  return v / v.sum();
}

InformativenessInstance with_sufficient(const TabularInstance& base) {
  InformativenessInstance inst;
  inst.base = base;
  inst.attribute_encoder = sufficient_encoder(base);
  return inst;
}

void set_injective_fuse(InformativenessInstance& inst) {
  inst.ustar_size = inst.attribute_encoder.codebook * inst.z0_size;
  inst.fuse.resize(static_cast<std::size_t>(inst.ustar_size));
  std::iota(inst.fuse.begin(), inst.fuse.end(), 0);
}

// z0 = value[u, a], as a degenerate conditional.
void set_z0(InformativenessInstance& inst, int z0_size, const std::function<int(int, int)>& value) {
  const int n = inst.base.num_states();
  const int k = inst.base.num_classes();
  inst.z0_size = z0_size;
  inst.z0_given_ua.assign(static_cast<std::size_t>(n * k * z0_size), 0.0);
  for (int u = 0; u < n; ++u)
    for (int a = 0; a < k; ++a) inst.z0_given_ua[static_cast<std::size_t>((u * k + a) * z0_size + value(u, a))] = 1.0;
}

}  // namespace

std::size_t DiscreteJoint::index(std::span<const int> values) const {
  if (values.size() != sizes.size()) throw std::invalid_argument("index: wrong number of values");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (values[k] < 0 || values[k] >= sizes[k]) throw std::invalid_argument("index: value out of range");
    idx = idx * static_cast<std::size_t>(sizes[k]) + static_cast<std::size_t>(values[k]);
  }
  return idx;
}

void DiscreteJoint::validate() const {
  std::size_t total = 1;
  for (int s : sizes) {
    if (s < 1) throw std::invalid_argument("support sizes must be positive");
    total *= static_cast<std::size_t>(s);
  }
  if (p.size() != total) throw std::invalid_argument(fmt::format("table has {} entries, expected {}", p.size(), total));
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("probabilities must be finite and non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument(fmt::format("probabilities sum to {:.17g}", sum));
}

DiscreteJoint DiscreteJoint::marginal(std::span<const int> vars) const {
  check_vars(*this, vars);
  DiscreteJoint m;
  for (int v : vars) m.sizes.push_back(sizes[static_cast<std::size_t>(v)]);
  std::size_t total = 1;
  for (int s : m.sizes) total *= static_cast<std::size_t>(s);
  m.p.assign(total, 0.0);
  std::vector<int> sub(vars.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    const auto full = decode(i, sizes);
    for (std::size_t k = 0; k < vars.size(); ++k) sub[k] = full[static_cast<std::size_t>(vars[k])];
    m.p[m.index(sub)] += p[i];
  }
  return m;
}

double entropy(const DiscreteJoint& joint) {
  double h = 0.0;
  for (double v : joint.p) h -= plogp(v);
  return std::max(0.0, h);
}

double entropy(const DiscreteJoint& joint, std::span<const int> vars) { return entropy(joint.marginal(vars)); }

double exact_mi(const DiscreteJoint& joint, int a, int b) {
  const int av[] = {a};
  const int bv[] = {b};
  if (a == b) return entropy(joint, av);
  return exact_mi(joint, av, bv);
}

double exact_mi(const DiscreteJoint& joint, std::span<const int> a, std::span<const int> b) {
  return conditional_mi(joint, a, b, {});
}

double conditional_mi(const DiscreteJoint& joint, std::span<const int> a, std::span<const int> b,
                      std::span<const int> c) {
  const auto vars = concat(a, b, c);
  const auto j = joint.marginal(vars);
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());
  const int nc = static_cast<int>(c.size());
  const auto ac = j.marginal(concat(range(0, na), range(na + nb, nc)));
  const auto bc = j.marginal(range(na, nb + nc));
  const auto cc = j.marginal(range(na + nb, nc));
  double total = 0.0;
  std::vector<int> ia, ib, ic;
  for (std::size_t i = 0; i < j.p.size(); ++i) {
    const double pabc = j.p[i];
    if (pabc <= 0.0) continue;
    const auto v = decode(i, j.sizes);
    ia.assign(v.begin(), v.begin() + na);
    ia.insert(ia.end(), v.begin() + na + nb, v.end());
    ib.assign(v.begin() + na, v.end());
    ic.assign(v.begin() + na + nb, v.end());
    const double pc = nc > 0 ? cc.p[cc.index(ic)] : 1.0;
    total += pabc * std::log(pabc * pc / (ac.p[ac.index(ia)] * bc.p[bc.index(ib)]));
  }
  return std::max(0.0, total);
}

DiscreteJoint parse_joint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  DiscreteJoint j;
  bool have_sizes = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string tok;
    if (!have_sizes) {
      if (!(tokens >> tok)) continue;
      if (tok != "sizes") throw DataError(fmt::format("joint line {}: expected 'sizes' header", line_no));
      while (tokens >> tok) {
        try {
          j.sizes.push_back(std::stoi(tok));
        } catch (const std::exception&) {
          throw DataError(fmt::format("joint line {}: bad size '{}'", line_no, tok));
        }
        if (j.sizes.back() < 1) throw DataError(fmt::format("joint line {}: sizes must be positive", line_no));
      }
      if (j.sizes.empty()) throw DataError(fmt::format("joint line {}: no sizes given", line_no));
      have_sizes = true;
      continue;
    }
    while (tokens >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw DataError(fmt::format("joint line {}: bad probability '{}'", line_no, tok));
      if (!(v >= 0.0)) throw DataError(fmt::format("joint line {}: negative probability", line_no));
      j.p.push_back(v);
    }
  }
  if (!have_sizes) throw DataError("joint: missing 'sizes' header");
  std::size_t total = 1;
  for (int s : j.sizes) total *= static_cast<std::size_t>(s);
  if (j.p.size() != total) throw DataError(fmt::format("joint: {} probabilities, expected {}", j.p.size(), total));
  const double sum = std::accumulate(j.p.begin(), j.p.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw DataError(fmt::format("joint: probabilities sum to {:.12g}", sum));
  for (double& v : j.p) v /= sum;
  return j;
}

std::string format_joint(const DiscreteJoint& joint) {
  std::string out = "sizes";
  for (int s : joint.sizes) out += fmt::format(" {}", s);
  out += '\n';
  const auto row = static_cast<std::size_t>(joint.sizes.empty() ? 1 : joint.sizes.back());
  for (std::size_t i = 0; i < joint.p.size(); ++i) {
    out += fmt::format("{:.17g}", joint.p[i]);
    out += (i + 1) % row == 0 ? '\n' : ' ';
  }
  return out;
}

DiscreteJoint TabularInstance::joint() const {
  DiscreteJoint j;
  j.sizes = {num_states(), num_classes()};
  j.p.resize(static_cast<std::size_t>(num_states() * num_classes()));
  for (int u = 0; u < num_states(); ++u)
    for (int a = 0; a < num_classes(); ++a)
      j.p[static_cast<std::size_t>(u * num_classes() + a)] = p_u(u) * p_a_given_u(u, a);
  return j;
}

TabularInstance random_instance(int num_states, int num_classes, Rng& rng) {
  return grouped_instance(num_states, num_states, num_classes, rng);
}

TabularInstance grouped_instance(int num_states, int num_groups, int num_classes, Rng& rng) {
  if (num_states < 1 || num_classes < 1 || num_groups < 1 || num_groups > num_states) {
    throw std::invalid_argument("grouped_instance: need 1 <= groups <= states and classes >= 1");
  }
  TabularInstance inst;
  inst.p_u = dirichlet_one(num_states, rng);
  Matrix rows(num_groups, num_classes);
  for (int g = 0; g < num_groups; ++g) rows.row(g) = dirichlet_one(num_classes, rng).transpose();
  inst.p_a_given_u.resize(num_states, num_classes);
  for (int u = 0; u < num_states; ++u) inst.p_a_given_u.row(u) = rows.row(u % num_groups);
  return inst;
}

DiscreteJoint encoder_joint(const TabularInstance& inst, const QuantizedEncoder& enc) {
  const int n = inst.num_states();
  const int k = inst.num_classes();
  if (static_cast<int>(enc.code.size()) != n) throw std::invalid_argument("encoder must assign a code to every state");
  DiscreteJoint j;
  j.sizes = {n, k, enc.codebook};
  j.p.assign(static_cast<std::size_t>(n * k * enc.codebook), 0.0);
  for (int u = 0; u < n; ++u) {
    const int z = enc.code[static_cast<std::size_t>(u)];
    if (z < 0 || z >= enc.codebook) throw std::invalid_argument("encoder code outside the codebook");
    for (int a = 0; a < k; ++a) j.p[static_cast<std::size_t>((u * k + a) * enc.codebook + z)] = inst.p_u(u) * inst.p_a_given_u(u, a);
  }
  return j;
}

double mi_z_a(const TabularInstance& inst, const QuantizedEncoder& enc) { return exact_mi(encoder_joint(inst, enc), 1, 2); }

double mi_z_u(const TabularInstance& inst, const QuantizedEncoder& enc) {
  const int z[] = {2};
  return entropy(encoder_joint(inst, enc), z);
}

std::vector<double> verify_em_monotonicity(const TabularInstance& inst, QuantizedEncoder enc, int steps) {
  const int n = inst.num_states();
  const int k = inst.num_classes();
  std::vector<double> trace{mi_z_a(inst, enc)};
  for (int step = 0; step < steps; ++step) {
    // Classifier step: q(a|z) = p(a|z), uniform for unused codes.
    Matrix q = Matrix::Zero(enc.codebook, k);
    for (int u = 0; u < n; ++u) q.row(enc.code[static_cast<std::size_t>(u)]) += inst.p_u(u) * inst.p_a_given_u.row(u);
    for (int z = 0; z < enc.codebook; ++z) {
      const double mass = q.row(z).sum();
      if (mass > 0.0) {
        q.row(z) /= mass;
      } else {
        q.row(z).setConstant(1.0 / k);
      }
    }
    // Encoder step: each state moves to the code whose classifier explains it best.
    for (int u = 0; u < n; ++u) {
      auto fit = [&](int z) {
        double s = 0.0;
        for (int a = 0; a < k; ++a) {
          const double p = inst.p_a_given_u(u, a);
          if (p <= 0.0) continue;
          if (q(z, a) <= 0.0) return -std::numeric_limits<double>::infinity();
          s += p * std::log(q(z, a));
        }
        return s;
      };
      int& current = enc.code[static_cast<std::size_t>(u)];
      double best = fit(current);
      for (int z = 0; z < enc.codebook; ++z) {
        const double s = fit(z);
        if (s > best) {
          best = s;
          current = z;
        }
      }
    }
    trace.push_back(mi_z_a(inst, enc));
  }
  return trace;
}

QuantizedEncoder sufficient_encoder(const TabularInstance& inst, double tolerance) {
  QuantizedEncoder enc;
  enc.code = group_ids(inst, tolerance, &enc.codebook);
  return enc;
}

double verify_informativeness(const InformativenessInstance& inst) {
  const int n = inst.base.num_states();
  const int k = inst.base.num_classes();
  const auto& enc = inst.attribute_encoder;
  if (static_cast<int>(enc.code.size()) != n) throw std::invalid_argument("attribute encoder must cover every state");
  if (inst.z0_given_ua.size() != static_cast<std::size_t>(n * k * inst.z0_size)) {
    throw std::invalid_argument("z0 table has the wrong size");
  }
  if (inst.fuse.size() != static_cast<std::size_t>(enc.codebook * inst.z0_size)) {
    throw std::invalid_argument("fuse table has the wrong size");
  }
  DiscreteJoint j;
  j.sizes = {n, k, inst.ustar_size};
  j.p.assign(static_cast<std::size_t>(n * k * inst.ustar_size), 0.0);
  for (int u = 0; u < n; ++u) {
    for (int a = 0; a < k; ++a) {
      for (int z0 = 0; z0 < inst.z0_size; ++z0) {
        const double p = inst.base.p_u(u) * inst.base.p_a_given_u(u, a) *
                         inst.z0_given_ua[static_cast<std::size_t>((u * k + a) * inst.z0_size + z0)];
        if (p == 0.0) continue;
        const int us = inst.fuse[static_cast<std::size_t>(enc.code[static_cast<std::size_t>(u)] * inst.z0_size + z0)];
        if (us < 0 || us >= inst.ustar_size) throw std::invalid_argument("fuse maps outside U*");
        j.p[static_cast<std::size_t>((u * k + a) * inst.ustar_size + us)] += p;
      }
    }
  }
  const int va[] = {1};
  const int vu[] = {0};
  const int vs[] = {2};
  return conditional_mi(j, va, vu, vs);
}

InformativenessInstance optimal_informativeness_instance(const TabularInstance& base, Rng& rng) {
  auto inst = with_sufficient(base);
  std::vector<int> h(static_cast<std::size_t>(base.num_states()));
  std::bernoulli_distribution coin(0.5);
  for (auto& v : h) v = coin(rng) ? 1 : 0;
  set_z0(inst, 2, [&](int u, int) { return h[static_cast<std::size_t>(u)]; });
  set_injective_fuse(inst);
  return inst;
}

InformativenessInstance lossy_informativeness_instance(const TabularInstance& base, Rng& rng) {
  auto inst = optimal_informativeness_instance(base, rng);
  auto& enc = inst.attribute_encoder;
  for (auto& z : enc.code) z /= 2;
  enc.codebook = (enc.codebook + 1) / 2;
  set_z0(inst, 1, [](int, int) { return 0; });
  set_injective_fuse(inst);
  return inst;
}

InformativenessInstance dependent_informativeness_instance(const TabularInstance& base, Rng&) {
  auto inst = with_sufficient(base);
  std::vector<int> seen(static_cast<std::size_t>(inst.attribute_encoder.codebook), 0);
  std::vector<int> h(static_cast<std::size_t>(base.num_states()));
  for (int u = 0; u < base.num_states(); ++u) {
    h[static_cast<std::size_t>(u)] = seen[static_cast<std::size_t>(inst.attribute_encoder.code[static_cast<std::size_t>(u)])]++ % 2;
  }
  set_z0(inst, 2, [&](int u, int a) { return (a + h[static_cast<std::size_t>(u)]) % 2; });
  set_injective_fuse(inst);
  return inst;
}

std::uint64_t partition_count(int n, int k) {
  if (n < 0 || k < 0) return 0;
  constexpr auto cap = std::numeric_limits<std::uint64_t>::max();
  // Stirling numbers of the second kind, saturating.
  std::vector<std::vector<std::uint64_t>> s(static_cast<std::size_t>(n + 1), std::vector<std::uint64_t>(static_cast<std::size_t>(n + 1), 0));
  s[0][0] = 1;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= i; ++j) {
      const auto a = s[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
      const auto b = s[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
      const auto jb = b > cap / static_cast<std::uint64_t>(j) ? cap : b * static_cast<std::uint64_t>(j);
      s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = jb > cap - a ? cap : jb + a;
    }
  }
  std::uint64_t total = 0;
  for (int j = 0; j <= std::min(n, k); ++j) {
    const auto v = s[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
    total = v > cap - total ? cap : total + v;
  }
  return total;
}

BetaPoint optimal_encoder(const TabularInstance& inst, double beta, int codebook) {
  const int n = inst.num_states();
  const int k = inst.num_classes();
  if (codebook < 1 || codebook > kMaxCodebook) {
    throw std::invalid_argument(fmt::format("codebook must be in [1, {}]", kMaxCodebook));
  }
  if (partition_count(n, codebook) > kMaxEncoderCandidates) {
    throw std::invalid_argument(fmt::format("{} states with {} codes exceeds the enumeration budget", n, codebook));
  }
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");

  Vector p_a = Vector::Zero(k);
  for (int u = 0; u < n; ++u) p_a += inst.p_u(u) * inst.p_a_given_u.row(u).transpose();

  BetaPoint best;
  best.beta = beta;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<int> rgs(static_cast<std::size_t>(n), 0);
  std::vector<int> prefix_max(static_cast<std::size_t>(n), 0);  // max code among rgs[0..i]
  Matrix pza(codebook, k);
  Vector pz(codebook);
  while (true) {
    const int blocks = n > 0 ? prefix_max.back() + 1 : 0;
    pza.setZero();
    pz.setZero();
    for (int u = 0; u < n; ++u) {
      pza.row(rgs[static_cast<std::size_t>(u)]) += inst.p_u(u) * inst.p_a_given_u.row(u);
      pz(rgs[static_cast<std::size_t>(u)]) += inst.p_u(u);
    }
    double h = 0.0;
    double i_za = 0.0;
    for (int z = 0; z < blocks; ++z) {
      h -= plogp(pz(z));
      for (int a = 0; a < k; ++a) {
        if (pza(z, a) > 0.0) i_za += pza(z, a) * std::log(pza(z, a) / (pz(z) * p_a(a)));
      }
    }
    i_za = std::max(0.0, i_za);
    h = std::max(0.0, h);
    const double obj = -i_za + beta * h;
    if (obj < best_obj - 1e-12 || (obj <= best_obj + 1e-12 && h < best.i_z_u - 1e-12)) {
      best_obj = std::min(obj, best_obj);
      best.i_z_a = i_za;
      best.i_z_u = h;
      best.encoder = {rgs, codebook};
    }
    // Next restricted growth string with at most `codebook` blocks.
    int i = n - 1;
    while (i > 0) {
      const int limit = std::min(prefix_max[static_cast<std::size_t>(i - 1)] + 1, codebook - 1);
      if (rgs[static_cast<std::size_t>(i)] < limit) break;
      --i;
    }
    if (i <= 0) break;
    ++rgs[static_cast<std::size_t>(i)];
    prefix_max[static_cast<std::size_t>(i)] = std::max(prefix_max[static_cast<std::size_t>(i - 1)], rgs[static_cast<std::size_t>(i)]);
    for (int j = i + 1; j < n; ++j) {
      rgs[static_cast<std::size_t>(j)] = 0;
      prefix_max[static_cast<std::size_t>(j)] = prefix_max[static_cast<std::size_t>(i)];
    }
  }
  return best;
}

std::vector<BetaPoint> beta_regime_curve(const TabularInstance& inst, std::span<const double> betas, int codebook) {
  std::vector<BetaPoint> out;
  out.reserve(betas.size());
  for (double beta : betas) out.push_back(optimal_encoder(inst, beta, codebook));
  return out;
}

}  // namespace afrl::mi
