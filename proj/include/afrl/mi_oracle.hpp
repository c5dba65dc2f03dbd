#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afrl/nn.hpp"

// Exact information quantities on small discrete distributions. All values
// are in nats and 0 log 0 is taken as 0.
namespace afrl::mi {

/// Probability table over the product of `sizes`, row-major (last variable fastest).
struct DiscreteJoint {
  std::vector<int> sizes;
  std::vector<double> p;

  int num_vars() const { return static_cast<int>(sizes.size()); }
  std::size_t index(std::span<const int> values) const;

  /// Throws std::invalid_argument unless entries are non-negative and sum to 1 within 1e-12.
  void validate() const;

  /// Marginal over `vars`, in the listed order.
  DiscreteJoint marginal(std::span<const int> vars) const;
};

double entropy(const DiscreteJoint& joint);
double entropy(const DiscreteJoint& joint, std::span<const int> vars);

double exact_mi(const DiscreteJoint& joint, int a, int b);
/// I(A; B) between two groups of variables.
double exact_mi(const DiscreteJoint& joint, std::span<const int> a, std::span<const int> b);
/// I(A; B | C).
double conditional_mi(const DiscreteJoint& joint, std::span<const int> a, std::span<const int> b,
                      std::span<const int> c);

/// Text format: a line "sizes s1 s2 ...", then the probabilities in row-major
/// order, any number per line. '#' starts a comment. Tables within 1e-9 of
/// unit mass are renormalised.
DiscreteJoint parse_joint(std::string_view text);
std::string format_joint(const DiscreteJoint& joint);

/// A discrete user variable U with an attribute A drawn from p(a|u).
struct TabularInstance {
  Vector p_u;          // n
  Matrix p_a_given_u;  // n x K, rows sum to 1

  int num_states() const { return static_cast<int>(p_u.size()); }
  int num_classes() const { return static_cast<int>(p_a_given_u.cols()); }
  DiscreteJoint joint() const;  // over (U, A)
};

TabularInstance random_instance(int num_states, int num_classes, Rng& rng);

/// States fall into `num_groups` groups (round-robin) that share one row of p(a|u).
TabularInstance grouped_instance(int num_states, int num_groups, int num_classes, Rng& rng);

/// Deterministic encoder: code[u] in [0, codebook).
struct QuantizedEncoder {
  std::vector<int> code;
  int codebook = 1;
};

/// Joint over (U, A, Z) with Z = encoder(U).
DiscreteJoint encoder_joint(const TabularInstance& inst, const QuantizedEncoder& enc);
double mi_z_a(const TabularInstance& inst, const QuantizedEncoder& enc);
/// I(Z; U), which equals H(Z) for a deterministic encoder.
double mi_z_u(const TabularInstance& inst, const QuantizedEncoder& enc);

/// Alternates the exact classifier step q(a|z) = p(a|z) with the exact
/// encoder step z(u) = argmax_z sum_a p(a|u) log q(a|z) (ties keep the
/// current code). Returns I(Z;A) for the initial encoder and after each step.
std::vector<double> verify_em_monotonicity(const TabularInstance& inst, QuantizedEncoder enc, int steps);

/// Groups states with identical rows of p(a|u); a sufficient statistic of A.
QuantizedEncoder sufficient_encoder(const TabularInstance& inst, double tolerance = 1e-12);

/// U -> (Z_n = f(U), Z_0 ~ p(z0 | u, a)) -> U* = fuse(Z_n, Z_0).
struct InformativenessInstance {
  TabularInstance base;
  QuantizedEncoder attribute_encoder;  // Z_n
  int z0_size = 1;
  std::vector<double> z0_given_ua;     // n x K x z0_size, row-major
  int ustar_size = 1;
  std::vector<int> fuse;               // codebook x z0_size -> U*
};

/// Exact I(A; U | U*).
double verify_informativeness(const InformativenessInstance& inst);

/// Z_n sufficient, Z_0 a deterministic function of U, fuse injective.
InformativenessInstance optimal_informativeness_instance(const TabularInstance& base, Rng& rng);
/// Same, but Z_n merges sufficient-statistic codes pairwise and Z_0 is constant.
InformativenessInstance lossy_informativeness_instance(const TabularInstance& base, Rng& rng);
/// Same as optimal, but Z_0 = (a + h(u)) mod 2 depends on the attribute, with
/// h(u) the position of u within its group, modulo 2.
InformativenessInstance dependent_informativeness_instance(const TabularInstance& base, Rng& rng);

struct BetaPoint {
  double beta = 0.0;
  double i_z_a = 0.0;
  double i_z_u = 0.0;
  QuantizedEncoder encoder;
};

/// Exact minimiser of -I(Z;A) + beta * I(Z;U) over deterministic encoders with
/// at most `codebook` codes, by enumerating set partitions of the states. Ties
/// go to the smaller I(Z;U), then to the first partition enumerated.
BetaPoint optimal_encoder(const TabularInstance& inst, double beta, int codebook);

std::vector<BetaPoint> beta_regime_curve(const TabularInstance& inst, std::span<const double> betas, int codebook);

/// Number of set partitions of `n` states into at most `k` blocks.
std::uint64_t partition_count(int n, int k);

/// Largest search `optimal_encoder` accepts.
inline constexpr std::uint64_t kMaxEncoderCandidates = 1'000'000;
inline constexpr int kMaxCodebook = 16;

}  // namespace afrl::mi
