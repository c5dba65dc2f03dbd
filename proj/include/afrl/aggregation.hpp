#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afrl/nn.hpp"

namespace afrl {

/// Per-attribute flags: 1 = non-sensitive, 0 = sensitive.
struct FairnessRequirement {
  std::vector<int> flags;

  int num_attributes() const { return static_cast<int>(flags.size()); }
  int num_sensitive() const;
  std::vector<int> sensitive_attributes() const;

  /// "G+A" marks Gender and Age sensitive; "none" (or "") marks nothing sensitive.
  /// Names are matched against `short_names` or the full names, case-insensitively.
  static FairnessRequirement parse(std::string_view text, std::span<const std::string> short_names,
                                   std::span<const std::string> names = {});
  std::string label(std::span<const std::string> short_names) const;

  static FairnessRequirement none(int num_attributes);
  static FairnessRequirement all_sensitive(int num_attributes);

  bool operator==(const FairnessRequirement&) const = default;
};

/// All 2^M requirements; entry k marks attribute i sensitive iff bit i of k is set.
std::vector<FairnessRequirement> all_requirements(int num_attributes);

/// Block-constant expansion to length M*d.
Vector expand_mask(const FairnessRequirement& req, int dim);

enum class AggregatorVariant {
  full,
  no_z_ui,  // attribute blocks always zero
  no_z_u0,  // collaborative block always zero
};

std::string_view variant_name(AggregatorVariant v);
AggregatorVariant parse_variant(std::string_view name);

/// G with widths {(M+1)d, 2d, 2d, d}.
Mlp make_aggregator(int dim, int num_attributes, Rng& rng);

/// Stacks [z0; s ⊙ (z1; ...; zM)] column-wise. Masked blocks are assigned
/// zero rather than multiplied, so their old contents never leak.
Matrix aggregator_input(const Matrix& z0, const std::vector<Matrix>& z, const FairnessRequirement& req,
                        AggregatorVariant variant = AggregatorVariant::full);

/// Same, with one requirement per column.
Matrix aggregator_input(const Matrix& z0, const std::vector<Matrix>& z, std::span<const FairnessRequirement> reqs,
                        AggregatorVariant variant = AggregatorVariant::full);

/// u* = G(aggregator_input(...)), one column per user.
Matrix aggregate(const Mlp& aggregator, const Matrix& z0, const std::vector<Matrix>& z,
                 const FairnessRequirement& req, AggregatorVariant variant = AggregatorVariant::full);

struct RecLoss {
  double value = 0.0;
  MlpGradient aggregator_grad;
  Matrix input_grad;  // d(value)/d(aggregator input); only used for end-to-end training
};

/// Mean over the batch of -ln sigmoid(<u*, v+> - <u*, v->) with frozen item
/// embeddings; column b of `input` pairs with `positives[b]` and `negatives[b]`.
RecLoss aggregator_rec_loss(const Mlp& aggregator, const Matrix& input, const Matrix& items,
                            std::span<const int> positives, std::span<const int> negatives,
                            std::size_t batch_index = 0);

}  // namespace afrl
