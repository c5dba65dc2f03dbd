#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afrl/nn.hpp"

namespace afrl {

/// How the collaborative encoder F is pushed against the discriminators.
enum class AdversaryMode {
  /// F minimises sum_i mean log q(a_i | z0; D_i).
  negative_log_likelihood,
  /// F minimises the cross-entropy of every D_i against a uniform target.
  confusion,
};

/// Encoder and classifier stacks that turn a base user embedding into
/// attribute-specific embeddings z_i = E_i(u) and a debiased collaborative
/// embedding z0 = F(u). All embeddings share the base dimension d.
struct AlignmentNetworks {
  Mlp collaborative;                       // F
  std::vector<Mlp> attribute_encoders;     // E_i
  std::vector<Mlp> attribute_classifiers;  // C_i
  std::vector<Mlp> discriminators;         // D_i

  int num_attributes() const { return static_cast<int>(attribute_encoders.size()); }
  int dim() const { return collaborative.input_dim(); }

  /// Encoders have `encoder_layers` linear layers of width d; classifiers and
  /// discriminators have `classifier_layers` layers ending in `cardinalities[i]` logits.
  static AlignmentNetworks create(int dim, std::span<const int> cardinalities, int encoder_layers,
                                  int classifier_layers, Rng& rng);
};

Matrix encode_attribute(const AlignmentNetworks& nets, const Matrix& users, int attribute);
Matrix encode_collaborative(const AlignmentNetworks& nets, const Matrix& users);

/// 1/2 * ||z||^2.
double compression_penalty(const Eigen::Ref<const Vector>& z);

struct AlignmentLoss {
  double encoder_objective = 0.0;     // mean of 1/2||z||^2 + beta * CE
  double classifier_objective = 0.0;  // mean CE with z held fixed
  double cross_entropy = 0.0;
  double compression = 0.0;
  MlpGradient encoder_grad;
  MlpGradient classifier_grad;
};

/// Objective of one attribute encoder/classifier pair over a batch
/// (`users` is d x B). The classifier gradient treats z as a constant, so it
/// never reaches the encoder. Throws TrainingError naming `batch_index` on a
/// non-finite value.
AlignmentLoss alignment_loss(const Mlp& encoder, const Mlp& classifier, const Matrix& users,
                             std::span<const int> labels, double beta, std::size_t batch_index = 0);

struct AlignmentOptimizers {
  Adam encoder;
  Adam classifier;
};

/// One classifier step, then one encoder step against the updated classifier.
AlignmentLoss alignment_step(Mlp& encoder, Mlp& classifier, AlignmentOptimizers& opt, const Matrix& users,
                             std::span<const int> labels, double beta, std::size_t batch_index = 0);

/// Mean over the batch of ||z0 - u||^2.
double reconstruction_loss(const Matrix& z0, const Matrix& users);

struct AdversarialLoss {
  double collaborative_objective = 0.0;   // reconstruction + lambda * adversarial term
  double discriminator_objective = 0.0;   // sum_i mean CE of D_i on detached z0
  double reconstruction = 0.0;
  double adversarial_term = 0.0;          // the quantity multiplied by lambda
  MlpGradient collaborative_grad;
  std::vector<MlpGradient> discriminator_grads;
};

/// `labels[i]` holds attribute i for every column of `users`.
AdversarialLoss adversarial_objectives(const Mlp& collaborative, std::span<const Mlp> discriminators,
                                       const Matrix& users, const std::vector<std::vector<int>>& labels,
                                       double lambda, AdversaryMode mode = AdversaryMode::negative_log_likelihood,
                                       std::size_t batch_index = 0);

/// One step for every discriminator, then one step for F against them.
AdversarialLoss adversarial_step(Mlp& collaborative, std::vector<Mlp>& discriminators, Adam& collaborative_opt,
                                 std::vector<Adam>& discriminator_opts, const Matrix& users,
                                 const std::vector<std::vector<int>>& labels, double lambda,
                                 AdversaryMode mode = AdversaryMode::negative_log_likelihood,
                                 std::size_t batch_index = 0);

}  // namespace afrl
