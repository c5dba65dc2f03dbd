#include "afrl/alignment.hpp"

#include <cmath>

#include <fmt/core.h>

namespace afrl {
namespace {

void require_finite(double value, std::string_view what, std::size_t batch_index) {
  if (!std::isfinite(value)) {
    throw TrainingError(fmt::format("{} is non-finite ({}) at batch {}", what, value, batch_index));
  }
}

std::vector<int> stack_widths(int in, int hidden, int out, int layers) {
  std::vector<int> w{in};
  for (int l = 1; l < layers; ++l) w.push_back(hidden);
  w.push_back(out);
  return w;
}

}  // namespace

AlignmentNetworks AlignmentNetworks::create(int dim, std::span<const int> cardinalities, int encoder_layers,
                                            int classifier_layers, Rng& rng) {
  if (dim < 1 || encoder_layers < 1 || classifier_layers < 1) {
    throw std::invalid_argument("alignment networks need dim, encoder_layers and classifier_layers >= 1");
  }
  AlignmentNetworks nets;
  nets.collaborative = Mlp(stack_widths(dim, dim, dim, encoder_layers), rng);
  for (int card : cardinalities) {
    if (card < 2) throw std::invalid_argument("every attribute needs at least two values");
    nets.attribute_encoders.emplace_back(stack_widths(dim, dim, dim, encoder_layers), rng);
    nets.attribute_classifiers.emplace_back(stack_widths(dim, dim, card, classifier_layers), rng);
    nets.discriminators.emplace_back(stack_widths(dim, dim, card, classifier_layers), rng);
  }
  return nets;
}

Matrix encode_attribute(const AlignmentNetworks& nets, const Matrix& users, int attribute) {
  if (attribute < 0 || attribute >= nets.num_attributes()) {
    throw std::out_of_range(fmt::format("attribute index {} outside [0, {})", attribute, nets.num_attributes()));
  }
  return nets.attribute_encoders[static_cast<std::size_t>(attribute)].forward(users);
}

Matrix encode_collaborative(const AlignmentNetworks& nets, const Matrix& users) {
  return nets.collaborative.forward(users);
}

double compression_penalty(const Eigen::Ref<const Vector>& z) { return 0.5 * z.squaredNorm(); }

AlignmentLoss alignment_loss(const Mlp& encoder, const Mlp& classifier, const Matrix& users,
                             std::span<const int> labels, double beta, std::size_t batch_index) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const double inv = users.cols() > 0 ? 1.0 / static_cast<double>(users.cols()) : 0.0;

  Mlp::Tape enc_tape;
  Mlp::Tape cls_tape;
  const Matrix z = encoder.forward(users, enc_tape);
  const Matrix logits = classifier.forward(z, cls_tape);
  const auto ce = cross_entropy(logits, labels);

  AlignmentLoss out;
  out.cross_entropy = ce.value;
  out.compression = 0.5 * z.squaredNorm() * inv;
  out.classifier_objective = ce.value;
  out.encoder_objective = out.compression + beta * ce.value;
  require_finite(out.encoder_objective, "alignment loss", batch_index);

  out.classifier_grad = classifier.zero_gradient();
  const Matrix dz_ce = classifier.backward(cls_tape, ce.grad, &out.classifier_grad);
  out.encoder_grad = encoder.zero_gradient();
  encoder.backward(enc_tape, z * inv + beta * dz_ce, &out.encoder_grad);
  return out;
}

AlignmentLoss alignment_step(Mlp& encoder, Mlp& classifier, AlignmentOptimizers& opt, const Matrix& users,
                             std::span<const int> labels, double beta, std::size_t batch_index) {
  const auto inner = alignment_loss(encoder, classifier, users, labels, beta, batch_index);
  opt.classifier.step(classifier, inner.classifier_grad);
  auto outer = alignment_loss(encoder, classifier, users, labels, beta, batch_index);
  opt.encoder.step(encoder, outer.encoder_grad);
  outer.classifier_objective = inner.classifier_objective;
  outer.classifier_grad = inner.classifier_grad;
  return outer;
}

double reconstruction_loss(const Matrix& z0, const Matrix& users) {
  if (z0.rows() != users.rows() || z0.cols() != users.cols()) {
    throw std::invalid_argument("reconstruction_loss: shapes differ");
  }
  if (users.cols() == 0) return 0.0;
  return (z0 - users).squaredNorm() / static_cast<double>(users.cols());
}

AdversarialLoss adversarial_objectives(const Mlp& collaborative, std::span<const Mlp> discriminators,
                                       const Matrix& users, const std::vector<std::vector<int>>& labels,
                                       double lambda, AdversaryMode mode, std::size_t batch_index) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  if (labels.size() != discriminators.size()) throw std::invalid_argument("one label row per discriminator expected");
  const double inv = users.cols() > 0 ? 1.0 / static_cast<double>(users.cols()) : 0.0;

  Mlp::Tape f_tape;
  const Matrix z0 = collaborative.forward(users, f_tape);
  AdversarialLoss out;
  out.reconstruction = reconstruction_loss(z0, users);
  Matrix dz0 = 2.0 * inv * (z0 - users);

  for (std::size_t i = 0; i < discriminators.size(); ++i) {
    const Mlp& d = discriminators[i];
    Mlp::Tape d_tape;
    const Matrix logits = d.forward(z0, d_tape);
    const auto ce = cross_entropy(logits, labels[i]);
    out.discriminator_objective += ce.value;
    auto grad = d.zero_gradient();
    const Matrix dz_ce = d.backward(d_tape, ce.grad, &grad);
    out.discriminator_grads.push_back(std::move(grad));
    if (mode == AdversaryMode::negative_log_likelihood) {
      out.adversarial_term -= ce.value;
      dz0 -= lambda * dz_ce;
    } else {
      const auto uce = uniform_cross_entropy(logits);
      out.adversarial_term += uce.value;
      dz0 += lambda * d.backward(d_tape, uce.grad, nullptr);
    }
  }
  out.collaborative_objective = out.reconstruction + lambda * out.adversarial_term;
  require_finite(out.collaborative_objective, "collaborative objective", batch_index);
  require_finite(out.discriminator_objective, "discriminator objective", batch_index);

  out.collaborative_grad = collaborative.zero_gradient();
  collaborative.backward(f_tape, dz0, &out.collaborative_grad);
  return out;
}

AdversarialLoss adversarial_step(Mlp& collaborative, std::vector<Mlp>& discriminators, Adam& collaborative_opt,
                                 std::vector<Adam>& discriminator_opts, const Matrix& users,
                                 const std::vector<std::vector<int>>& labels, double lambda, AdversaryMode mode,
                                 std::size_t batch_index) {
  if (discriminator_opts.size() != discriminators.size()) throw std::invalid_argument("one optimizer per discriminator");
  const auto inner = adversarial_objectives(collaborative, discriminators, users, labels, lambda, mode, batch_index);
  for (std::size_t i = 0; i < discriminators.size(); ++i) {
    discriminator_opts[i].step(discriminators[i], inner.discriminator_grads[i]);
  }
  auto outer = adversarial_objectives(collaborative, discriminators, users, labels, lambda, mode, batch_index);
  collaborative_opt.step(collaborative, outer.collaborative_grad);
  outer.discriminator_objective = inner.discriminator_objective;
  outer.discriminator_grads = inner.discriminator_grads;
  return outer;
}

}  // namespace afrl
