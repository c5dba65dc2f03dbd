#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "afrl/io.hpp"

namespace afrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Batches are stored column-major: one sample per column.

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Same shapes as the network it belongs to.
using MlpGradient = std::vector<DenseLayer>;

/// Fully connected network with ReLU between layers and a linear output.
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> inputs;  // input seen by each layer
  };

  Mlp() = default;

  /// `widths` = {in, hidden..., out}. Weights and biases are drawn from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::span<const int> widths, Rng& rng);

  static Mlp zeros(std::span<const int> widths);

  int input_dim() const;
  int output_dim() const;
  int depth() const { return static_cast<int>(layers_.size()); }
  std::vector<int> widths() const;

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;

  /// Backpropagates `grad_out` through the taped pass. Parameter gradients are
  /// accumulated into `grad` when non-null; the input gradient is returned.
  Matrix backward(const Tape& tape, const Matrix& grad_out, MlpGradient* grad) const;

  MlpGradient zero_gradient() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  /// SHA-256 over the raw parameter bytes.
  std::string digest() const;

  void save(BinaryWriter& out) const;
  static Mlp load(BinaryReader& in);

 private:
  std::vector<DenseLayer> layers_;
};

std::vector<double> flatten(const MlpGradient& grad);

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, std::int64_t t, const AdamOptions& opt) {
  m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
  v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  param.array() -= opt.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
}

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, AdamOptions options);

  void step(Mlp& net, const MlpGradient& grad);

  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  void save(BinaryWriter& out) const;
  static Adam load(BinaryReader& in);

 private:
  AdamOptions options_;
  std::int64_t t_ = 0;
  MlpGradient m_;
  MlpGradient v_;
};

struct LossAndGrad {
  double value = 0.0;
  Matrix grad;  // d(value)/d(logits)
};

Matrix softmax(const Matrix& logits);
Matrix log_softmax(const Matrix& logits);

/// Mean over columns of -log softmax(logits)[label].
LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Mean over columns of the cross-entropy against a uniform target.
LossAndGrad uniform_cross_entropy(const Matrix& logits);

/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);
double sigmoid(double x);

bool all_finite(const Matrix& m);

}  // namespace afrl
