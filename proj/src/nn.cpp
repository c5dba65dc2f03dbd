#include "afrl/nn.hpp"

#include <cmath>

#include <fmt/core.h>

namespace afrl {

Mlp::Mlp(std::span<const int> widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("MLP widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Matrix(out, in), Vector(out)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = dist(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(std::span<const int> widths) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    net.layers_.push_back({Matrix::Zero(widths[l + 1], widths[l]), Vector::Zero(widths[l + 1])});
  }
  return net;
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& layer : layers_) w.push_back(static_cast<int>(layer.weight.rows()));
  return w;
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.rows() != input_dim()) {
    throw std::invalid_argument(fmt::format("MLP input has {} rows, expected {}", x.rows(), input_dim()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix next = layers_[l].weight * h;
    next.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  if (x.rows() != input_dim()) {
    throw std::invalid_argument(fmt::format("MLP input has {} rows, expected {}", x.rows(), input_dim()));
  }
  tape.inputs.clear();
  tape.inputs.reserve(layers_.size());
  tape.inputs.push_back(x);
  Matrix h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].weight * tape.inputs.back();
    h.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) tape.inputs.push_back(h.cwiseMax(0.0));
  }
  return h;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& grad_out, MlpGradient* grad) const {
  if (tape.inputs.size() != layers_.size()) throw std::logic_error("tape does not belong to this network");
  Matrix delta = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Matrix& input = tape.inputs[k];
    if (grad != nullptr) {
      (*grad)[k].weight.noalias() += delta * input.transpose();
      (*grad)[k].bias += delta.rowwise().sum();
    }
    Matrix upstream = layers_[k].weight.transpose() * delta;
    if (k > 0) {
      // input[k] = relu(pre[k-1]); relu'(x) = 1 exactly where the output is positive.
      upstream = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(upstream);
  }
  return delta;
}

MlpGradient Mlp::zero_gradient() const {
  MlpGradient g;
  g.reserve(layers_.size());
  for (const auto& layer : layers_) {
    g.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<double> Mlp::parameters() const { return flatten(layers_); }

void Mlp::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw std::invalid_argument("parameter vector has the wrong length");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = values[k++];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias.data()[i] = values[k++];
  }
}

std::string Mlp::digest() const {
  BinaryWriter w;
  save(w);
  return sha256_hex(w.bytes());
}

void Mlp::save(BinaryWriter& out) const {
  out.put<std::uint32_t>(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& layer : layers_) {
    out.put_matrix(layer.weight);
    out.put_matrix(layer.bias);
  }
}

Mlp Mlp::load(BinaryReader& in) {
  Mlp net;
  const auto n = in.get<std::uint32_t>();
  for (std::uint32_t l = 0; l < n; ++l) {
    DenseLayer layer;
    layer.weight = in.get_matrix();
    Matrix b = in.get_matrix();
    if (b.cols() != 1 || b.rows() != layer.weight.rows()) throw DataError("corrupt MLP layer shapes");
    layer.bias = b.col(0);
    if (l > 0 && layer.weight.cols() != net.layers_.back().weight.rows()) {
      throw DataError("corrupt MLP: consecutive layer widths disagree");
    }
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

std::vector<double> flatten(const MlpGradient& grad) {
  std::vector<double> out;
  for (const auto& layer : grad) {
    out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return out;
}

Adam::Adam(const Mlp& net, AdamOptions options)
    : options_(options), m_(net.zero_gradient()), v_(net.zero_gradient()) {}

void Adam::step(Mlp& net, const MlpGradient& grad) {
  auto& layers = net.layers();
  if (grad.size() != layers.size() || m_.size() != layers.size()) {
    throw std::logic_error("optimizer state does not match the network");
  }
  ++t_;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adam_update(layers[l].weight, grad[l].weight, m_[l].weight, v_[l].weight, t_, options_);
    adam_update(layers[l].bias, grad[l].bias, m_[l].bias, v_[l].bias, t_, options_);
  }
}

void Adam::save(BinaryWriter& out) const {
  out.put(options_.learning_rate);
  out.put(options_.beta1);
  out.put(options_.beta2);
  out.put(options_.epsilon);
  out.put(t_);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m_.size()));
  for (std::size_t l = 0; l < m_.size(); ++l) {
    out.put_matrix(m_[l].weight);
    out.put_matrix(m_[l].bias);
    out.put_matrix(v_[l].weight);
    out.put_matrix(v_[l].bias);
  }
}

Adam Adam::load(BinaryReader& in) {
  Adam a;
  a.options_.learning_rate = in.get<double>();
  a.options_.beta1 = in.get<double>();
  a.options_.beta2 = in.get<double>();
  a.options_.epsilon = in.get<double>();
  a.t_ = in.get<std::int64_t>();
  const auto n = in.get<std::uint32_t>();
  for (std::uint32_t l = 0; l < n; ++l) {
    DenseLayer m, v;
    m.weight = in.get_matrix();
    m.bias = in.get_matrix().col(0);
    v.weight = in.get_matrix();
    v.bias = in.get_matrix().col(0);
    a.m_.push_back(std::move(m));
    a.v_.push_back(std::move(v));
  }
  return a;
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

Matrix softmax(const Matrix& logits) { return log_softmax(logits).array().exp().matrix(); }

LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const auto batch = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch) throw std::invalid_argument("label count differs from batch size");
  const Matrix logp = log_softmax(logits);
  LossAndGrad out;
  out.grad = logp.array().exp().matrix();
  double total = 0.0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int y = labels[j];
    if (y < 0 || y >= logits.rows()) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", y, logits.rows()));
    }
    total -= logp(y, j);
    out.grad(y, j) -= 1.0;
  }
  const double inv = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
  out.value = total * inv;
  out.grad *= inv;
  return out;
}

LossAndGrad uniform_cross_entropy(const Matrix& logits) {
  const auto batch = logits.cols();
  const double k = static_cast<double>(logits.rows());
  const Matrix logp = log_softmax(logits);
  const double inv = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
  LossAndGrad out;
  out.value = -logp.sum() / k * inv;
  out.grad = ((logp.array().exp() - 1.0 / k) * inv).matrix();
  return out;
}

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace afrl
