#include "awac/mlp.hpp"

#include <cmath>

#include "awac/error.hpp"

namespace awac {

Mlp::Mlp(int inputs, std::vector<int> hidden, int outputs) {
  if (inputs <= 0 || outputs <= 0) throw ConfigError("mlp: sizes must be positive");
  sizes_.push_back(inputs);
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("mlp: hidden sizes must be positive");
    sizes_.push_back(h);
  }
  sizes_.push_back(outputs);
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  const Eigen::Index out = sizes_[l + 1];
  return {params_.data() + offsets_[l] + out * sizes_[l], out};
}

void Mlp::init(Rng& rng, double output_gain) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double gain = (l + 1 == layer_count()) ? output_gain : 1.0;
    const double bound = gain * std::sqrt(3.0 / in);
    std::uniform_real_distribution<double> u(-bound, bound);
    double* w = params_.data() + offsets_[l];
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out) * in; ++i) w[i] = u(rng);
    for (int i = 0; i < out; ++i) w[static_cast<Eigen::Index>(out) * in + i] = 0.0;
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    h = (l + 1 == layer_count()) ? z : Eigen::MatrixXd(z.array().tanh());
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  cache.activations.clear();
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * cache.activations.back();
    z.colwise() += bias(l);
    if (l + 1 == layer_count()) {
      cache.activations.push_back(std::move(z));
    } else {
      cache.activations.push_back(z.array().tanh().matrix());
    }
  }
  return cache.activations.back();
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_output,
                   Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = grad_output;  // dL/dz of the current layer
  for (std::size_t l = layer_count(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.activations[l];
    const Eigen::Index out = sizes_[l + 1];
    const Eigen::Index in = sizes_[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + out * in, out);
    gw.noalias() += delta * input.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = weight(l).transpose() * delta;
      // tanh' = 1 - tanh^2, and `input` holds the tanh output of layer l-1.
      delta = back.array() * (1.0 - input.array().square());
    }
  }
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace awac
