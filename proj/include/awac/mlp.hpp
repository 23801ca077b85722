#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "awac/rng.hpp"

namespace awac {

// Feed-forward network: tanh hidden layers, linear output. All parameters live
// in one flat vector (per layer: weights column-major out x in, then bias) so
// the optimizer, gradient checks and checkpoints see a single buffer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int inputs, std::vector<int> hidden, int outputs);

  // Uniform fan-in scaled init; the output layer is scaled by `output_gain`.
  void init(Rng& rng, double output_gain);

  // Per-layer activations kept for the backward pass. activations[0] is the
  // input; activations.back() is the linear output.
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;
  };

  // x: inputs x batch. Returns outputs x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  // Accumulates dLoss/dparams into `grad` given dLoss/doutput.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_output,
                Eigen::VectorXd& grad) const;

  int inputs() const noexcept { return sizes_.empty() ? 0 : sizes_.front(); }
  int outputs() const noexcept { return sizes_.empty() ? 0 : sizes_.back(); }
  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  std::size_t num_params() const noexcept { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  bool all_finite() const noexcept { return params_.allFinite(); }

 private:
  std::size_t layer_count() const noexcept { return sizes_.size() - 1; }
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's block
  Eigen::VectorXd params_;
};

// Per-parameter adaptive first/second-moment step rule (Adam).
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

// Row-wise numerically stable log-softmax over each column of `logits`.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

}  // namespace awac
