#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "battbench/errors.hpp"
#include "battbench/rng.hpp"

namespace battbench::nn {

enum class Head { Linear, Softmax };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Column-wise softmax, shifted by the column max so large logits cannot
/// overflow.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

/// Column-wise log-softmax via log-sum-exp.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const auto max = logits.colwise().maxCoeff();
  Matrix<Scalar> shifted = logits.rowwise() - max;
  const auto lse = shifted.array().exp().colwise().sum().log();
  shifted.array().rowwise() -= lse;
  return shifted;
}

/// Parameter-shaped container, used both for gradients and optimizer moments.
template <typename Scalar>
struct MlpParams {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;

  bool all_finite() const {
    for (const auto& w : weights) if (!w.allFinite()) return false;
    for (const auto& b : biases) if (!b.allFinite()) return false;
    return true;
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }

  void scale(Scalar factor) {
    for (auto& w : weights) w *= factor;
    for (auto& b : biases) b *= factor;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }
};

template <typename Scalar>
class Mlp;

/// Forward intermediates needed by the reverse pass. A tape is bound to the
/// network and parameter version that produced it and may be consumed once.
template <typename Scalar>
class Tape {
 public:
  Tape() = default;

  const Matrix<Scalar>& output() const { return output_; }
  const Matrix<Scalar>& logits() const { return logits_; }
  Eigen::Index batch_size() const { return logits_.cols(); }

 private:
  friend class Mlp<Scalar>;
  // activations_[0] is the input, activations_[l] the output of hidden layer l.
  std::vector<Matrix<Scalar>> activations_;
  Matrix<Scalar> logits_;
  Matrix<Scalar> output_;
  const Mlp<Scalar>* owner_ = nullptr;
  std::uint64_t version_ = 0;
  bool consumed_ = false;
};

/// Dense feed-forward network with tanh hidden layers. Inputs are laid out one
/// sample per column.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialized network with the given layer widths.
  Mlp(std::vector<int> widths, Head head) : widths_(std::move(widths)), head_(head) {
    if (widths_.size() < 2) throw Error(ErrorKind::Shape, "an MLP needs at least input and output widths");
    for (int w : widths_) {
      if (w < 1) throw Error(ErrorKind::Shape, "layer widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      params_.weights.push_back(Matrix<Scalar>::Zero(widths_[l + 1], widths_[l]));
      params_.biases.push_back(Vector<Scalar>::Zero(widths_[l + 1]));
    }
  }

  /// Xavier-uniform weights, zero biases.
  static Mlp xavier(std::vector<int> widths, Head head, Rng& rng) {
    Mlp net(std::move(widths), head);
    for (auto& w : net.params_.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * limit);
      }
    }
    return net;
  }

  const std::vector<int>& widths() const { return widths_; }
  Head head() const { return head_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::size_t layer_count() const { return params_.weights.size(); }

  const MlpParams<Scalar>& params() const { return params_; }

  /// Mutable access invalidates outstanding tapes.
  MlpParams<Scalar>& mutable_params() {
    ++version_;
    return params_;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      n += params_.weights[l].size() + params_.biases[l].size();
    }
    return n;
  }

  MlpParams<Scalar> zeros_like() const {
    MlpParams<Scalar> z = params_;
    z.set_zero();
    return z;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& input, Tape<Scalar>* tape = nullptr) const {
    if (input.rows() != input_dim()) {
      throw Error(ErrorKind::Shape, "input has " + std::to_string(input.rows()) + " rows, network expects " +
                                        std::to_string(input_dim()));
    }
    if (!input.allFinite()) throw Error(ErrorKind::Numeric, "non-finite network input");
    Matrix<Scalar> h = input;
    if (tape) {
      tape->activations_.clear();
      tape->activations_.push_back(input);
    }
    const std::size_t last = layer_count() - 1;
    for (std::size_t l = 0; l < last; ++l) {
      h = ((params_.weights[l] * h).colwise() + params_.biases[l]).array().tanh().matrix();
      if (tape) tape->activations_.push_back(h);
    }
    Matrix<Scalar> logits = (params_.weights[last] * h).colwise() + params_.biases[last];
    Matrix<Scalar> out = head_ == Head::Softmax ? softmax(logits) : logits;
    if (!out.allFinite()) throw Error(ErrorKind::Numeric, "non-finite network output");
    if (tape) {
      tape->logits_ = std::move(logits);
      tape->output_ = out;
      tape->owner_ = this;
      tape->version_ = version_;
      tape->consumed_ = false;
    }
    return out;
  }

  /// Gradients of a scalar loss given dL/d(output).
  MlpParams<Scalar> backward(Tape<Scalar>& tape, const Matrix<Scalar>& d_output) const {
    check_tape(tape, d_output);
    if (head_ == Head::Linear) return backward_logits(tape, d_output);
    // Softmax Jacobian-vector product: p * (g - <g, p>) per column.
    const Matrix<Scalar>& p = tape.output_;
    const auto inner = (d_output.array() * p.array()).colwise().sum();
    Matrix<Scalar> d_logits = p.array() * (d_output.array().rowwise() - inner);
    return backward_logits(tape, d_logits);
  }

  /// Gradients of a scalar loss given dL/d(logits), i.e. before the head.
  MlpParams<Scalar> backward_logits(Tape<Scalar>& tape, const Matrix<Scalar>& d_logits) const {
    check_tape(tape, d_logits);
    tape.consumed_ = true;
    MlpParams<Scalar> grads;
    grads.weights.resize(layer_count());
    grads.biases.resize(layer_count());
    Matrix<Scalar> delta = d_logits;
    for (std::size_t l = layer_count(); l-- > 0;) {
      const Matrix<Scalar>& a_in = tape.activations_[l];
      grads.weights[l] = delta * a_in.transpose();
      grads.biases[l] = delta.rowwise().sum();
      if (l == 0) break;
      // a_in = tanh(z), so dz = (1 - a_in^2) * (W^T delta).
      delta = (params_.weights[l].transpose() * delta).array() * (Scalar(1) - a_in.array().square());
    }
    return grads;
  }

 private:
  void check_tape(const Tape<Scalar>& tape, const Matrix<Scalar>& upstream) const {
    if (tape.owner_ != this) throw Error(ErrorKind::State, "tape was recorded by a different network");
    if (tape.version_ != version_) throw Error(ErrorKind::State, "stale tape: parameters changed since forward");
    if (tape.consumed_) throw Error(ErrorKind::State, "tape already consumed by a backward pass");
    if (upstream.rows() != tape.logits_.rows() || upstream.cols() != tape.logits_.cols()) {
      throw Error(ErrorKind::Shape, "upstream gradient shape does not match the network output");
    }
  }

  std::vector<int> widths_;
  Head head_ = Head::Linear;
  MlpParams<Scalar> params_;
  std::uint64_t version_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Descends the loss whose
/// gradient is passed in.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp<Scalar>& net, AdamConfig config = {})
      : config_(config), m_(net.zeros_like()), v_(net.zeros_like()) {}

  void step(Mlp<Scalar>& net, const MlpParams<Scalar>& grads, Scalar lr) {
    if (!grads.all_finite()) throw Error(ErrorKind::Numeric, "non-finite gradient, update aborted");
    if (grads.weights.size() != m_.weights.size()) throw Error(ErrorKind::Shape, "gradient layer count mismatch");
    ++steps_;
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    auto& params = net.mutable_params();
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      if (param.rows() != g.rows() || param.cols() != g.cols()) {
        throw Error(ErrorKind::Shape, "gradient shape mismatch");
      }
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
      update(params.weights[l], m_.weights[l], v_.weights[l], grads.weights[l]);
      update(params.biases[l], m_.biases[l], v_.biases[l], grads.biases[l]);
    }
  }

  long steps() const { return steps_; }

 private:
  AdamConfig config_;
  MlpParams<Scalar> m_, v_;
  long steps_ = 0;
};

/// Rescales gradients whose global L2 norm exceeds max_norm. Returns the norm
/// before clipping.
template <typename Scalar>
Scalar clip_grad_norm(MlpParams<Scalar>& grads, Scalar max_norm) {
  const Scalar norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > Scalar(0)) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace battbench::nn
