#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "banditmatch/common.hpp"

namespace bmatch::nn {

/// Dense row-major matrix of doubles. Vectors are 1×n or n×1 matrices.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(const std::vector<std::vector<double>>& rows);
  static Tensor row_vector(std::span<const double> values);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain kernels shared by the graph ops and the no-grad inference path, so
// both produce bit-identical values.
Tensor matmul(const Tensor& a, const Tensor& b);
void add_row_inplace(Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

inline constexpr double kLogitClamp = 15.0;
inline constexpr double kProbFloor = 1e-7;

/// Sigmoid of logits clamped to ±kLogitClamp, then clamped to
/// [kProbFloor, 1 - kProbFloor].
Tensor clamped_sigmoid(const Tensor& logits);
double clamped_sigmoid(double logit);

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;
};

/// Handle to a value in the reverse-mode graph. Parameters are leaf
/// variables with requires_grad; every op records a closure that pushes its
/// output gradient back to its inputs.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value, std::string name);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::string& name() const { return node_->name; }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

using ParamTensor = Var;

// Graph ops. Elementwise binary ops require equal shapes; there is no
// general broadcasting beyond add_row.
Var matmul(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& bias);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& logits);
Var log(const Var& x);
Var exp(const Var& x);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, double s);
Var one_minus(const Var& x);
Var mul_const(const Var& x, const Tensor& c);
Var div_const(const Var& x, const Tensor& c);
Var sum(const Var& x);
Var row_sum(const Var& x);
/// min(x, cap) elementwise; gradient is zero where the cap is active.
Var min_const(const Var& x, double cap);

/// Reverse pass from a 1×1 loss. Interior gradients start from zero on every
/// call; leaf gradients accumulate until zero_grad().
void backward(const Var& loss);

/// Max over all parameter entries of |analytic - fd| / max(|analytic|, |fd|, 1e-8),
/// with central differences of step fd_epsilon. Returns +inf if the loss or
/// any gradient is non-finite.
double grad_check(const std::function<Var()>& loss_fn, std::span<Var> params,
                  double fd_epsilon = 1e-5);

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims{128, 128};
  int output_dim = 0;
  Activation hidden_activation = Activation::relu;

  void validate() const;
  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Multi-label MLP: hidden layers with the chosen activation, per-class
/// clamped sigmoid head.
class Mlp {
 public:
  Mlp() = default;
  /// He-uniform weights, zero biases.
  Mlp(const MlpSpec& spec, std::uint64_t seed);
  static Mlp zeros(const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }

  /// Class probabilities for a B×input_dim batch, recorded in the graph.
  Var forward(const Var& states) const;
  /// Same values without recording a graph.
  Tensor probs(const Tensor& states) const;

  std::vector<Var>& params() { return params_; }
  const std::vector<Var>& params() const { return params_; }
  void zero_grad();
  void set_requires_grad(bool on);

  /// Deep copy: new parameter nodes holding equal values.
  Mlp clone() const;

 private:
  void check_input(const Tensor& states) const;

  MlpSpec spec_;
  std::vector<Var> params_;  // W0, b0, W1, b1, ...
};

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<Var> params);

  /// Applies one update from the accumulated gradients. Throws NumericError
  /// (parameters untouched) if any gradient is non-finite.
  void step();
  void zero_grad();
  long steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Var> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr int kVersion = 1;
  MlpSpec spec;
  std::string role;
  std::vector<NamedTensor> tensors;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const Mlp& mlp, std::string role);
Mlp mlp_from_checkpoint(const Checkpoint& ckpt);

}  // namespace bmatch::nn
