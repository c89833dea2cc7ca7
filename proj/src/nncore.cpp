#include "banditmatch/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace bmatch::nn {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw UsageError("tensor data size does not match shape");
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Tensor t(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols()) throw UsageError("ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  }
  return t;
}

Tensor Tensor::row_vector(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw UsageError("item() on a non-scalar tensor");
  return data_[0];
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw UsageError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

// out += a * b^T
void matmul_bt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data().data() + i * n;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.data().data() + j * n;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += ai[k] * bj[k];
      out(i, j) += s;
    }
  }
}

// out += a^T * b
void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* br = b.data().data() + r * m;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double air = a(r, i);
      if (air == 0.0) continue;
      double* oi = out.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += air * br[j];
    }
  }
}

void ensure_grad(Node& n) {
  if (!n.value.same_shape(n.grad)) n.grad = Tensor(n.value.rows(), n.value.cols());
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  for (const auto& in : inputs) {
    node->requires_grad = node->requires_grad || in.requires_grad();
    node->inputs.push_back(in.node());
  }
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return Var(std::move(node));
}

// Gradient buffer of input i, or nullptr if that input needs none.
Tensor* input_grad(Node& n, std::size_t i) {
  Node& in = *n.inputs[i];
  if (!in.requires_grad) return nullptr;
  ensure_grad(in);
  return &in.grad;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  Tensor out(a.rows(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* oi = out.data().data() + i * m;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data().data() + k * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += aik * bk[j];
    }
  }
  return out;
}

void add_row_inplace(Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw UsageError("add_row: bias shape mismatch");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] += bias[c];
  }
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

double clamped_sigmoid(double logit) {
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  const double p = 1.0 / (1.0 + std::exp(-z));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

Tensor clamped_sigmoid(const Tensor& logits) {
  Tensor out = logits;
  for (double& v : out.data()) v = clamped_sigmoid(v);
  return out;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = Tensor(node->value.rows(), node->value.cols());
  node->requires_grad = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (!node_) return;
  ensure_grad(*node_);
  node_->grad.fill(0.0);
}

Var matmul(const Var& a, const Var& b) {
  return make_op(matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (Tensor* ga = input_grad(n, 0)) matmul_bt_acc(n.grad, bv, *ga);
    if (Tensor* gb = input_grad(n, 1)) matmul_at_acc(av, n.grad, *gb);
  });
}

Var add_row(const Var& x, const Var& bias) {
  Tensor out = x.value();
  add_row_inplace(out, bias.value());
  return make_op(std::move(out), {x, bias}, [](Node& n) {
    if (Tensor* gx = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i];
    }
    if (Tensor* gb = input_grad(n, 1)) {
      for (std::size_t r = 0; r < n.grad.rows(); ++r) {
        for (std::size_t c = 0; c < n.grad.cols(); ++c) (*gb)[c] += n.grad(r, c);
      }
    }
  });
}

Var relu(const Var& x) {
  return make_op(relu(x.value()), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    const Tensor& xv = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += n.grad[i];
    }
  });
}

Var tanh(const Var& x) {
  return make_op(tanh(x.value()), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double t = n.value[i];
      (*gx)[i] += n.grad[i] * (1.0 - t * t);
    }
  });
}

Var sigmoid(const Var& logits) {
  return make_op(clamped_sigmoid(logits.value()), {logits}, [](Node& n) {
    Tensor* gz = input_grad(n, 0);
    const Tensor& z = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (std::abs(z[i]) >= kLogitClamp) continue;
      const double p = n.value[i];
      if (p <= kProbFloor || p >= 1.0 - kProbFloor) continue;
      (*gz)[i] += n.grad[i] * p * (1.0 - p);
    }
  });
}

Var log(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::log(v);
  return make_op(std::move(out), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    const Tensor& xv = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] / xv[i];
  });
}

Var exp(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return make_op(std::move(out), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] * n.value[i];
  });
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = input_grad(n, k)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
      }
    }
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    if (Tensor* ga = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i];
    }
    if (Tensor* gb = input_grad(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*gb)[i] -= n.grad[i];
    }
  });
}

Var operator*(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (Tensor* ga = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i] * bv[i];
    }
    if (Tensor* gb = input_grad(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*gb)[i] += n.grad[i] * av[i];
    }
  });
}

Var operator*(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return make_op(std::move(out), {a}, [s](Node& n) {
    Tensor* ga = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i] * s;
  });
}

Var operator*(double s, const Var& a) { return a * s; }

Var operator+(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return make_op(std::move(out), {a}, [](Node& n) {
    Tensor* ga = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i];
  });
}

Var one_minus(const Var& x) { return x * -1.0 + 1.0; }

Var mul_const(const Var& x, const Tensor& c) {
  require_same_shape(x.value(), c, "mul_const");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return make_op(std::move(out), {x}, [c](Node& n) {
    Tensor* gx = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] * c[i];
  });
}

Var div_const(const Var& x, const Tensor& c) {
  require_same_shape(x.value(), c, "div_const");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= c[i];
  return make_op(std::move(out), {x}, [c](Node& n) {
    Tensor* gx = input_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] / c[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_op(Tensor::scalar(s), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    const double g = n.grad[0];
    for (double& v : gx->data()) v += g;
  });
}

Var row_sum(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    out[r] = s;
  }
  return make_op(std::move(out), {x}, [](Node& n) {
    Tensor* gx = input_grad(n, 0);
    for (std::size_t r = 0; r < gx->rows(); ++r) {
      for (double& v : gx->row(r)) v += n.grad[r];
    }
  });
}

Var min_const(const Var& x, double cap) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::min(v, cap);
  return make_op(std::move(out), {x}, [cap](Node& n) {
    Tensor* gx = input_grad(n, 0);
    const Tensor& xv = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (xv[i] < cap) (*gx)[i] += n.grad[i];
    }
  });
}

void backward(const Var& loss) {
  if (!loss) throw UsageError("backward on an empty variable");
  if (loss.value().rows() != 1 || loss.value().cols() != 1) {
    throw UsageError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad = Tensor(n->value.rows(), n->value.cols());
    else ensure_grad(*n);
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward_fn) n->backward_fn(*n);
  }
}

double grad_check(const std::function<Var()>& loss_fn, std::span<Var> params, double fd_epsilon) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (Var& p : params) p.zero_grad();
  Var loss = loss_fn();
  if (!loss.value().all_finite()) return inf;
  backward(loss);

  double worst = 0.0;
  for (Var& p : params) {
    const Tensor analytic = p.grad();
    if (!analytic.all_finite()) return inf;
    Tensor& values = p.mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + fd_epsilon;
      const double up = loss_fn().value().item();
      values[i] = orig - fd_epsilon;
      const double down = loss_fn().value().item();
      values[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) return inf;
      const double fd = (up - down) / (2.0 * fd_epsilon);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  for (Var& p : params) p.zero_grad();
  return worst;
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (input_dim <= 0) throw ConfigError("input_dim must be positive");
  if (output_dim <= 0) throw ConfigError("output_dim must be positive");
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError("hidden dims must be positive");
  }
}

namespace {

std::vector<int> layer_dims(const MlpSpec& spec) {
  std::vector<int> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);
  return dims;
}

}  // namespace

Mlp::Mlp(const MlpSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  const auto dims = layer_dims(spec_);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(dims[l]);
    const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
    const bool output_layer = l + 2 == dims.size();
    // He for rectifier layers, Glorot for tanh and the sigmoid head.
    const double bound = output_layer || spec_.hidden_activation == Activation::tanh
                             ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                             : std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w(fan_in, fan_out);
    for (double& v : w.data()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    params_.push_back(Var::parameter(std::move(w), "W" + std::to_string(l)));
    params_.push_back(Var::parameter(Tensor(1, fan_out), "b" + std::to_string(l)));
  }
}

Mlp Mlp::zeros(const MlpSpec& spec) {
  Mlp m(spec, 0);
  for (Var& p : m.params_) p.mutable_value().fill(0.0);
  return m;
}

void Mlp::check_input(const Tensor& states) const {
  if (states.cols() != static_cast<std::size_t>(spec_.input_dim)) {
    throw ConfigError("state dimension " + std::to_string(states.cols()) +
                      " does not match network input " + std::to_string(spec_.input_dim));
  }
}

Var Mlp::forward(const Var& states) const {
  check_input(states.value());
  Var h = states;
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_row(matmul(h, params_[2 * l]), params_[2 * l + 1]);
    if (l + 1 < layers) h = spec_.hidden_activation == Activation::relu ? relu(h) : tanh(h);
  }
  return sigmoid(h);
}

Tensor Mlp::probs(const Tensor& states) const {
  check_input(states);
  Tensor h = states;
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = matmul(h, params_[2 * l].value());
    add_row_inplace(h, params_[2 * l + 1].value());
    if (l + 1 < layers) h = spec_.hidden_activation == Activation::relu ? relu(h) : tanh(h);
  }
  return clamped_sigmoid(h);
}

void Mlp::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

void Mlp::set_requires_grad(bool on) {
  for (Var& p : params_) p.set_requires_grad(on);
}

Mlp Mlp::clone() const {
  Mlp out;
  out.spec_ = spec_;
  for (const Var& p : params_) {
    Var copy = Var::parameter(p.value(), p.name());
    copy.set_requires_grad(p.requires_grad());
    out.params_.push_back(std::move(copy));
  }
  return out;
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Var> params)
    : cfg_(cfg), params_(std::move(params)) {
  for (const Var& p : params_) {
    if (!p.requires_grad()) throw UsageError("optimizer given a frozen parameter '" + p.name() + "'");
    m_.emplace_back(p.value().size(), 0.0);
    v_.emplace_back(p.value().size(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const Var& p : params_) {
    if (p.grad().size() != p.value().size()) continue;
    if (!p.grad().all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p.name() + "' at step " +
                         std::to_string(t_ + 1) + "; update skipped");
    }
  }
  ++t_;
  const double lr = cfg_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k];
    if (p.grad().size() != p.value().size()) continue;
    auto& w = p.mutable_value().data();
    const auto& g = p.grad().data();
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace bmatch::nn
