#pragma once

#include <string>
#include <vector>

#include "banditmatch/nncore.hpp"

namespace bmatch {

enum class PolicyRole { trainable, frozen };

std::string to_string(PolicyRole r);

/// Multi-label dialog policy pi(a_c | s): one independent sigmoid per atomic
/// action. A frozen policy (the logging policy) exposes no trainable
/// parameters.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(const nn::MlpSpec& spec, std::uint64_t seed);
  static PolicyNet zeros(const nn::MlpSpec& spec);
  static PolicyNet from_mlp(nn::Mlp mlp, PolicyRole role);

  const nn::MlpSpec& spec() const { return mlp_.spec(); }
  PolicyRole role() const { return role_; }
  int num_actions() const { return mlp_.spec().output_dim; }
  int state_dim() const { return mlp_.spec().input_dim; }

  std::vector<double> probs(std::span<const double> state) const;
  nn::Tensor probs(const nn::Tensor& states) const { return mlp_.probs(states); }
  nn::Var forward(const nn::Var& states) const { return mlp_.forward(states); }

  /// Parameters for an optimizer. Throws UsageError on a frozen policy.
  std::vector<nn::Var> trainable_params();
  const std::vector<nn::Var>& params() const { return mlp_.params(); }

  /// Deep copy with role frozen; later training of this policy leaves the
  /// copy untouched.
  PolicyNet clone_frozen() const;
  PolicyNet clone_trainable() const;

  void save(const std::string& path) const;
  static PolicyNet load(const std::string& path);
  nn::Checkpoint checkpoint() const;

 private:
  nn::Mlp mlp_;
  PolicyRole role_ = PolicyRole::trainable;
};

/// {c : pi(a_c|s) > 0.5} from a probability row (strict inequality).
ActionSet threshold_set(std::span<const double> probs);

}  // namespace bmatch
