#include "banditmatch/policy.hpp"

namespace bmatch {

std::string to_string(PolicyRole r) { return r == PolicyRole::frozen ? "frozen" : "trainable"; }

PolicyNet::PolicyNet(const nn::MlpSpec& spec, std::uint64_t seed) : mlp_(spec, seed) {}

PolicyNet PolicyNet::zeros(const nn::MlpSpec& spec) { return from_mlp(nn::Mlp::zeros(spec), PolicyRole::trainable); }

PolicyNet PolicyNet::from_mlp(nn::Mlp mlp, PolicyRole role) {
  PolicyNet p;
  p.mlp_ = std::move(mlp);
  p.role_ = role;
  p.mlp_.set_requires_grad(role == PolicyRole::trainable);
  return p;
}

std::vector<double> PolicyNet::probs(std::span<const double> state) const {
  return mlp_.probs(nn::Tensor::row_vector(state)).data();
}

std::vector<nn::Var> PolicyNet::trainable_params() {
  if (role_ == PolicyRole::frozen) throw UsageError("frozen policies cannot be trained");
  return mlp_.params();
}

PolicyNet PolicyNet::clone_frozen() const { return from_mlp(mlp_.clone(), PolicyRole::frozen); }

PolicyNet PolicyNet::clone_trainable() const { return from_mlp(mlp_.clone(), PolicyRole::trainable); }

nn::Checkpoint PolicyNet::checkpoint() const { return nn::make_checkpoint(mlp_, to_string(role_)); }

void PolicyNet::save(const std::string& path) const { nn::save_checkpoint(path, checkpoint()); }

PolicyNet PolicyNet::load(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  PolicyRole role;
  if (ckpt.role == "frozen") role = PolicyRole::frozen;
  else if (ckpt.role == "trainable") role = PolicyRole::trainable;
  else throw ParseError("unknown policy role '" + ckpt.role + "'", 1);
  return from_mlp(nn::mlp_from_checkpoint(ckpt), role);
}

ActionSet threshold_set(std::span<const double> probs) {
  ActionSet out;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > 0.5) out.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace bmatch
