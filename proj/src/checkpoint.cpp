#include <nlohmann/json.hpp>

#include "banditmatch/nncore.hpp"

namespace bmatch::nn {

namespace {

constexpr const char* kFormat = "banditmatch.checkpoint";

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = Checkpoint::kVersion;
  j["role"] = ckpt.role;
  j["spec"] = {{"input_dim", ckpt.spec.input_dim},
               {"hidden_dims", ckpt.spec.hidden_dims},
               {"output_dim", ckpt.spec.output_dim},
               {"hidden_activation", to_string(ckpt.spec.hidden_activation)},
               {"output_activation", "sigmoid"}};
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : ckpt.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  }
  j["tensors"] = std::move(tensors);
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 1);
  }
  try {
    if (j.value("format", "") != kFormat) throw ParseError("not a banditmatch checkpoint", 1);
    const int version = j.at("version").get<int>();
    if (version != Checkpoint::kVersion) {
      throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(Checkpoint::kVersion) + ")");
    }
    Checkpoint ckpt;
    ckpt.role = j.at("role").get<std::string>();
    const auto& s = j.at("spec");
    ckpt.spec.input_dim = s.at("input_dim").get<int>();
    ckpt.spec.hidden_dims = s.at("hidden_dims").get<std::vector<int>>();
    ckpt.spec.output_dim = s.at("output_dim").get<int>();
    ckpt.spec.hidden_activation = activation_from_string(s.at("hidden_activation").get<std::string>());
    for (const auto& t : j.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = t.at("shape").get<std::vector<std::size_t>>();
      nt.values = t.at("values").get<std::vector<double>>();
      ckpt.tensors.push_back(std::move(nt));
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 1);
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

Checkpoint make_checkpoint(const Mlp& mlp, std::string role) {
  Checkpoint ckpt;
  ckpt.spec = mlp.spec();
  ckpt.role = std::move(role);
  for (const Var& p : mlp.params()) {
    ckpt.tensors.push_back({p.name(), {p.value().rows(), p.value().cols()}, p.value().data()});
  }
  return ckpt;
}

Mlp mlp_from_checkpoint(const Checkpoint& ckpt) {
  Mlp mlp = Mlp::zeros(ckpt.spec);
  auto& params = mlp.params();
  if (params.size() != ckpt.tensors.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors, spec needs " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = ckpt.tensors[i];
    Tensor& v = params[i].mutable_value();
    if (t.name != params[i].name() || t.shape.size() != 2 || t.shape[0] != v.rows() ||
        t.shape[1] != v.cols() || t.values.size() != v.size()) {
      throw ConfigError("checkpoint tensor '" + t.name + "' does not match the network spec");
    }
    v = Tensor(v.rows(), v.cols(), t.values);
  }
  return mlp;
}

}  // namespace bmatch::nn
