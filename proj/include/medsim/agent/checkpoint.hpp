#ifndef MEDSIM_AGENT_CHECKPOINT_HPP_
#define MEDSIM_AGENT_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsim/agent/policy.hpp"
#include "medsim/agent/ppo.hpp"
#include "medsim/error.hpp"

namespace medsim::agent {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  PolicyParams params;
  AdamState optimizer;
  long env_steps = 0;
  std::uint64_t seed = 0;
  std::string trainer_rng;               // serialised engine state
  std::vector<std::string> worker_rngs;  // one per rollout worker
};

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["architecture"] = {{"input_dim", c.params.arch.input_dim},
                       {"hidden", c.params.arch.hidden},
                       {"actions", c.params.arch.actions},
                       {"activation", "tanh"},
                       {"heads", {"policy_softmax", "value"}}};
  j["params"] = detail::vec_to_json(c.params.values);
  j["optimizer"] = {{"type", "adam"},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon},
                    {"step", c.optimizer.step},
                    {"m", detail::vec_to_json(c.optimizer.m)},
                    {"v", detail::vec_to_json(c.optimizer.v)}};
  j["rng"] = {{"engine", "mt19937_64"}, {"trainer", c.trainer_rng}, {"workers", c.worker_rngs}};
  j["env_steps"] = c.env_steps;
  j["seed"] = c.seed;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw InputError("unsupported checkpoint format_version " + j.at("format_version").dump());
    }
    Checkpoint c;
    const auto& a = j.at("architecture");
    c.params.arch.input_dim = a.at("input_dim").get<int>();
    c.params.arch.hidden = a.at("hidden").get<std::vector<int>>();
    c.params.arch.actions = a.at("actions").get<int>();
    c.params.values = detail::vec_from_json(j.at("params"));
    if (static_cast<std::size_t>(c.params.values.size()) != c.params.arch.param_count()) {
      throw InputError("checkpoint parameter count does not match its architecture");
    }
    if (!c.params.values.allFinite()) throw InputError("checkpoint contains non-finite parameters");
    const auto& o = j.at("optimizer");
    c.optimizer.beta1 = o.at("beta1").get<double>();
    c.optimizer.beta2 = o.at("beta2").get<double>();
    c.optimizer.epsilon = o.at("epsilon").get<double>();
    c.optimizer.step = o.at("step").get<long>();
    c.optimizer.m = detail::vec_from_json(o.at("m"));
    c.optimizer.v = detail::vec_from_json(o.at("v"));
    c.trainer_rng = j.at("rng").at("trainer").get<std::string>();
    c.worker_rngs = j.at("rng").at("workers").get<std::vector<std::string>>();
    c.env_steps = j.at("env_steps").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out << to_json(c).dump() << '\n';
    if (!out) throw InputError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace medsim::agent

#endif  // MEDSIM_AGENT_CHECKPOINT_HPP_
