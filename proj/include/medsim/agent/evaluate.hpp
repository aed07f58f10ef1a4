#ifndef MEDSIM_AGENT_EVALUATE_HPP_
#define MEDSIM_AGENT_EVALUATE_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "medsim/agent/policy.hpp"
#include "medsim/env.hpp"
#include "medsim/error.hpp"
#include "medsim/rng.hpp"

namespace medsim::agent {

using ActionFn = std::function<int(const env::Observation&)>;
using StepHook = std::function<void(int episode, long step, const env::StepResult&)>;

inline ActionFn greedy_policy(std::shared_ptr<const PolicyParams> params) {
  return [params](const env::Observation& obs) { return greedy_action(policy_forward(*params, obs).probs); };
}

inline ActionFn random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const env::Observation&) { return rng->uniform_int(env::kNumActions); };
}

inline ActionFn noop_policy() {
  return [](const env::Observation&) { return 0; };
}

struct EvalStats {
  std::vector<std::uint64_t> seeds;
  std::vector<env::EpisodeSummary> episodes;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population
  double depletion_proportion = 0.0;
  double avg_range_units = 0.0;
  double avg_soc = 0.0;
  int meds_dispatched = 0;
};

// Episode i runs on seed base_seed + i. Per-episode statistics are averaged
// with equal weight per episode.
inline EvalStats evaluate(const env::EnvConfig& cfg, const ActionFn& policy, int episodes,
                          std::uint64_t base_seed, const StepHook& hook = {}) {
  if (episodes < 1) throw InputError("episodes must be >= 1");
  env::ChargingEnv environment(cfg);
  EvalStats stats;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(e);
    env::Observation obs = environment.reset(seed);
    long step = 0;
    while (true) {
      env::StepResult r = environment.step(policy(obs));
      if (hook) hook(e, step, r);
      ++step;
      if (r.done) break;
      obs = std::move(r.observation);
    }
    stats.seeds.push_back(seed);
    stats.episodes.push_back(environment.summary());
  }
  const double n = static_cast<double>(episodes);
  for (const auto& s : stats.episodes) {
    stats.mean_reward += s.total_reward / n;
    stats.depletion_proportion += s.depletion_proportion / n;
    stats.avg_range_units += s.avg_range_units / n;
    stats.avg_soc += s.avg_soc / n;
    stats.meds_dispatched += s.meds_dispatched;
  }
  double var = 0.0;
  for (const auto& s : stats.episodes) var += (s.total_reward - stats.mean_reward) * (s.total_reward - stats.mean_reward);
  stats.std_reward = std::sqrt(var / n);
  return stats;
}

}  // namespace medsim::agent

#endif  // MEDSIM_AGENT_EVALUATE_HPP_
