#ifndef MEDSIM_AGENT_TRAIN_HPP_
#define MEDSIM_AGENT_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "medsim/agent/checkpoint.hpp"
#include "medsim/agent/evaluate.hpp"
#include "medsim/agent/policy.hpp"
#include "medsim/agent/ppo.hpp"
#include "medsim/env.hpp"
#include "medsim/rng.hpp"

namespace medsim::agent {

// mean_episode_reward averages the most recent completed training episodes
// (sampled actions). greedy_eval_reward is the argmax policy on the fixed
// curve seeds; NaN when disabled.
struct CurvePoint {
  long env_steps = 0;
  double mean_episode_reward = std::numeric_limits<double>::quiet_NaN();
  double objective = 0.0;
  double entropy = 0.0;
  double greedy_eval_reward = std::numeric_limits<double>::quiet_NaN();
};

inline const char* kCurveCsvHeader = "env_steps,mean_episode_reward,objective,entropy,greedy_eval_reward";

inline std::string curve_csv_row(const CurvePoint& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g", p.env_steps, p.mean_episode_reward, p.objective,
                p.entropy, p.greedy_eval_reward);
  return buf;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Owns one environment; episodes carry over between rollouts.
class RolloutWorker {
 public:
  RolloutWorker(const env::EnvConfig& cfg, std::uint64_t seed, double gamma)
      : env_(cfg), rng_(seed), gamma_(gamma) {
    obs_ = env_.reset(rng_.next());
  }

  Trajectory collect(const PolicyParams& params, int steps) {
    Trajectory t;
    t.observations.resize(static_cast<Eigen::Index>(obs_.size()), steps);
    t.actions.reserve(steps);
    t.log_probs.reserve(steps);
    t.values.reserve(steps);
    t.rewards.reserve(steps);
    t.dones.reserve(steps);
    t.decisions.reserve(steps);
    for (int i = 0; i < steps; ++i) {
      const PolicyOutput out = policy_forward(params, obs_);
      const int a = sample_action(out.probs, rng_);
      t.observations.col(i) = Eigen::Map<const Eigen::VectorXd>(obs_.data(), static_cast<Eigen::Index>(obs_.size()));
      t.actions.push_back(a);
      t.log_probs.push_back(out.log_probs[a]);
      t.values.push_back(out.value);
      env::StepResult r = env_.step(a);
      t.rewards.push_back(r.reward);
      t.dones.push_back(r.done ? 1 : 0);
      t.decisions.push_back(r.info.decision_point ? 1 : 0);
      episode_reward_ += r.reward;
      discounted_ = discounted_ * gamma_ + r.reward;
      discounted_returns_.push_back(discounted_);
      if (r.done) {
        discounted_ = 0.0;
        finished_.push_back(episode_reward_);
        episode_reward_ = 0.0;
        obs_ = env_.reset(rng_.next());
      } else {
        obs_ = std::move(r.observation);
      }
    }
    t.bootstrap_value = policy_forward(params, obs_).value;
    return t;
  }

  std::vector<double> take_finished() { return std::exchange(finished_, {}); }
  std::vector<double> take_discounted_returns() { return std::exchange(discounted_returns_, {}); }
  const Rng& rng() const { return rng_; }

 private:
  env::ChargingEnv env_;
  Rng rng_;
  env::Observation obs_;
  double gamma_;
  double episode_reward_ = 0.0;
  double discounted_ = 0.0;
  std::vector<double> finished_;
  std::vector<double> discounted_returns_;
};

struct TrainOptions {
  int workers = 1;
  std::filesystem::path output_dir;  // empty: nothing written to disk
  std::function<void(const std::string&)> log;
  std::function<void(const CurvePoint&)> on_point;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  Checkpoint final;
};

inline TrainResult train(const env::EnvConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  hyper.validate();
  if (opts.workers < 1) throw InputError("workers must be >= 1");
  auto log = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };

  Architecture arch;
  arch.input_dim = static_cast<int>(cfg.observation_size());
  arch.hidden = hyper.hidden;
  arch.actions = env::kNumActions;
  Rng init_rng(mix_seed(seed, 0));
  Rng trainer_rng(mix_seed(seed, 1));
  PolicyParams params = PolicyParams::initialise(arch, init_rng);
  AdamState adam = AdamState::zeros(params.values.size());

  std::vector<RolloutWorker> workers;
  workers.reserve(static_cast<std::size_t>(opts.workers));
  for (int w = 0; w < opts.workers; ++w) workers.emplace_back(cfg, mix_seed(seed, 100 + static_cast<std::uint64_t>(w)), hyper.gamma);

  long env_steps = 0;
  auto snapshot = [&]() {
    Checkpoint c;
    c.params = params;
    c.optimizer = adam;
    c.env_steps = env_steps;
    c.seed = seed;
    c.trainer_rng = trainer_rng.state();
    for (const auto& w : workers) c.worker_rngs.push_back(w.rng().state());
    return c;
  };

  const bool to_disk = !opts.output_dir.empty();
  std::ofstream curve_csv;
  if (to_disk) {
    std::filesystem::create_directories(opts.output_dir);
    curve_csv.open(opts.output_dir / "training_curve.csv");
    if (!curve_csv) throw InputError("cannot write " + (opts.output_dir / "training_curve.csv").string());
    curve_csv << kCurveCsvHeader << '\n' << std::flush;
  }

  TrainResult result;
  Checkpoint last_good = snapshot();
  std::deque<double> recent_episodes;
  RunningStat return_stat;
  long next_eval = hyper.eval_interval;
  long next_ckpt = hyper.checkpoint_interval;
  const ObjectiveCoefs coefs{hyper.clip_epsilon, hyper.value_coef, hyper.entropy_coef};

  double explained_variance = 0.0;
  auto record_point = [&](double objective, double entropy) {
    CurvePoint p;
    p.env_steps = env_steps;
    if (hyper.eval_episodes > 0) {
      auto shared = std::make_shared<const PolicyParams>(params);
      p.greedy_eval_reward =
          evaluate(cfg, greedy_policy(shared), hyper.eval_episodes, hyper.eval_seed).mean_reward;
    }
    p.objective = objective;
    p.entropy = entropy;
    if (!recent_episodes.empty()) {
      double s = 0.0;
      for (double r : recent_episodes) s += r;
      p.mean_episode_reward = s / static_cast<double>(recent_episodes.size());
    }
    result.curve.push_back(p);
    if (curve_csv.is_open()) curve_csv << curve_csv_row(p) << '\n' << std::flush;
    if (opts.on_point) opts.on_point(p);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "steps %ld  episode reward %.3f  greedy %.3f  objective %.4f  entropy %.4f  explained var %.3f",
                  p.env_steps, p.mean_episode_reward, p.greedy_eval_reward, p.objective, p.entropy,
                  explained_variance);
    log(buf);
  };

  double objective_mean = 0.0;
  double entropy_mean = 0.0;
  while (env_steps < hyper.total_steps) {
    const long remaining = hyper.total_steps - env_steps;
    const double lr = hyper.anneal_lr ? hyper.learning_rate * static_cast<double>(remaining) / static_cast<double>(hyper.total_steps)
                                      : hyper.learning_rate;
    const int steps = static_cast<int>(std::min<long>(hyper.rollout_length, remaining));

    // Rollouts: each worker reads the same immutable parameter snapshot.
    const int n_workers = static_cast<int>(workers.size());
    std::vector<int> quota(static_cast<std::size_t>(n_workers), steps / n_workers);
    for (int w = 0; w < steps % n_workers; ++w) ++quota[static_cast<std::size_t>(w)];
    std::vector<Trajectory> trajs(static_cast<std::size_t>(n_workers));
    if (n_workers == 1) {
      trajs[0] = workers[0].collect(params, quota[0]);
    } else {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_workers));
      for (int w = 0; w < n_workers; ++w) {
        if (quota[static_cast<std::size_t>(w)] == 0) continue;
        threads.emplace_back([&, w] {
          try {
            trajs[static_cast<std::size_t>(w)] = workers[static_cast<std::size_t>(w)].collect(params, quota[static_cast<std::size_t>(w)]);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    env_steps += steps;
    for (auto& w : workers) {
      for (double r : w.take_finished()) {
        recent_episodes.push_back(r);
        if (recent_episodes.size() > static_cast<std::size_t>(hyper.reward_window)) recent_episodes.pop_front();
      }
      for (double g : w.take_discounted_returns()) return_stat.push(g);
    }
    if (hyper.normalize_rewards) {
      const double scale = 1.0 / std::sqrt(return_stat.variance() + 1e-8);
      for (auto& t : trajs) {
        for (double& r : t.rewards) r *= scale;
      }
    }

    Batch all;
    all.observations.resize(arch.input_dim, steps);
    Eigen::Index col = 0;
    for (const auto& t : trajs) {
      if (t.size() == 0) continue;
      const Advantages adv = gae(t, hyper.gamma, hyper.gae_lambda);
      all.observations.middleCols(col, static_cast<Eigen::Index>(t.size())) = t.observations;
      col += static_cast<Eigen::Index>(t.size());
      all.actions.insert(all.actions.end(), t.actions.begin(), t.actions.end());
      all.old_log_probs.insert(all.old_log_probs.end(), t.log_probs.begin(), t.log_probs.end());
      all.advantages.insert(all.advantages.end(), adv.advantages.begin(), adv.advantages.end());
      all.returns.insert(all.returns.end(), adv.returns.begin(), adv.returns.end());
      if (hyper.mask_forced_actions) {
        all.active.insert(all.active.end(), t.decisions.begin(), t.decisions.end());
      }
    }
    {
      // Explained variance of the critic on this batch, before the update.
      RunningStat ret, res;
      for (std::size_t i = 0; i < all.returns.size(); ++i) {
        ret.push(all.returns[i]);
        res.push(all.returns[i] - (all.returns[i] - all.advantages[i]));
      }
      explained_variance = ret.variance() > 0.0 ? 1.0 - res.variance() / ret.variance() : 0.0;
    }
    normalize_advantages(all.advantages, all.active);

    double obj_sum = 0.0;
    double ent_sum = 0.0;
    int n_mb = 0;
    try {
      for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (const auto& idx : minibatches(static_cast<std::size_t>(steps), hyper.minibatch_size, trainer_rng)) {
          Batch mb;
          mb.observations = all.observations(Eigen::all, idx);
          for (Eigen::Index k : idx) {
            const auto u = static_cast<std::size_t>(k);
            mb.actions.push_back(all.actions[u]);
            mb.old_log_probs.push_back(all.old_log_probs[u]);
            mb.advantages.push_back(all.advantages[u]);
            mb.returns.push_back(all.returns[u]);
            if (!all.active.empty()) mb.active.push_back(all.active[u]);
          }
          ObjectiveResult res = ppo_objective(mb, params, coefs);
          clip_grad_norm(res.gradient, hyper.max_grad_norm);
          adam_update(params.values, res.gradient, adam, lr);
          if (!params.values.allFinite()) throw TrainingError("parameters became non-finite after an update");
          obj_sum += res.objective;
          ent_sum += res.entropy;
          ++n_mb;
        }
      }
    } catch (const TrainingError& e) {
      if (to_disk) {
        save_checkpoint(last_good, opts.output_dir / "last_good.json");
        log("training aborted; last good checkpoint written to " + (opts.output_dir / "last_good.json").string());
      }
      throw TrainingError(std::string(e.what()) + " (env step " + std::to_string(env_steps) + ")");
    }
    objective_mean = obj_sum / n_mb;
    entropy_mean = ent_sum / n_mb;
    last_good = snapshot();

    if (env_steps >= next_eval || env_steps >= hyper.total_steps) {
      record_point(objective_mean, entropy_mean);
      while (next_eval <= env_steps) next_eval += hyper.eval_interval;
    }
    if (to_disk && env_steps >= next_ckpt) {
      save_checkpoint(last_good, opts.output_dir / "checkpoints" / ("step_" + std::to_string(env_steps) + ".json"));
      while (next_ckpt <= env_steps) next_ckpt += hyper.checkpoint_interval;
    }
  }

  result.final = snapshot();
  if (to_disk) save_checkpoint(result.final, opts.output_dir / "final.json");
  return result;
}

}  // namespace medsim::agent

#endif  // MEDSIM_AGENT_TRAIN_HPP_
