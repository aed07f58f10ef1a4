#ifndef MEDSIM_AGENT_PPO_HPP_
#define MEDSIM_AGENT_PPO_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "medsim/agent/policy.hpp"
#include "medsim/error.hpp"
#include "medsim/rng.hpp"

namespace medsim::agent {

struct PpoHyper {
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  int epochs = 10;
  int minibatch_size = 64;
  int rollout_length = 2048;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  bool normalize_rewards = true;    // divide rewards by the running std of the discounted return
  bool anneal_lr = false;           // linear decay of the learning rate to 0 over total_steps
  bool mask_forced_actions = true;  // drop policy terms where cooldown/pool made the action moot
  long total_steps = 400000;
  long eval_interval = 2048;         // env steps between training-curve points
  int reward_window = 100;           // training episodes averaged per curve point
  int eval_episodes = 10;            // greedy episodes per curve point, 0 to skip
  std::uint64_t eval_seed = 1000;    // curve episodes use eval_seed + i
  long checkpoint_interval = 20480;  // env steps between checkpoint files
  std::vector<int> hidden{64, 64};

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo.clip_epsilon", "must be in (0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma", "must be in (0,1]");
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda", "must be in (0,1]");
    if (!(learning_rate > 0.0)) throw ConfigError("ppo.learning_rate", "must be > 0");
    if (epochs < 1) throw ConfigError("ppo.epochs", "must be >= 1");
    if (minibatch_size < 1) throw ConfigError("ppo.minibatch_size", "must be >= 1");
    if (rollout_length < 1) throw ConfigError("ppo.rollout_length", "must be >= 1");
    if (entropy_coef < 0.0) throw ConfigError("ppo.entropy_coef", "must be >= 0");
    if (value_coef < 0.0) throw ConfigError("ppo.value_coef", "must be >= 0");
    if (total_steps < 1) throw ConfigError("ppo.total_steps", "must be >= 1");
    if (eval_interval < 1) throw ConfigError("ppo.eval_interval", "must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("ppo.checkpoint_interval", "must be >= 1");
    if (reward_window < 1) throw ConfigError("ppo.reward_window", "must be >= 1");
    if (eval_episodes < 0) throw ConfigError("ppo.eval_episodes", "must be >= 0");
    if (hidden.empty()) throw ConfigError("ppo.hidden", "needs at least one layer");
    for (int h : hidden) {
      if (h < 1) throw ConfigError("ppo.hidden", "layer sizes must be >= 1");
    }
  }
};

// One worker's contiguous rollout. dones[t] marks that the episode ended
// after step t, so V(s_{t+1}) is not bootstrapped across it.
struct Trajectory {
  Eigen::MatrixXd observations;  // obs_dim x T
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<char> dones;
  std::vector<char> decisions;   // empty: every step is a decision
  double bootstrap_value = 0.0;  // V of the state after the last step

  std::size_t size() const { return rewards.size(); }

  void validate() const {
    const std::size_t n = rewards.size();
    if (n == 0) throw InputError("empty trajectory");
    if (actions.size() != n || log_probs.size() != n || values.size() != n || dones.size() != n ||
        (!decisions.empty() && decisions.size() != n) ||
        (observations.size() > 0 && static_cast<std::size_t>(observations.cols()) != n)) {
      throw InputError("trajectory fields have inconsistent lengths");
    }
    for (double lp : log_probs) {
      if (!(lp <= 0.0)) throw InputError("log-probabilities must be <= 0");
    }
  }
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline Advantages gae(const Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.rewards.size();
  if (n == 0) throw InputError("empty trajectory");
  if (traj.values.size() != n || traj.dones.size() != n) {
    throw InputError("trajectory fields have inconsistent lengths");
  }
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = traj.bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = traj.dones[t] ? 0.0 : 1.0;
    const double delta = traj.rewards[t] + gamma * next_value * live - traj.values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + traj.values[t];
    next_value = traj.values[t];
  }
  return out;
}

// Welford accumulator.
struct RunningStat {
  long count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }
  double variance() const { return count > 1 ? m2 / static_cast<double>(count) : 0.0; }
};

// Zero mean, unit (population) variance; a constant batch becomes all zeros.
// With a mask, statistics come from the active entries only.
inline void normalize_advantages(std::vector<double>& adv, const std::vector<char>& active = {}) {
  RunningStat st;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (active.empty() || active[i]) st.push(adv[i]);
  }
  if (st.count == 0) return;
  const double sd = std::sqrt(st.variance());
  for (double& a : adv) a = sd > 1e-12 ? (a - st.mean) / sd : 0.0;
}

struct Batch {
  Eigen::MatrixXd observations;  // obs_dim x B
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
  // Samples whose action could not change the outcome carry no policy
  // gradient; they still train the value head. Empty: all active.
  std::vector<char> active;

  std::size_t size() const { return actions.size(); }
};

struct ObjectiveCoefs {
  double clip_epsilon = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

struct ObjectiveResult {
  double objective = 0.0;
  double surrogate = 0.0;   // batch mean of the clipped term
  double value_loss = 0.0;  // batch mean of (V - R)^2
  double entropy = 0.0;     // batch mean policy entropy
  double clip_fraction = 0.0;
  std::size_t active = 0;  // samples contributing policy terms
  Eigen::VectorXd gradient;
};

inline double clipped_surrogate(double ratio, double advantage, double epsilon) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

namespace detail {

inline void require_finite(double v, const char* what, std::size_t sample) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " at batch sample " << sample << " (value " << v << ")";
    throw TrainingError(os.str());
  }
}

}  // namespace detail

// objective = mean(clipped surrogate) - c_v mean((V-R)^2) + c_e mean(H),
// with its gradient w.r.t. every network parameter. Maximised by the trainer.
// Surrogate and entropy average over active samples, the value loss over all.
inline ObjectiveResult ppo_objective(const Batch& batch, const PolicyParams& params, const ObjectiveCoefs& coefs) {
  const std::size_t n = batch.size();
  if (n == 0) throw InputError("empty batch");
  // Huge epsilons are allowed here so the unclipped limit can be probed.
  if (!(coefs.clip_epsilon > 0.0)) throw InputError("clip epsilon must be positive");
  if (batch.old_log_probs.size() != n || batch.advantages.size() != n || batch.returns.size() != n ||
      static_cast<std::size_t>(batch.observations.cols()) != n || (!batch.active.empty() && batch.active.size() != n)) {
    throw InputError("batch fields have inconsistent lengths");
  }
  std::size_t n_active = n;
  if (!batch.active.empty()) n_active = static_cast<std::size_t>(std::count(batch.active.begin(), batch.active.end(), 1));

  ForwardCache cache;
  forward(params, batch.observations, cache);
  const int n_actions = params.arch.actions;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_active = n_active > 0 ? 1.0 / static_cast<double>(n_active) : 0.0;
  const double eps = coefs.clip_epsilon;

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(n_actions, static_cast<Eigen::Index>(n));
  Eigen::RowVectorXd d_values = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n));
  ObjectiveResult out;
  std::size_t clipped = 0;

  for (std::size_t j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const double err = cache.values[col] - batch.returns[j];
    detail::require_finite(err, "value estimate", j);
    out.value_loss += err * err;
    d_values[col] = -coefs.value_coef * inv_n * 2.0 * err;
    if (!batch.active.empty() && !batch.active[j]) continue;

    const int a = batch.actions[j];
    if (a < 0 || a >= n_actions) throw InputError("action index out of range");
    const double logp = cache.log_probs(a, col);
    const double ratio = std::exp(logp - batch.old_log_probs[j]);
    const double adv = batch.advantages[j];
    detail::require_finite(ratio, "probability ratio", j);

    const double unclipped = ratio * adv;
    const double clipped_term = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    out.surrogate += std::min(unclipped, clipped_term);
    // The min picks the unclipped branch whenever it is not larger.
    const double d_ratio = unclipped <= clipped_term ? adv : 0.0;
    if (unclipped > clipped_term) ++clipped;

    // d logp_a / d logit_k = [k == a] - p_k
    const double g = inv_active * d_ratio * ratio;
    double entropy = 0.0;
    for (int k = 0; k < n_actions; ++k) entropy -= cache.probs(k, col) * cache.log_probs(k, col);
    out.entropy += entropy;
    for (int k = 0; k < n_actions; ++k) {
      const double p = cache.probs(k, col);
      double d = g * ((k == a ? 1.0 : 0.0) - p);
      // dH / d logit_k = -p_k (log p_k + H)
      d += coefs.entropy_coef * inv_active * (-p * (cache.log_probs(k, col) + entropy));
      d_logits(k, col) = d;
    }
  }

  out.active = n_active;
  out.surrogate *= inv_active;
  out.value_loss *= inv_n;
  out.entropy *= inv_active;
  out.clip_fraction = static_cast<double>(clipped) * inv_active;
  out.objective = out.surrogate - coefs.value_coef * out.value_loss + coefs.entropy_coef * out.entropy;
  detail::require_finite(out.objective, "objective", 0);

  out.gradient = backward(params, cache, d_logits, d_values);
  if (!out.gradient.allFinite()) throw TrainingError("non-finite gradient");
  return out;
}

// Shuffled consecutive chunks of `size` indices covering [0, n).
inline std::vector<std::vector<Eigen::Index>> minibatches(std::size_t n, int size, Rng& rng) {
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  std::vector<std::vector<Eigen::Index>> out;
  const auto chunk = static_cast<std::size_t>(size);
  for (std::size_t start = 0; start < n; start += chunk) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + chunk)));
  }
  return out;
}

// Adam, ascending. Bias correction makes the first step's magnitude ~lr
// per coordinate; a zero gradient leaves the parameters unchanged.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;

  static AdamState zeros(Eigen::Index n) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(n);
    s.v = Eigen::VectorXd::Zero(n);
    return s;
  }
};

inline void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st, double lr) {
  if (grad.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
    throw InputError("optimizer shapes do not match the parameters");
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() += lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.epsilon);
}

// Rescales in place; returns the norm before clipping.
inline double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace medsim::agent

#endif  // MEDSIM_AGENT_PPO_HPP_
