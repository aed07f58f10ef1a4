#ifndef MEDSIM_AGENT_POLICY_HPP_
#define MEDSIM_AGENT_POLICY_HPP_

// Shared-trunk MLP: tanh hidden layers feeding a softmax policy head over the
// five dispatch actions and a scalar value head. All weights live in one flat
// vector so the optimiser, checkpoints and gradient checks see a single array.
//
// Flat layout, per hidden layer then policy head then value head:
//   W (out x in, column major), b (out)

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "medsim/error.hpp"
#include "medsim/rng.hpp"

namespace medsim::agent {

struct Architecture {
  int input_dim = 0;
  std::vector<int> hidden{64, 64};
  int actions = 5;

  std::vector<std::pair<int, int>> layer_shapes() const {  // (out, in) incl. heads
    std::vector<std::pair<int, int>> shapes;
    int in = input_dim;
    for (int h : hidden) {
      shapes.emplace_back(h, in);
      in = h;
    }
    shapes.emplace_back(actions, in);
    shapes.emplace_back(1, in);
    return shapes;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (auto [out, in] : layer_shapes()) n += static_cast<std::size_t>(out) * (in + 1);
    return n;
  }

  bool operator==(const Architecture&) const = default;
};

struct PolicyParams {
  Architecture arch;
  Eigen::VectorXd values;

  // Scaled-normal init; small policy head so the initial policy is near uniform.
  static PolicyParams initialise(const Architecture& arch, Rng& rng) {
    PolicyParams p{arch, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()))};
    const auto shapes = arch.layer_shapes();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      const auto [out, in] = shapes[l];
      double gain = std::sqrt(2.0);
      if (l + 2 == shapes.size()) gain = 0.01;  // policy head
      if (l + 1 == shapes.size()) gain = 1.0;   // value head
      const double scale = gain / std::sqrt(static_cast<double>(in));
      for (int i = 0; i < out * in; ++i) p.values[static_cast<Eigen::Index>(offset + i)] = scale * rng.normal();
      offset += static_cast<std::size_t>(out) * (in + 1);
    }
    return p;
  }
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // [0] = input, then each hidden layer
  Eigen::MatrixXd log_probs;                 // actions x batch
  Eigen::MatrixXd probs;
  Eigen::RowVectorXd values;
};

namespace detail {

struct LayerView {
  Eigen::Map<const Eigen::MatrixXd> W;
  Eigen::Map<const Eigen::VectorXd> b;
};

inline std::vector<LayerView> layers(const PolicyParams& p) {
  std::vector<LayerView> out;
  std::size_t offset = 0;
  const double* data = p.values.data();
  for (auto [rows, cols] : p.arch.layer_shapes()) {
    out.push_back({Eigen::Map<const Eigen::MatrixXd>(data + offset, rows, cols),
                   Eigen::Map<const Eigen::VectorXd>(data + offset + static_cast<std::size_t>(rows) * cols, rows)});
    offset += static_cast<std::size_t>(rows) * (cols + 1);
  }
  return out;
}

}  // namespace detail

// Batched forward pass; columns of `x` are observations.
inline void forward(const PolicyParams& p, const Eigen::Ref<const Eigen::MatrixXd>& x, ForwardCache& cache) {
  if (x.rows() != p.arch.input_dim) {
    throw InputError("observation length " + std::to_string(x.rows()) + " does not match input dim " +
                     std::to_string(p.arch.input_dim));
  }
  if (static_cast<std::size_t>(p.values.size()) != p.arch.param_count()) {
    throw InputError("parameter vector does not match the architecture");
  }
  const auto ls = detail::layers(p);
  const std::size_t n_hidden = p.arch.hidden.size();
  cache.activations.resize(n_hidden + 1);
  cache.activations[0] = x;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    Eigen::MatrixXd z = ls[l].W * cache.activations[l];
    z.colwise() += ls[l].b;
    cache.activations[l + 1] = z.array().tanh().matrix();
  }
  const Eigen::MatrixXd& top = cache.activations.back();
  Eigen::MatrixXd logits = ls[n_hidden].W * top;
  logits.colwise() += ls[n_hidden].b;
  cache.values = (ls[n_hidden + 1].W * top).row(0).array() + ls[n_hidden + 1].b[0];

  const Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.rowwise() - mx;
  const Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log().matrix();
  cache.log_probs = shifted.rowwise() - lse;
  cache.probs = cache.log_probs.array().exp().matrix();
}

// Gradient of a scalar objective w.r.t. the flat parameters, given its
// partials w.r.t. the logits (actions x batch) and values (1 x batch).
inline Eigen::VectorXd backward(const PolicyParams& p, const ForwardCache& cache,
                                const Eigen::Ref<const Eigen::MatrixXd>& d_logits,
                                const Eigen::Ref<const Eigen::RowVectorXd>& d_values) {
  const auto ls = detail::layers(p);
  const auto shapes = p.arch.layer_shapes();
  const std::size_t n_hidden = p.arch.hidden.size();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.values.size());

  std::vector<std::size_t> offsets(shapes.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    offsets[l] = offset;
    offset += static_cast<std::size_t>(shapes[l].first) * (shapes[l].second + 1);
  }
  auto gW = [&](std::size_t l) {
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + offsets[l], shapes[l].first, shapes[l].second);
  };
  auto gb = [&](std::size_t l) {
    return Eigen::Map<Eigen::VectorXd>(grad.data() + offsets[l] +
                                           static_cast<std::size_t>(shapes[l].first) * shapes[l].second,
                                       shapes[l].first);
  };

  const Eigen::MatrixXd& top = cache.activations.back();
  gW(n_hidden).noalias() = d_logits * top.transpose();
  gb(n_hidden) = d_logits.rowwise().sum();
  gW(n_hidden + 1).noalias() = d_values * top.transpose();
  gb(n_hidden + 1)[0] = d_values.sum();

  Eigen::MatrixXd d_act = ls[n_hidden].W.transpose() * d_logits;
  d_act.noalias() += ls[n_hidden + 1].W.transpose() * d_values;
  for (std::size_t l = n_hidden; l-- > 0;) {
    const Eigen::MatrixXd& a = cache.activations[l + 1];
    const Eigen::MatrixXd dz = (d_act.array() * (1.0 - a.array().square())).matrix();
    gW(l).noalias() = dz * cache.activations[l].transpose();
    gb(l) = dz.rowwise().sum();
    if (l > 0) d_act = ls[l].W.transpose() * dz;
  }
  return grad;
}

struct PolicyOutput {
  std::vector<double> probs;
  std::vector<double> log_probs;
  double value = 0.0;
};

inline PolicyOutput policy_forward(const PolicyParams& p, std::span<const double> obs) {
  if (static_cast<int>(obs.size()) != p.arch.input_dim) {
    throw InputError("observation length " + std::to_string(obs.size()) + " does not match input dim " +
                     std::to_string(p.arch.input_dim));
  }
  ForwardCache cache;
  forward(p, Eigen::Map<const Eigen::MatrixXd>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1), cache);
  PolicyOutput out;
  out.probs.assign(cache.probs.data(), cache.probs.data() + cache.probs.rows());
  out.log_probs.assign(cache.log_probs.data(), cache.log_probs.data() + cache.log_probs.rows());
  out.value = cache.values[0];
  return out;
}

// Lowest index wins ties.
inline int greedy_action(const std::vector<double>& probs) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(probs.size()); ++a) {
    if (probs[a] > probs[best]) best = a;
  }
  return best;
}

inline int sample_action(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a < static_cast<int>(probs.size()); ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace medsim::agent

#endif  // MEDSIM_AGENT_POLICY_HPP_
