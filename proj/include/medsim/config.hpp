#ifndef MEDSIM_CONFIG_HPP_
#define MEDSIM_CONFIG_HPP_

// Run configuration: EnvConfig + PpoHyper + output directory + seed, as one
// JSON document. Every field is listed once in schema() with its dotted path
// and a one-line doc; loading, overrides and the commented dump all go
// through that table.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "medsim/agent/ppo.hpp"
#include "medsim/env.hpp"
#include "medsim/error.hpp"

namespace medsim::config {

inline constexpr int kFormatVersion = 1;

struct RunConfig {
  env::EnvConfig env;
  agent::PpoHyper ppo;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;
  int format_version = kFormatVersion;

  void validate() const {
    if (format_version != kFormatVersion) {
      throw ConfigError("format_version", "unsupported version " + std::to_string(format_version));
    }
    env.validate();
    ppo.validate();
    if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  }
};

struct Field {
  std::string path;
  std::string doc;
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

namespace detail {

template <class T>
T convert(const nlohmann::json& j, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ConfigError(path, "expected a boolean, got " + j.dump());
    return j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
      throw ConfigError(path, "expected a non-negative integer, got " + j.dump());
    }
    return j.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer, got " + j.dump());
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
      throw ConfigError(path, "integer out of range: " + j.dump());
    }
    return static_cast<T>(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw ConfigError(path, "expected a number, got " + j.dump());
    return j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError(path, "expected a string, got " + j.dump());
    return j.get<std::string>();
  } else {
    using E = typename T::value_type;
    if (!j.is_array()) throw ConfigError(path, "expected an array, got " + j.dump());
    T out;
    for (const auto& e : j) out.push_back(convert<E>(e, path));
    return out;
  }
}

template <class T, class Access>
Field make(std::string path, std::string doc, Access access) {
  Field f;
  f.path = path;
  f.doc = std::move(doc);
  f.get = [access](const RunConfig& c) { return nlohmann::json(access(const_cast<RunConfig&>(c))); };
  f.set = [access, path](RunConfig& c, const nlohmann::json& j) { access(c) = convert<T>(j, path); };
  return f;
}

inline std::vector<std::string> split(const std::string& path) {
  std::vector<std::string> out;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) out.push_back(part);
  return out;
}

inline void add_body(std::vector<Field>& s, const std::string& prefix, const std::string& who,
                     battery::VehicleBodyParams& (*body)(RunConfig&)) {
  s.push_back(make<double>(prefix + ".mass", who + " mass (kg)", [body](RunConfig& c) -> double& { return body(c).mass; }));
  s.push_back(make<double>(prefix + ".rolling_coeff", who + " rolling resistance coefficient",
                           [body](RunConfig& c) -> double& { return body(c).rolling_coeff; }));
  s.push_back(make<double>(prefix + ".drag_coeff", who + " aerodynamic drag coefficient",
                           [body](RunConfig& c) -> double& { return body(c).drag_coeff; }));
  s.push_back(make<double>(prefix + ".frontal_area", who + " frontal area (m^2)",
                           [body](RunConfig& c) -> double& { return body(c).frontal_area; }));
  s.push_back(make<double>(prefix + ".rotate_compensation", who + " rotating-mass factor on the inertial term",
                           [body](RunConfig& c) -> double& { return body(c).rotate_compensation; }));
}

inline void add_coil(std::vector<Field>& s, const std::string& prefix, const std::string& who,
                     physics::CoilSpec& (*coil)(RunConfig&)) {
  s.push_back(make<double>(prefix + ".radius", who + " coil radius (m)", [coil](RunConfig& c) -> double& { return coil(c).radius; }));
  s.push_back(make<int>(prefix + ".turns", who + " coil turns", [coil](RunConfig& c) -> int& { return coil(c).turns; }));
  s.push_back(make<double>(prefix + ".permeability", who + " coil core permeability (H/m)",
                           [coil](RunConfig& c) -> double& { return coil(c).permeability; }));
}

}  // namespace detail

#define MEDSIM_F(T, path, doc, expr) detail::make<T>(path, doc, [](RunConfig& c) -> T& { return expr; })

inline const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    using U64 = std::uint64_t;
    using Vec = std::vector<double>;
    using Ints = std::vector<int>;
    std::vector<Field> s;
    s.push_back(MEDSIM_F(int, "format_version", "Config format version; must be 1.", c.format_version));
    s.push_back(MEDSIM_F(U64, "seed", "Master seed for training workers, evaluation episodes and the random baseline.", c.seed));
    s.push_back(MEDSIM_F(std::string, "output_dir", "Directory receiving run artifacts.", c.output_dir));

    s.push_back(MEDSIM_F(double, "env.road.length", "Corridor length in road units.", c.env.road.length));
    s.push_back(MEDSIM_F(int, "env.road.lanes", "Number of lanes; lane 0 is leftmost, ramps merge into the rightmost.", c.env.road.lanes));
    s.push_back(MEDSIM_F(Vec, "env.road.ramp_positions", "On-ramp positions in road units; action k releases a MED at ramp k.", c.env.road.ramp_positions));
    s.push_back(MEDSIM_F(double, "env.road.meters_per_unit", "Meters per road unit.", c.env.road.meters_per_unit));

    s.push_back(MEDSIM_F(double, "env.traffic.idm.desired_speed", "IDM default desired speed v0 (m/s).", c.env.traffic.idm.desired_speed));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.time_headway", "IDM safe time headway T (s).", c.env.traffic.idm.time_headway));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.min_gap", "IDM jam distance s0 (m).", c.env.traffic.idm.min_gap));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.max_accel", "IDM maximum acceleration a (m/s^2).", c.env.traffic.idm.max_accel));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.comfortable_decel", "IDM comfortable deceleration b (m/s^2).", c.env.traffic.idm.comfortable_decel));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.accel_exponent", "IDM acceleration exponent delta.", c.env.traffic.idm.accel_exponent));
    s.push_back(MEDSIM_F(double, "env.traffic.idm.max_decel", "Emergency braking used at zero or negative gap (m/s^2).", c.env.traffic.idm.max_decel));
    s.push_back(MEDSIM_F(double, "env.traffic.mobil.politeness", "MOBIL politeness factor p.", c.env.traffic.mobil.politeness));
    s.push_back(MEDSIM_F(double, "env.traffic.mobil.changing_threshold", "MOBIL incentive threshold (m/s^2).", c.env.traffic.mobil.changing_threshold));
    s.push_back(MEDSIM_F(double, "env.traffic.mobil.safe_decel", "MOBIL safety limit on the new follower's braking (m/s^2).", c.env.traffic.mobil.safe_decel));
    s.push_back(MEDSIM_F(double, "env.traffic.ambient.air_density", "Air density (kg/m^3).", c.env.traffic.ambient.air_density));
    s.push_back(MEDSIM_F(double, "env.traffic.ambient.gravity", "Gravitational acceleration (m/s^2).", c.env.traffic.ambient.gravity));
    s.push_back(MEDSIM_F(double, "env.traffic.ambient.slope", "Road slope (rad).", c.env.traffic.ambient.slope));
    s.push_back(MEDSIM_F(double, "env.traffic.min_margin", "Hard floor on bumper-to-bumper gaps (m).", c.env.traffic.min_margin));
    s.push_back(MEDSIM_F(int, "env.traffic.lane_change_cooldown", "Steps between discretionary lane changes of one vehicle.", c.env.traffic.lane_change_cooldown));
    s.push_back(MEDSIM_F(double, "env.traffic.human_speed_noise", "Human desired-speed jitter as a fraction of base desired speed.", c.env.traffic.human_speed_noise));
    s.push_back(MEDSIM_F(double, "env.traffic.human_formation_noise", "Human speed-command noise while holding a charging slot (m/s).", c.env.traffic.human_formation_noise));
    s.push_back(MEDSIM_F(double, "env.traffic.human_lateral_drift", "Human sideways wander amplitude (m/s).", c.env.traffic.human_lateral_drift));
    s.push_back(MEDSIM_F(double, "env.traffic.track_gain", "Slot tracking gain from position error to speed command (1/s).", c.env.traffic.track_gain));
    s.push_back(MEDSIM_F(double, "env.traffic.track_accel", "Acceleration limit while tracking a slot (m/s^2).", c.env.traffic.track_accel));
    s.push_back(MEDSIM_F(double, "env.traffic.track_decel", "Deceleration limit while tracking a slot (m/s^2).", c.env.traffic.track_decel));
    s.push_back(MEDSIM_F(double, "env.traffic.approach_min_speed_factor", "Floor on approach speed as a fraction of MED speed.", c.env.traffic.approach_min_speed_factor));
    s.push_back(MEDSIM_F(double, "env.traffic.speed_cap_factor", "Hard speed cap relative to a vehicle's base desired speed.", c.env.traffic.speed_cap_factor));

    s.push_back(MEDSIM_F(double, "env.spawn.rates.ev_main", "EV arrival probability per step at the corridor entry.", c.env.spawn.rates.ev_main));
    s.push_back(MEDSIM_F(double, "env.spawn.rates.gas_main", "Gas-vehicle arrival probability per step at the corridor entry.", c.env.spawn.rates.gas_main));
    s.push_back(MEDSIM_F(double, "env.spawn.rates.ev_ramp", "EV arrival probability per step at each ramp.", c.env.spawn.rates.ev_ramp));
    s.push_back(MEDSIM_F(double, "env.spawn.rates.gas_ramp", "Gas-vehicle arrival probability per step at each ramp.", c.env.spawn.rates.gas_ramp));
    s.push_back(MEDSIM_F(double, "env.spawn.speed_min", "Lowest entry speed (m/s).", c.env.spawn.speed_min));
    s.push_back(MEDSIM_F(double, "env.spawn.speed_max", "Highest entry speed (m/s).", c.env.spawn.speed_max));
    s.push_back(MEDSIM_F(double, "env.spawn.desired_speed_min", "Lowest desired speed drawn at spawn (m/s).", c.env.spawn.desired_speed_min));
    s.push_back(MEDSIM_F(double, "env.spawn.desired_speed_max", "Highest desired speed drawn at spawn (m/s).", c.env.spawn.desired_speed_max));
    s.push_back(MEDSIM_F(double, "env.spawn.human_fraction", "Share of EVs that are human-driven.", c.env.spawn.human_fraction));
    s.push_back(MEDSIM_F(double, "env.spawn.ev_capacity", "EV battery capacity (J).", c.env.spawn.ev_capacity));
    s.push_back(MEDSIM_F(double, "env.spawn.ev_soc_min", "Lowest initial EV state of charge.", c.env.spawn.ev_soc_min));
    s.push_back(MEDSIM_F(double, "env.spawn.ev_soc_max", "Highest initial EV state of charge.", c.env.spawn.ev_soc_max));
    s.push_back(MEDSIM_F(double, "env.spawn.vehicle_length", "EV and gas-vehicle length (m).", c.env.spawn.vehicle_length));
    s.push_back(MEDSIM_F(double, "env.spawn.spawn_headway", "Clearance required at an entry point, in seconds at entry speed.", c.env.spawn.spawn_headway));
    s.push_back(MEDSIM_F(int, "env.spawn.max_pending", "Queued arrivals per entry point before further arrivals are dropped.", c.env.spawn.max_pending));
    detail::add_body(s, "env.spawn.ev_body", "EV", [](RunConfig& c) -> battery::VehicleBodyParams& { return c.env.spawn.ev_body; });
    detail::add_body(s, "env.spawn.gas_body", "Gas vehicle", [](RunConfig& c) -> battery::VehicleBodyParams& { return c.env.spawn.gas_body; });

    s.push_back(MEDSIM_F(double, "env.protocol.request_threshold", "EV state of charge below which a charging request is sent.", c.env.protocol.request_threshold));
    s.push_back(MEDSIM_F(double, "env.protocol.target_soc", "EV state of charge at which charging completes.", c.env.protocol.target_soc));
    s.push_back(MEDSIM_F(double, "env.protocol.reserve_floor", "MED dissemination state of charge kept in reserve.", c.env.protocol.reserve_floor));
    s.push_back(MEDSIM_F(double, "env.protocol.detection_radius", "Longitudinal request radius around a MED (road units).", c.env.protocol.detection_radius));
    s.push_back(MEDSIM_F(int, "env.protocol.booking_timeout", "Steps a booking may stay unattached before it is released.", c.env.protocol.booking_timeout));
    s.push_back(MEDSIM_F(double, "env.protocol.charge_power", "Power expended per charging slot (W).", c.env.protocol.charge_power));
    s.push_back(MEDSIM_F(double, "env.protocol.slot_offset", "FRONT/REAR slot distance from the MED front (m).", c.env.protocol.slot_offset));
    s.push_back(MEDSIM_F(double, "env.protocol.attach_tolerance", "Longitudinal distance to the slot anchor that counts as attached (m).", c.env.protocol.attach_tolerance));
    s.push_back(MEDSIM_F(double, "env.protocol.max_transfer_offset", "Horizontal coil offset beyond which no power transfers (m).", c.env.protocol.max_transfer_offset));
    s.push_back(MEDSIM_F(double, "env.protocol.mounting_gap", "Separation between MED and EV coil planes (m).", c.env.protocol.mounting_gap));
    s.push_back(MEDSIM_F(double, "env.protocol.max_tilt", "Clamp on the angular coil misalignment (rad).", c.env.protocol.max_tilt));
    s.push_back(MEDSIM_F(int, "env.protocol.service_lane", "Lane a MED serves from.", c.env.protocol.service_lane));
    detail::add_coil(s, "env.protocol.med_coil", "MED", [](RunConfig& c) -> physics::CoilSpec& { return c.env.protocol.med_coil; });
    detail::add_coil(s, "env.protocol.ev_coil", "EV", [](RunConfig& c) -> physics::CoilSpec& { return c.env.protocol.ev_coil; });
    s.push_back(MEDSIM_F(double, "env.protocol.circuit.load_impedance", "Load impedance Z_L (ohm).", c.env.protocol.circuit.load_impedance));
    s.push_back(MEDSIM_F(double, "env.protocol.circuit.parasite_r_med", "MED coil parasitic resistance (ohm).", c.env.protocol.circuit.parasite_r_med));
    s.push_back(MEDSIM_F(double, "env.protocol.circuit.parasite_r_ev", "EV coil parasitic resistance (ohm).", c.env.protocol.circuit.parasite_r_ev));
    s.push_back(MEDSIM_F(double, "env.protocol.circuit.resonant_freq", "Resonant angular frequency (rad/s).", c.env.protocol.circuit.resonant_freq));
    s.push_back(MEDSIM_F(int, "env.protocol.quadrature.nodes", "Gauss-Legendre nodes for the inductance integral, rounded up to a multiple of 16.", c.env.protocol.quadrature.nodes));

    s.push_back(MEDSIM_F(double, "env.med.capacity", "MED dissemination battery capacity (J).", c.env.med.capacity));
    s.push_back(MEDSIM_F(double, "env.med.initial_soc", "MED dissemination state of charge at release.", c.env.med.initial_soc));
    s.push_back(MEDSIM_F(double, "env.med.service_speed", "MED cruising speed (m/s).", c.env.med.service_speed));
    s.push_back(MEDSIM_F(double, "env.med.length", "MED vehicle length (m).", c.env.med.length));
    s.push_back(MEDSIM_F(double, "env.med.exit_margin", "Distance before the road end where a MED stops serving (m).", c.env.med.exit_margin));

    s.push_back(MEDSIM_F(double, "env.reward.depletion", "Weight w1 on the depletion penalty.", c.env.reward.depletion));
    s.push_back(MEDSIM_F(double, "env.reward.soc", "Weight w2 on mean EV state of charge.", c.env.reward.soc));
    s.push_back(MEDSIM_F(double, "env.reward.distance", "Weight w3 on normalized EV distance this step.", c.env.reward.distance));
    s.push_back(MEDSIM_F(double, "env.reward.speed", "Weight w4 on normalized mean EV speed.", c.env.reward.speed));
    s.push_back(MEDSIM_F(double, "env.reward.depletion_penalty", "Penalty per depleted EV before weighting.", c.env.reward.depletion_penalty));

    s.push_back(MEDSIM_F(int, "env.max_meds", "MED pool size and number of MED observation blocks.", c.env.max_meds));
    s.push_back(MEDSIM_F(int, "env.max_evs", "Number of EV observation blocks.", c.env.max_evs));
    s.push_back(MEDSIM_F(int, "env.horizon", "Steps per episode.", c.env.horizon));
    s.push_back(MEDSIM_F(int, "env.cooldown", "Steps after a release during which no further MED may be released.", c.env.cooldown));
    s.push_back(MEDSIM_F(int, "env.warmup_steps", "Traffic-only steps run inside reset() to populate the road.", c.env.warmup_steps));
    s.push_back(MEDSIM_F(int, "env.med_turnaround", "Steps before a MED that left the road rejoins the pool.", c.env.med_turnaround));
    s.push_back(MEDSIM_F(double, "env.dt", "Simulated seconds per step.", c.env.dt));
    s.push_back(MEDSIM_F(double, "env.v_max", "Speed normalization for observations and rewards (m/s).", c.env.v_max));

    s.push_back(MEDSIM_F(double, "ppo.clip_epsilon", "Clip range of the probability ratio.", c.ppo.clip_epsilon));
    s.push_back(MEDSIM_F(double, "ppo.gamma", "Discount factor.", c.ppo.gamma));
    s.push_back(MEDSIM_F(double, "ppo.gae_lambda", "GAE lambda.", c.ppo.gae_lambda));
    s.push_back(MEDSIM_F(double, "ppo.learning_rate", "Adam step size.", c.ppo.learning_rate));
    s.push_back(MEDSIM_F(bool, "ppo.anneal_lr", "Decay the learning rate linearly to zero over total_steps.", c.ppo.anneal_lr));
    s.push_back(MEDSIM_F(int, "ppo.epochs", "Passes over each rollout batch.", c.ppo.epochs));
    s.push_back(MEDSIM_F(int, "ppo.minibatch_size", "Samples per gradient step.", c.ppo.minibatch_size));
    s.push_back(MEDSIM_F(int, "ppo.rollout_length", "Environment steps collected per update, summed over workers.", c.ppo.rollout_length));
    s.push_back(MEDSIM_F(double, "ppo.entropy_coef", "Entropy bonus coefficient.", c.ppo.entropy_coef));
    s.push_back(MEDSIM_F(double, "ppo.value_coef", "Value-loss coefficient.", c.ppo.value_coef));
    s.push_back(MEDSIM_F(double, "ppo.max_grad_norm", "Global gradient-norm clip; 0 disables.", c.ppo.max_grad_norm));
    s.push_back(MEDSIM_F(bool, "ppo.normalize_rewards", "Scale rewards by the running std of the discounted return.", c.ppo.normalize_rewards));
    s.push_back(MEDSIM_F(bool, "ppo.mask_forced_actions", "Drop policy terms on steps where cooldown or an empty pool fixed the outcome.", c.ppo.mask_forced_actions));
    s.push_back(MEDSIM_F(long, "ppo.total_steps", "Environment steps to train for.", c.ppo.total_steps));
    s.push_back(MEDSIM_F(long, "ppo.eval_interval", "Environment steps between training-curve points.", c.ppo.eval_interval));
    s.push_back(MEDSIM_F(int, "ppo.reward_window", "Completed training episodes averaged into each curve point.", c.ppo.reward_window));
    s.push_back(MEDSIM_F(int, "ppo.eval_episodes", "Greedy evaluation episodes per curve point; 0 skips.", c.ppo.eval_episodes));
    s.push_back(MEDSIM_F(U64, "ppo.eval_seed", "Curve evaluation episodes use eval_seed + i.", c.ppo.eval_seed));
    s.push_back(MEDSIM_F(long, "ppo.checkpoint_interval", "Environment steps between checkpoint files.", c.ppo.checkpoint_interval));
    s.push_back(MEDSIM_F(Ints, "ppo.hidden", "Hidden layer widths of the shared tanh trunk.", c.ppo.hidden));
    return s;
  }();
  return fields;
}

#undef MEDSIM_F

inline const Field* find_field(const std::string& path) {
  for (const auto& f : schema()) {
    if (f.path == path) return &f;
  }
  return nullptr;
}

// Exact dotted path, or a leaf name that matches exactly one field.
inline const Field& resolve_key(const std::string& key) {
  if (const Field* f = find_field(key)) return *f;
  std::vector<const Field*> hits;
  for (const auto& f : schema()) {
    const auto parts = detail::split(f.path);
    if (parts.back() == key) hits.push_back(&f);
  }
  if (hits.size() == 1) return *hits.front();
  if (hits.empty()) throw ConfigError(key, "unknown configuration key");
  std::string all;
  for (const Field* f : hits) all += (all.empty() ? "" : ", ") + f->path;
  throw ConfigError(key, "ambiguous key; use one of: " + all);
}

namespace detail {

inline void apply_object(RunConfig& cfg, const nlohmann::json& obj, const std::string& prefix) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (const Field* f = find_field(path)) {
      f->set(cfg, value);
      continue;
    }
    bool is_group = false;
    for (const auto& f : schema()) {
      if (f.path.rfind(path + ".", 0) == 0) {
        is_group = true;
        break;
      }
    }
    if (!is_group) throw ConfigError(path, "unknown configuration key");
    apply_object(cfg, value, path);
  }
}

}  // namespace detail

inline void sync(RunConfig& cfg) { cfg.env.seed = cfg.seed; }

// Layered over the defaults; comments are allowed.
inline RunConfig from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  detail::apply_object(cfg, j, "");
  if (cfg.format_version != kFormatVersion) {
    throw ConfigError("format_version", "unsupported version " + std::to_string(cfg.format_version));
  }
  sync(cfg);
  return cfg;
}

inline RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

// `key=value`; the value is parsed as JSON, falling back to a bare string.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const Field& f = resolve_key(key);
  if (f.path == "format_version") throw ConfigError(f.path, "cannot be overridden");
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  f.set(cfg, value);
  sync(cfg);
}

inline nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : schema()) {
    nlohmann::json* node = &j;
    const auto parts = detail::split(f.path);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = f.get(cfg);
  }
  return j;
}

// Pretty JSON in schema order with a `//` doc line above every field.
inline std::string dump_commented(const RunConfig& cfg) {
  std::vector<std::string> lines{"{"};
  std::vector<std::string> open;   // currently open object names below the root
  std::vector<bool> has_member{false};
  auto indent = [](std::size_t depth) { return std::string(2 * depth, ' '); };

  for (const auto& f : schema()) {
    const auto parts = detail::split(f.path);
    const std::vector<std::string> parents(parts.begin(), parts.end() - 1);
    std::size_t common = 0;
    while (common < open.size() && common < parents.size() && open[common] == parents[common]) ++common;
    while (open.size() > common) {
      open.pop_back();
      has_member.pop_back();
      lines.push_back(indent(open.size() + 1) + "}");
    }
    while (open.size() < parents.size()) {
      if (has_member.back()) lines.back() += ",";
      has_member.back() = true;
      lines.push_back(indent(open.size() + 1) + "\"" + parents[open.size()] + "\": {");
      open.push_back(parents[open.size()]);
      has_member.push_back(false);
    }
    if (has_member.back()) lines.back() += ",";
    has_member.back() = true;
    lines.push_back(indent(open.size() + 1) + "// " + f.doc);
    lines.push_back(indent(open.size() + 1) + "\"" + parts.back() + "\": " + f.get(cfg).dump());
  }
  while (!open.empty()) {
    open.pop_back();
    lines.push_back(indent(open.size() + 1) + "}");
  }
  lines.push_back("}");
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace medsim::config

#endif  // MEDSIM_CONFIG_HPP_
