#ifndef MEDSIM_TRAFFIC_HPP_
#define MEDSIM_TRAFFIC_HPP_

// Multi-lane highway corridor with IDM car following and MOBIL lane changes.
//
// Positions are stored in meters (road units times meters_per_unit) and mark
// the front bumper; a vehicle occupies [x - length, x]. Lane 0 is the leftmost
// lane, ramps merge into the rightmost one.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "medsim/battery.hpp"
#include "medsim/error.hpp"
#include "medsim/rng.hpp"

namespace medsim::traffic {

struct RoadNetwork {
  double length = 4000.0;  // units
  int lanes = 4;
  std::vector<double> ramp_positions{100.0, 1200.0, 2100.0, 3200.0};  // units
  double meters_per_unit = 1.0;

  double length_m() const { return length * meters_per_unit; }
  double ramp_m(std::size_t i) const { return ramp_positions.at(i) * meters_per_unit; }
  double to_units(double meters) const { return meters / meters_per_unit; }
  int ramp_lane() const { return lanes - 1; }

  void validate() const {
    if (!(length > 0.0)) throw ConfigError("env.road.length", "must be > 0");
    if (lanes < 3) throw ConfigError("env.road.lanes", "must be >= 3");
    if (!(meters_per_unit > 0.0)) {
      throw ConfigError("env.road.meters_per_unit", "must be > 0");
    }
    if (ramp_positions.empty()) {
      throw ConfigError("env.road.ramp_positions", "must not be empty");
    }
    for (double r : ramp_positions) {
      if (!(r > 0.0 && r < length)) {
        throw ConfigError("env.road.ramp_positions", "ramps must lie strictly inside (0, length)");
      }
    }
  }
};

enum class Kind { med, ev, gas };
enum class Driver { human, autonomous };

// How the lateral and longitudinal controllers pick their targets.
enum class Mode {
  free,       // IDM + MOBIL
  service,    // MED: mandatory move to the service lane, IDM at service speed
  approach,   // EV with a booking: steer onto the anchor pose
  formation,  // EV attached to a slot: hold the anchor pose
};

struct Guidance {
  Mode mode = Mode::free;
  int med_id = -1;
  int slot = -1;
  int target_lane = 0;
  double target_x = 0.0;      // m
  double target_speed = 0.0;  // m/s
  double pre_charge_desired_speed = 0.0;
};

struct Vehicle {
  int id = -1;
  Kind kind = Kind::gas;
  Driver driver = Driver::autonomous;
  double x = 0.0;  // m, front bumper
  int lane = 0;
  double speed = 0.0;         // m/s
  double lateral_rate = 0.0;  // lanes per second during the last step
  double lateral_drift = 0.0; // m/s of sideways wander (human drivers)
  double length = 5.0;        // m
  double base_desired_speed = 30.0;
  double desired_speed = 30.0;
  std::optional<battery::BatteryState> battery;
  battery::VehicleBodyParams body;
  Guidance guidance;
  long last_lane_change_step = -1000;
  double odometer = 0.0;  // m since spawn
  long spawn_step = 0;

  double rear() const { return x - length; }
  bool is_ev() const { return kind == Kind::ev; }
  bool is_med() const { return kind == Kind::med; }
  bool is_human() const { return driver == Driver::human; }
  double soc() const { return battery ? battery->soc() : 0.0; }
};

struct IdmParams {
  double desired_speed = 33.3;     // v0, m/s
  double time_headway = 1.6;       // T, s
  double min_gap = 2.0;            // s0, m
  double max_accel = 0.73;         // a, m/s^2
  double comfortable_decel = 1.67; // b, m/s^2
  double accel_exponent = 4.0;     // delta
  double max_decel = 9.0;          // emergency floor, m/s^2

  void validate() const {
    if (!(desired_speed > 0.0 && time_headway > 0.0 && min_gap > 0.0 && max_accel > 0.0 &&
          comfortable_decel > 0.0 && accel_exponent > 0.0 && max_decel > 0.0)) {
      throw ConfigError("env.traffic.idm", "all IDM parameters must be > 0");
    }
  }
};

struct MobilParams {
  double politeness = 0.25;
  double changing_threshold = 0.1;  // m/s^2
  double safe_decel = 4.0;          // m/s^2

  void validate() const {
    if (!(politeness >= 0.0 && politeness <= 1.0)) {
      throw ConfigError("env.traffic.mobil.politeness", "must lie in [0, 1]");
    }
    if (changing_threshold < 0.0 || safe_decel < 0.0) {
      throw ConfigError("env.traffic.mobil", "thresholds must be >= 0");
    }
  }
};

// Gap between the rear of `front` and the front of `back`, in meters.
inline double gap_between(const Vehicle& back, const Vehicle& front) {
  return front.rear() - back.x;
}

inline double idm_acceleration(const Vehicle& ego, const Vehicle* leader, const IdmParams& p) {
  const double v = ego.speed;
  double acc = p.max_accel * (1.0 - std::pow(v / p.desired_speed, p.accel_exponent));
  if (leader != nullptr) {
    const double gap = gap_between(ego, *leader);
    if (gap <= 0.0) return -p.max_decel;
    const double dv = v - leader->speed;
    const double dynamic =
        v * p.time_headway + v * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
    const double s_star = p.min_gap + std::max(0.0, dynamic);
    acc -= p.max_accel * (s_star / gap) * (s_star / gap);
  }
  return std::max(acc, -p.max_decel);
}

// Equilibrium gap of a platoon cruising at speed v.
inline double idm_equilibrium_gap(double v, const IdmParams& p) {
  const double ratio = 1.0 - std::pow(v / p.desired_speed, p.accel_exponent);
  return (p.min_gap + v * p.time_headway) / std::sqrt(ratio);
}

enum class LaneChange { stay, left, right };

struct SideNeighbors {
  bool exists = false;
  const Vehicle* leader = nullptr;
  const Vehicle* follower = nullptr;
};

struct Neighbors {
  const Vehicle* leader = nullptr;
  const Vehicle* follower = nullptr;
  SideNeighbors left;   // lane - 1
  SideNeighbors right;  // lane + 1
};

// Physical room plus the braking veto for the would-be follower.
template <class AccelFn>
bool lane_change_safe(const Vehicle& ego, const SideNeighbors& side, double safe_decel,
                      double min_margin, AccelFn&& accel) {
  if (!side.exists) return false;
  if (side.leader != nullptr && gap_between(ego, *side.leader) < min_margin) return false;
  if (side.follower != nullptr) {
    if (gap_between(*side.follower, ego) < min_margin) return false;
    if (accel(*side.follower, &ego) < -safe_decel) return false;
  }
  return true;
}

// `accel(vehicle, leader_or_null)` returns the IDM acceleration of `vehicle`
// behind `leader`.
template <class AccelFn>
LaneChange mobil_decision(const Vehicle& ego, const Neighbors& nb, const MobilParams& p,
                          AccelFn&& accel, double min_margin = 0.5) {
  const double a_ego = accel(ego, nb.leader);
  double old_follower_gain = 0.0;
  if (nb.follower != nullptr) {
    old_follower_gain = accel(*nb.follower, nb.leader) - accel(*nb.follower, &ego);
  }

  auto incentive = [&](const SideNeighbors& side) -> std::optional<double> {
    if (!lane_change_safe(ego, side, p.safe_decel, min_margin, accel)) return std::nullopt;
    const double own_gain = accel(ego, side.leader) - a_ego;
    double new_follower_gain = 0.0;
    if (side.follower != nullptr) {
      new_follower_gain = accel(*side.follower, &ego) - accel(*side.follower, side.leader);
    }
    const double total = own_gain + p.politeness * (new_follower_gain + old_follower_gain);
    if (total > p.changing_threshold) return total;
    return std::nullopt;
  };

  const auto left = incentive(nb.left);
  const auto right = incentive(nb.right);
  if (left && right) {
    if (*left > *right) return LaneChange::left;
    if (*right > *left) return LaneChange::right;
    return LaneChange::stay;
  }
  if (left) return LaneChange::left;
  if (right) return LaneChange::right;
  return LaneChange::stay;
}

struct TrafficParams {
  IdmParams idm;
  MobilParams mobil;
  battery::AmbientParams ambient;
  double min_margin = 0.5;              // m, hard floor on bumper-to-bumper gaps
  int lane_change_cooldown = 3;         // steps between discretionary changes
  double human_speed_noise = 0.03;      // fraction of desired speed, |noise| <= this
  double human_formation_noise = 0.3;  // m/s, tracking-command noise while attached
  double human_lateral_drift = 0.1;     // m/s, sideways wander amplitude
  double track_gain = 0.5;              // 1/s, position error -> speed command
  double track_accel = 2.0;             // m/s^2
  double track_decel = 4.0;             // m/s^2
  double approach_min_speed_factor = 0.6;
  double speed_cap_factor = 1.05;       // hard cap relative to base desired speed

  void validate() const {
    idm.validate();
    mobil.validate();
    ambient.validate();
    if (!(min_margin > 0.0)) throw ConfigError("env.traffic.min_margin", "must be > 0");
    if (human_speed_noise < 0.0 || human_speed_noise > speed_cap_factor - 1.0) {
      throw ConfigError("env.traffic.human_speed_noise",
                        "must lie in [0, speed_cap_factor - 1]");
    }
    if (!(track_gain > 0.0 && track_accel > 0.0 && track_decel > 0.0)) {
      throw ConfigError("env.traffic.track_gain", "tracking gains must be > 0");
    }
    if (!(speed_cap_factor >= 1.0)) {
      throw ConfigError("env.traffic.speed_cap_factor", "must be >= 1");
    }
  }
};

struct World {
  RoadNetwork road;
  std::vector<Vehicle> vehicles;  // ascending id
  int next_id = 0;
  long step = 0;

  Vehicle* find(int id) {
    auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                               [](const Vehicle& v, int key) { return v.id < key; });
    return (it != vehicles.end() && it->id == id) ? &*it : nullptr;
  }
  const Vehicle* find(int id) const { return const_cast<World*>(this)->find(id); }

  int add(Vehicle v) {
    v.id = next_id++;
    v.spawn_step = step;
    vehicles.push_back(std::move(v));
    return vehicles.back().id;
  }
};

// Per-lane vehicle indices sorted by position (ties by id).
class LaneIndex {
 public:
  LaneIndex(const World& world) : world_(&world), lanes_(world.road.lanes) {
    for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
      lanes_.at(world.vehicles[i].lane).push_back(i);
    }
    for (auto& lane : lanes_) std::sort(lane.begin(), lane.end(), [&](auto a, auto b) { return less(a, b); });
  }

  const std::vector<std::size_t>& lane(int l) const { return lanes_.at(l); }

  void move(std::size_t idx, int from, int to) {
    auto& src = lanes_.at(from);
    src.erase(std::find(src.begin(), src.end(), idx));
    auto& dst = lanes_.at(to);
    dst.insert(std::lower_bound(dst.begin(), dst.end(), idx, [&](auto a, auto b) { return less(a, b); }), idx);
  }

  // Nearest vehicles ahead of / behind position `x` in `lane`, skipping `self`.
  SideNeighbors around(int lane, double x, int self_id) const {
    SideNeighbors out;
    if (lane < 0 || lane >= static_cast<int>(lanes_.size())) return out;
    out.exists = true;
    const auto& vs = world_->vehicles;
    for (std::size_t idx : lanes_[lane]) {
      const Vehicle& v = vs[idx];
      if (v.id == self_id) continue;
      if (v.x > x || (v.x == x && v.id > self_id)) {
        out.leader = &v;
        break;
      }
      out.follower = &v;
    }
    return out;
  }

  Neighbors neighbors(const Vehicle& ego) const {
    Neighbors nb;
    const auto own = around(ego.lane, ego.x, ego.id);
    nb.leader = own.leader;
    nb.follower = own.follower;
    nb.left = around(ego.lane - 1, ego.x, ego.id);
    nb.right = around(ego.lane + 1, ego.x, ego.id);
    return nb;
  }

 private:
  bool less(std::size_t a, std::size_t b) const {
    const auto& va = world_->vehicles[a];
    const auto& vb = world_->vehicles[b];
    return va.x < vb.x || (va.x == vb.x && va.id < vb.id);
  }

  const World* world_;
  std::vector<std::vector<std::size_t>> lanes_;
};

inline IdmParams idm_for(const Vehicle& v, const IdmParams& shape) {
  IdmParams p = shape;
  p.desired_speed = v.desired_speed;
  return p;
}

inline double speed_cap(const Vehicle& v, const TrafficParams& params) {
  return v.base_desired_speed * params.speed_cap_factor;
}

// Members of a MED's platoon do not react to each other through IDM; the
// hard margin in the integrator still separates them.
inline bool same_platoon(const Vehicle& ego, const Vehicle& leader) {
  auto member = [](const Vehicle& v) {
    return v.guidance.mode == Mode::approach || v.guidance.mode == Mode::formation;
  };
  if (ego.is_med()) return member(leader) && leader.guidance.med_id == ego.id;
  if (member(ego)) {
    if (leader.id == ego.guidance.med_id) return true;
    return member(leader) && leader.guidance.med_id == ego.guidance.med_id;
  }
  return false;
}

enum class DepartureReason { exited, depleted };

struct Departure {
  Vehicle vehicle;  // final state
  DepartureReason reason;
};

struct Displacement {
  int id;
  double meters;
  double speed;
};

struct AdvanceReport {
  std::vector<Departure> departures;
  std::vector<Displacement> ev_moves;  // every EV that moved this step, including departures
  int lane_changes = 0;
};

namespace detail {

inline double tracking_accel(const Vehicle& ego, const TrafficParams& params, double dt,
                             double noise) {
  const Guidance& g = ego.guidance;
  double v_cmd = g.target_speed + params.track_gain * (g.target_x - ego.x) + noise;
  const double lo = g.mode == Mode::approach ? params.approach_min_speed_factor * g.target_speed : 0.0;
  v_cmd = std::clamp(v_cmd, lo, speed_cap(ego, params));
  return std::clamp((v_cmd - ego.speed) / dt, -params.track_decel, params.track_accel);
}

}  // namespace detail

// One simulation step: lateral decisions, longitudinal control, semi-implicit
// Euler integration, battery drain, and despawn at the road end.
inline AdvanceReport advance(World& world, const TrafficParams& params, Rng& rng, double dt) {
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  AdvanceReport report;
  auto& vs = world.vehicles;

  // Human drivers: bounded desired-speed perturbation and sideways wander.
  std::vector<double> formation_noise(vs.size(), 0.0);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    Vehicle& v = vs[i];
    if (!v.is_human()) continue;
    const double n = rng.uniform(-1.0, 1.0);
    if (v.guidance.mode == Mode::free) {
      v.desired_speed = v.base_desired_speed * (1.0 + params.human_speed_noise * n);
    }
    formation_noise[i] = params.human_formation_noise * n;
    v.lateral_drift = params.human_lateral_drift * rng.uniform(-1.0, 1.0);
  }

  auto accel_fn = [&](const Vehicle& v, const Vehicle* leader) {
    return idm_acceleration(v, leader, idm_for(v, params.idm));
  };

  // Lateral phase, sequential in id order against the current lane layout.
  LaneIndex index(world);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    Vehicle& v = vs[i];
    v.lateral_rate = 0.0;
    if (v.guidance.mode == Mode::formation) continue;
    const auto nb = index.neighbors(v);
    int dir = 0;
    if (v.guidance.mode == Mode::free) {
      if (world.step - v.last_lane_change_step < params.lane_change_cooldown) continue;
      const auto choice = mobil_decision(v, nb, params.mobil, accel_fn, params.min_margin);
      dir = choice == LaneChange::left ? -1 : (choice == LaneChange::right ? 1 : 0);
    } else if (v.lane != v.guidance.target_lane) {
      dir = v.guidance.target_lane < v.lane ? -1 : 1;
      const auto& side = dir < 0 ? nb.left : nb.right;
      if (!lane_change_safe(v, side, params.mobil.safe_decel, params.min_margin, accel_fn)) dir = 0;
    }
    if (dir != 0) {
      index.move(i, v.lane, v.lane + dir);
      v.lane += dir;
      v.lateral_rate = dir / dt;
      v.last_lane_change_step = world.step;
      ++report.lane_changes;
    }
  }

  // Longitudinal control from the post-lane-change layout.
  std::vector<double> accel(vs.size(), 0.0);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const Vehicle& v = vs[i];
    const auto own = index.around(v.lane, v.x, v.id);
    const Vehicle* leader = own.leader;
    if (leader != nullptr && same_platoon(v, *leader)) leader = nullptr;
    switch (v.guidance.mode) {
      case Mode::free:
      case Mode::service:
        accel[i] = accel_fn(v, leader);
        break;
      case Mode::approach:
      case Mode::formation: {
        const double noise = v.guidance.mode == Mode::formation ? formation_noise[i] : 0.0;
        double a = detail::tracking_accel(v, params, dt, noise);
        if (leader != nullptr) {
          IdmParams p = params.idm;
          p.desired_speed = speed_cap(v, params);
          a = std::min(a, idm_acceleration(v, leader, p));
        }
        accel[i] = a;
        break;
      }
    }
  }

  // Integrate front to back per lane so each follower sees its leader's new position.
  std::vector<double> v_prev(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) v_prev[i] = vs[i].speed;
  for (int lane = 0; lane < world.road.lanes; ++lane) {
    const auto& order = index.lane(lane);
    const Vehicle* ahead = nullptr;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Vehicle& v = vs[*it];
      double v_new = std::clamp(v.speed + accel[*it] * dt, 0.0, speed_cap(v, params));
      if (ahead != nullptr) {
        const double limit = ahead->rear() - params.min_margin;
        if (v.x + v_new * dt > limit) v_new = std::max(0.0, (limit - v.x) / dt);
      }
      const double dx = v_new * dt;
      v.x += dx;
      v.speed = v_new;
      v.odometer += dx;
      if (v.is_ev()) report.ev_moves.push_back({v.id, dx, v_new});
      ahead = &v;
    }
  }

  // Battery drain for EVs (MED traction is not drawn from the dissemination pack).
  std::vector<char> remove(vs.size(), 0);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    Vehicle& v = vs[i];
    if (v.is_ev() && v.battery) {
      const double p = battery::tractive_power(v_prev[i], v.speed, dt, v.body, params.ambient);
      v.battery = battery::consume(*v.battery, p, dt);
      if (v.battery->depleted) {
        report.departures.push_back({v, DepartureReason::depleted});
        remove[i] = 1;
        continue;
      }
    }
    if (v.x >= world.road.length_m()) {
      report.departures.push_back({v, DepartureReason::exited});
      remove[i] = 1;
    }
  }
  std::size_t w = 0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (!remove[i]) {
      if (w != i) vs[w] = std::move(vs[i]);
      ++w;
    }
  }
  vs.resize(w);
  std::sort(report.ev_moves.begin(), report.ev_moves.end(),
            [](const Displacement& a, const Displacement& b) { return a.id < b.id; });
  ++world.step;
  return report;
}

// Per-entry arrival probabilities per step.
struct SpawnRates {
  double ev_main = 0.12;   // left end of the corridor
  double gas_main = 0.12;
  double ev_ramp = 0.03;   // each ramp
  double gas_ramp = 0.03;
};

struct SpawnConfig {
  SpawnRates rates;
  double speed_min = 22.0;  // m/s at entry
  double speed_max = 28.0;
  double desired_speed_min = 28.0;
  double desired_speed_max = 32.0;
  double human_fraction = 0.5;
  double ev_capacity = 3.0e6;  // J
  double ev_soc_min = 0.15;
  double ev_soc_max = 0.75;
  double vehicle_length = 5.0;
  double spawn_headway = 1.0;  // s of clearance at entry speed
  int max_pending = 4;         // per entry point; further arrivals are dropped
  battery::VehicleBodyParams ev_body;
  battery::VehicleBodyParams gas_body;

  void validate() const {
    for (double r : {rates.ev_main, rates.gas_main, rates.ev_ramp, rates.gas_ramp}) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("env.spawn.rates", "rates must lie in [0, 1]");
    }
    if (!(speed_min >= 0.0 && speed_max >= speed_min)) {
      throw ConfigError("env.spawn.speed_min", "need 0 <= speed_min <= speed_max");
    }
    if (!(desired_speed_min > 0.0 && desired_speed_max >= desired_speed_min)) {
      throw ConfigError("env.spawn.desired_speed_min", "need 0 < min <= max");
    }
    if (!(human_fraction >= 0.0 && human_fraction <= 1.0)) {
      throw ConfigError("env.spawn.human_fraction", "must lie in [0, 1]");
    }
    if (!(ev_capacity > 0.0)) throw ConfigError("env.spawn.ev_capacity", "must be > 0");
    if (!(ev_soc_min >= 0.0 && ev_soc_max <= 1.0 && ev_soc_min <= ev_soc_max)) {
      throw ConfigError("env.spawn.ev_soc_min", "need 0 <= min <= max <= 1");
    }
    if (!(vehicle_length > 0.0)) throw ConfigError("env.spawn.vehicle_length", "must be > 0");
    if (max_pending < 0) throw ConfigError("env.spawn.max_pending", "must be >= 0");
    ev_body.validate();
    gas_body.validate();
  }
};

// Is there room for a vehicle with front at `x`, length `len` and speed `v` in `lane`?
inline bool entry_clear(const LaneIndex& index, int lane, double x, double len, double v,
                        const IdmParams& idm, double headway) {
  const auto side = index.around(lane, x, -1);
  if (side.leader != nullptr) {
    const double gap = side.leader->rear() - x;
    if (gap < idm.min_gap + v * headway) return false;
  }
  if (side.follower != nullptr) {
    const double gap = (x - len) - side.follower->x;
    if (gap < idm.min_gap + side.follower->speed * headway) return false;
  }
  return true;
}

// Random arrivals at the left end (entry 0) and each ramp (entries 1..n).
class Spawner {
 public:
  // Returns ids of vehicles inserted into `world`.
  std::vector<int> step(Rng& rng, World& world, const SpawnConfig& cfg, const IdmParams& idm) {
    const std::size_t entries = 1 + world.road.ramp_positions.size();
    if (pending_.size() != entries) pending_.assign(entries, {});

    for (std::size_t e = 0; e < entries; ++e) {
      const double ev_rate = e == 0 ? cfg.rates.ev_main : cfg.rates.ev_ramp;
      const double gas_rate = e == 0 ? cfg.rates.gas_main : cfg.rates.gas_ramp;
      for (auto [kind, rate] : {std::pair{Kind::ev, ev_rate}, std::pair{Kind::gas, gas_rate}}) {
        if (rate > 0.0 && rng.bernoulli(rate) &&
            static_cast<int>(pending_[e].size()) < cfg.max_pending) {
          pending_[e].push_back(kind);
        }
      }
    }

    std::vector<int> spawned;
    for (std::size_t e = 0; e < entries; ++e) {
      while (!pending_[e].empty()) {
        LaneIndex index(world);
        const Kind kind = pending_[e].front();
        const double v0 = rng.uniform(cfg.speed_min, cfg.speed_max);
        const double x = e == 0 ? cfg.vehicle_length : world.road.ramp_m(e - 1);
        int lane = -1;
        if (e == 0) {
          const int start = rng.uniform_int(world.road.lanes);
          for (int k = 0; k < world.road.lanes && lane < 0; ++k) {
            const int l = (start + k) % world.road.lanes;
            if (entry_clear(index, l, x, cfg.vehicle_length, v0, idm, cfg.spawn_headway)) lane = l;
          }
        } else if (entry_clear(index, world.road.ramp_lane(), x, cfg.vehicle_length, v0, idm,
                               cfg.spawn_headway)) {
          lane = world.road.ramp_lane();
        }
        if (lane < 0) break;  // deferred to a later step

        Vehicle v;
        v.kind = kind;
        v.x = x;
        v.lane = lane;
        v.length = cfg.vehicle_length;
        v.base_desired_speed = rng.uniform(cfg.desired_speed_min, cfg.desired_speed_max);
        v.desired_speed = v.base_desired_speed;
        v.speed = std::min(v0, v.base_desired_speed);
        const auto ahead = index.around(lane, x, -1).leader;
        if (ahead != nullptr && ahead->rear() - x < 200.0) v.speed = std::min(v.speed, ahead->speed);
        if (kind == Kind::ev) {
          v.driver = rng.bernoulli(cfg.human_fraction) ? Driver::human : Driver::autonomous;
          v.body = cfg.ev_body;
          v.battery = battery::BatteryState::from_soc(
              cfg.ev_capacity, rng.uniform(cfg.ev_soc_min, cfg.ev_soc_max));
        } else {
          v.driver = Driver::human;
          v.body = cfg.gas_body;
        }
        spawned.push_back(world.add(std::move(v)));
        pending_[e].pop_front();
      }
    }
    return spawned;
  }

  void clear() { pending_.clear(); }

 private:
  std::vector<std::deque<Kind>> pending_;
};

}  // namespace medsim::traffic

#endif  // MEDSIM_TRAFFIC_HPP_
