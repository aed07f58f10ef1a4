#ifndef MEDSIM_ENV_HPP_
#define MEDSIM_ENV_HPP_

// Episodic dispatch environment. Each step the agent either holds (action 0)
// or releases a MED at one of the four ramps (actions 1..4), subject to a
// cooldown and a finite MED pool.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "medsim/battery.hpp"
#include "medsim/error.hpp"
#include "medsim/protocol.hpp"
#include "medsim/rng.hpp"
#include "medsim/traffic.hpp"

namespace medsim::env {

inline constexpr int kNumActions = 5;
inline constexpr int kMedBlock = 14;
inline constexpr int kEvBlock = 8;

struct RewardWeights {
  double depletion = 1.0;  // w1
  double soc = 1.0;        // w2
  double distance = 1.0;   // w3
  double speed = 1.0;      // w4
  double depletion_penalty = 10.0;  // deducted per depleted EV before weighting

  void validate() const {
    if (depletion < 0.0 || soc < 0.0 || distance < 0.0 || speed < 0.0) {
      throw ConfigError("env.reward", "weights must be >= 0");
    }
    if (depletion_penalty < 0.0) throw ConfigError("env.reward.depletion_penalty", "must be >= 0");
  }
};

struct MedConfig {
  double capacity = 60.0e6;  // J in the dissemination pack
  double initial_soc = 1.0;
  double service_speed = 22.0;  // m/s
  double length = 8.0;          // m
  double exit_margin = 30.0;    // m before the road end where service stops

  void validate() const {
    if (!(capacity > 0.0)) throw ConfigError("env.med.capacity", "must be > 0");
    if (!(initial_soc > 0.0 && initial_soc <= 1.0)) {
      throw ConfigError("env.med.initial_soc", "must lie in (0, 1]");
    }
    if (!(service_speed > 0.0)) throw ConfigError("env.med.service_speed", "must be > 0");
    if (!(length > 0.0)) throw ConfigError("env.med.length", "must be > 0");
    if (exit_margin < 0.0) throw ConfigError("env.med.exit_margin", "must be >= 0");
  }
};

struct EnvConfig {
  traffic::RoadNetwork road;
  traffic::TrafficParams traffic;
  traffic::SpawnConfig spawn;
  protocol::ProtocolConfig protocol;
  MedConfig med;
  RewardWeights reward;
  int max_meds = 15;
  int max_evs = 50;
  int horizon = 1000;
  int cooldown = 40;
  int warmup_steps = 150;
  int med_turnaround = 100;  // steps before an exited MED rejoins the pool
  double dt = 1.0;
  double v_max = 35.0;  // m/s, speed normalisation
  std::uint64_t seed = 0;

  std::size_t observation_size() const {
    return static_cast<std::size_t>(kMedBlock * max_meds + kEvBlock * max_evs);
  }

  void validate() const {
    road.validate();
    traffic.validate();
    spawn.validate();
    protocol.validate(road.lanes);
    med.validate();
    reward.validate();
    if (max_meds < 1) throw ConfigError("env.max_meds", "must be >= 1");
    if (max_evs < 1) throw ConfigError("env.max_evs", "must be >= 1");
    if (horizon < 1) throw ConfigError("env.horizon", "must be >= 1");
    if (cooldown < 0) throw ConfigError("env.cooldown", "must be >= 0");
    if (warmup_steps < 0) throw ConfigError("env.warmup_steps", "must be >= 0");
    if (med_turnaround < 0) throw ConfigError("env.med_turnaround", "must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("env.dt", "must be > 0");
    const double fastest =
        std::max(spawn.desired_speed_max, med.service_speed) * traffic.speed_cap_factor;
    if (!(v_max >= fastest)) {
      throw ConfigError("env.v_max", "must cover the fastest capped desired speed");
    }
  }
};

using Observation = std::vector<double>;

enum class DispatchOutcome { none, accepted, cooldown, pool_empty, blocked };

inline const char* outcome_name(DispatchOutcome o) {
  switch (o) {
    case DispatchOutcome::none: return "none";
    case DispatchOutcome::accepted: return "accepted";
    case DispatchOutcome::cooldown: return "cooldown";
    case DispatchOutcome::pool_empty: return "pool_empty";
    case DispatchOutcome::blocked: return "blocked";
  }
  return "?";
}

struct RewardInputs {
  int depletions = 0;
  double mean_soc = 0.0;
  double displacement_m = 0.0;  // summed over EVs that moved this step
  int moving_evs = 0;
  double mean_speed = 0.0;  // m/s over EVs on the road
};

struct RewardComponents {
  double depletion = 0.0;  // already weighted and signed
  double soc = 0.0;
  double distance = 0.0;
  double speed = 0.0;
  double total = 0.0;
};

inline RewardComponents compute_reward(const RewardInputs& in, const RewardWeights& w,
                                       double v_max, double dt) {
  RewardComponents r;
  r.depletion = -w.depletion * in.depletions * w.depletion_penalty;
  r.soc = w.soc * in.mean_soc;
  r.distance = in.moving_evs > 0 ? w.distance * in.displacement_m / (v_max * dt * in.moving_evs) : 0.0;
  r.speed = w.speed * in.mean_speed / v_max;
  r.total = r.depletion + r.soc + r.distance + r.speed;
  return r;
}

struct StepInfo {
  int action = 0;
  // True when cooldown and pool allowed a release this step, i.e. the action
  // could change the outcome. Known before the action is applied.
  bool decision_point = false;
  DispatchOutcome dispatch = DispatchOutcome::none;
  int depletions = 0;
  int meds_deployed = 0;   // MEDs currently on the road
  int meds_available = 0;  // in the pool
  int ev_count = 0;
  bool truncated = false;  // more EVs on the road than observation blocks
  RewardComponents reward;
  std::vector<protocol::LedgerRow> ledger;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct EpisodeSummary {
  double total_reward = 0.0;
  int evs_seen = 0;
  int evs_depleted = 0;
  double depletion_proportion = 0.0;
  double avg_range_units = 0.0;
  double avg_soc = 0.0;  // time average of the per-step mean EV SoC
  int meds_dispatched = 0;
  double energy_expended = 0.0;
  double energy_received = 0.0;
};

// Fixed-length observation: max_meds blocks of 14 then max_evs blocks of 8,
// each group sorted by vehicle id and zero padded. Returns true when EVs had
// to be left out.
inline bool build_observation(const traffic::World& world, std::span<const protocol::MedUnit> meds,
                              const EnvConfig& cfg, Observation& out) {
  out.assign(cfg.observation_size(), 0.0);
  const double length = world.road.length_m();
  const double lane_span = static_cast<double>(world.road.lanes - 1);

  std::map<int, int> med_block;  // vehicle id -> block index
  int block = 0;
  for (const auto& med : meds) {
    if (block >= cfg.max_meds) break;
    const traffic::Vehicle* v = world.find(med.vehicle_id);
    if (v == nullptr) continue;
    double* o = out.data() + kMedBlock * block;
    o[0] = std::clamp(v->x / length, 0.0, 1.0);
    o[1] = v->lane / lane_span;
    o[2] = std::clamp(v->speed / cfg.v_max, 0.0, 1.0);
    o[3] = std::clamp(v->lateral_rate * cfg.dt, -1.0, 1.0);
    o[4] = med.dissemination_battery.soc();
    o[5] = med.in_service ? 1.0 : 0.0;
    for (int s = 0; s < 4; ++s) {
      o[6 + s] = med.slots[s].is_booked ? 1.0 : 0.0;
      o[10 + s] = med.slots[s].is_charging ? 1.0 : 0.0;
    }
    med_block[med.vehicle_id] = block++;
  }

  std::vector<const traffic::Vehicle*> evs;
  for (const auto& v : world.vehicles) {
    if (v.is_ev()) evs.push_back(&v);
  }
  bool truncated = false;
  std::size_t first = 0;
  if (evs.size() > static_cast<std::size_t>(cfg.max_evs)) {
    truncated = true;
    first = evs.size() - static_cast<std::size_t>(cfg.max_evs);
  }
  for (std::size_t i = first; i < evs.size(); ++i) {
    const traffic::Vehicle& v = *evs[i];
    double* o = out.data() + cfg.observation_size() - kEvBlock * cfg.max_evs +
                kEvBlock * static_cast<int>(i - first);
    o[0] = std::clamp(v.x / length, 0.0, 1.0);
    o[1] = v.lane / lane_span;
    o[2] = std::clamp(v.speed / cfg.v_max, 0.0, 1.0);
    o[3] = std::clamp(v.lateral_rate * cfg.dt, -1.0, 1.0);
    o[4] = v.soc();
    o[5] = v.is_human() ? 1.0 : 0.0;
    o[6] = v.guidance.mode == traffic::Mode::formation ? 1.0 : 0.0;
    const auto it = med_block.find(v.guidance.med_id);
    const bool booked = v.guidance.mode == traffic::Mode::approach ||
                        v.guidance.mode == traffic::Mode::formation;
    o[7] = (booked && it != med_block.end()) ? (it->second + 1.0) / cfg.max_meds : 0.0;
  }
  return truncated;
}

class ChargingEnv {
 public:
  explicit ChargingEnv(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  std::size_t observation_size() const { return cfg_.observation_size(); }
  const traffic::World& world() const { return world_; }
  traffic::World& world() { return world_; }
  const std::vector<protocol::MedUnit>& meds() const { return meds_; }
  std::vector<protocol::MedUnit>& meds() { return meds_; }
  int pool_available() const { return pool_available_; }
  int cooldown_remaining() const { return cooldown_remaining_; }
  long steps_taken() const { return step_count_; }
  bool done() const { return done_; }

  Observation reset(std::uint64_t seed) {
    rng_.seed(seed);
    world_ = traffic::World{};
    world_.road = cfg_.road;
    spawner_.clear();
    meds_.clear();
    returning_.clear();
    pool_available_ = cfg_.max_meds;
    cooldown_remaining_ = 0;
    step_count_ = 0;
    done_ = false;
    for (int i = 0; i < cfg_.warmup_steps; ++i) {
      traffic::advance(world_, cfg_.traffic, rng_, cfg_.dt);
      spawner_.step(rng_, world_, cfg_.spawn, cfg_.traffic.idm);
    }
    tracker_ = Tracker{};
    for (const auto& v : world_.vehicles) {
      if (v.is_ev()) tracker_.seen.insert_or_assign(v.id, EvRecord{});
    }
    Observation obs;
    build_observation(world_, meds_, cfg_, obs);
    return obs;
  }

  Observation reset() { return reset(cfg_.seed); }

  StepResult step(int action) {
    if (done_) throw LifecycleError("step() called on a finished episode; call reset()");
    if (action < 0 || action >= kNumActions) {
      throw InputError("action must lie in [0, 4], got " + std::to_string(action));
    }
    StepResult result;
    StepInfo& info = result.info;
    info.action = action;

    // (1) dispatch
    while (!returning_.empty() && returning_.front() <= step_count_) {
      returning_.pop_front();
      ++pool_available_;
    }
    info.decision_point = cooldown_remaining_ == 0 && pool_available_ > 0;
    if (action > 0) info.dispatch = dispatch(action - 1);

    // (2) bookings, requests, attach
    run_protocol();

    // (3) traffic and (5) battery drain
    const auto report = traffic::advance(world_, cfg_.traffic, rng_, cfg_.dt);
    for (const auto& dep : report.departures) on_departure(dep, info);

    // (4) energy transfer
    for (auto& med : meds_) {
      if (!med.any_charging()) continue;
      auto rows = protocol::charging_step(med, world_, cfg_.dt, cfg_.protocol);
      for (auto& r : rows) {
        tracker_.expended += r.expended;
        tracker_.received += r.received;
        info.ledger.push_back(r);
      }
    }

    // (6) reward
    RewardInputs in;
    in.depletions = info.depletions;
    for (const auto& mv : report.ev_moves) {
      in.displacement_m += mv.meters;
      ++in.moving_evs;
    }
    int evs = 0;
    double soc_sum = 0.0;
    double speed_sum = 0.0;
    for (const auto& v : world_.vehicles) {
      if (!v.is_ev()) continue;
      ++evs;
      soc_sum += v.soc();
      speed_sum += v.speed;
    }
    if (evs > 0) {
      in.mean_soc = soc_sum / evs;
      in.mean_speed = speed_sum / evs;
      tracker_.soc_sum += in.mean_soc;
      ++tracker_.soc_steps;
    }
    info.reward = compute_reward(in, cfg_.reward, cfg_.v_max, cfg_.dt);
    result.reward = info.reward.total;
    tracker_.total_reward += result.reward;

    // (7) arrivals
    for (int id : spawner_.step(rng_, world_, cfg_.spawn, cfg_.traffic.idm)) {
      if (world_.find(id)->is_ev()) tracker_.seen.insert_or_assign(id, EvRecord{});
    }

    // (8) bookkeeping
    if (cooldown_remaining_ > 0) --cooldown_remaining_;
    ++step_count_;
    done_ = step_count_ >= cfg_.horizon;
    result.done = done_;
    info.meds_deployed = static_cast<int>(meds_.size());
    info.meds_available = pool_available_;
    info.ev_count = 0;
    for (const auto& v : world_.vehicles) info.ev_count += v.is_ev() ? 1 : 0;
    info.truncated = build_observation(world_, meds_, cfg_, result.observation);
    return result;
  }

  EpisodeSummary summary() const {
    EpisodeSummary s;
    s.total_reward = tracker_.total_reward;
    s.meds_dispatched = tracker_.meds_dispatched;
    s.energy_expended = tracker_.expended;
    s.energy_received = tracker_.received;
    double range = 0.0;
    for (const auto& [id, rec] : tracker_.seen) {
      ++s.evs_seen;
      double meters = rec.final_odometer;
      if (!rec.departed) {
        const traffic::Vehicle* v = world_.find(id);
        meters = v != nullptr ? v->odometer : 0.0;
      }
      if (rec.depleted) ++s.evs_depleted;
      range += world_.road.to_units(meters);
    }
    if (s.evs_seen > 0) {
      s.depletion_proportion = static_cast<double>(s.evs_depleted) / s.evs_seen;
      s.avg_range_units = range / s.evs_seen;
    }
    if (tracker_.soc_steps > 0) s.avg_soc = tracker_.soc_sum / tracker_.soc_steps;
    return s;
  }

  // Place a MED on the ramp lane at ramp `ramp`; used by step() and by tests.
  DispatchOutcome dispatch(int ramp) {
    if (ramp < 0 || ramp >= static_cast<int>(world_.road.ramp_positions.size())) {
      throw InputError("ramp index out of range");
    }
    if (cooldown_remaining_ > 0) return DispatchOutcome::cooldown;
    if (pool_available_ <= 0) return DispatchOutcome::pool_empty;
    const double x = world_.road.ramp_m(static_cast<std::size_t>(ramp));
    const int lane = world_.road.ramp_lane();
    const traffic::LaneIndex index(world_);
    if (!traffic::entry_clear(index, lane, x, cfg_.med.length, cfg_.med.service_speed,
                              cfg_.traffic.idm, cfg_.spawn.spawn_headway)) {
      return DispatchOutcome::blocked;
    }
    traffic::Vehicle v;
    v.kind = traffic::Kind::med;
    v.driver = traffic::Driver::autonomous;
    v.x = x;
    v.lane = lane;
    v.length = cfg_.med.length;
    v.base_desired_speed = cfg_.med.service_speed;
    v.desired_speed = cfg_.med.service_speed;
    v.speed = cfg_.med.service_speed;
    v.guidance.mode = traffic::Mode::service;
    v.guidance.target_lane = cfg_.protocol.service_lane;
    v.guidance.target_speed = cfg_.med.service_speed;
    const int id = world_.add(std::move(v));
    protocol::MedUnit unit;
    unit.vehicle_id = id;
    unit.dissemination_battery =
        battery::BatteryState::from_soc(cfg_.med.capacity, cfg_.med.initial_soc);
    meds_.push_back(unit);
    --pool_available_;
    cooldown_remaining_ = cfg_.cooldown;
    ++tracker_.meds_dispatched;
    return DispatchOutcome::accepted;
  }

 private:
  struct EvRecord {
    bool departed = false;
    bool depleted = false;
    double final_odometer = 0.0;
  };

  struct Tracker {
    std::map<int, EvRecord> seen;
    double soc_sum = 0.0;
    long soc_steps = 0;
    double total_reward = 0.0;
    int meds_dispatched = 0;
    double expended = 0.0;
    double received = 0.0;
  };

  void run_protocol() {
    const auto& pc = cfg_.protocol;
    const double end = world_.road.length_m();
    for (auto& med : meds_) {
      traffic::Vehicle* mv = world_.find(med.vehicle_id);
      if (mv == nullptr) continue;
      const bool leaving = mv->x >= end - cfg_.med.exit_margin;
      if (leaving) {
        if (med.in_service) protocol::release_all(world_, med);
        med.in_service = false;
      } else {
        med.in_service = mv->lane == pc.service_lane;
      }
      if (med.in_service && !protocol::can_accept_bookings(med, pc)) {
        // Exhausted packs keep nobody waiting.
        for (int s = 0; s < 4; ++s) {
          if (med.slots[s].is_booked && !med.slots[s].is_charging) {
            protocol::detach(world_.find(*med.slots[s].occupant), med, s);
          }
        }
      }
      protocol::expire_bookings(world_, med, pc);
    }

    for (auto& v : world_.vehicles) {
      if (!v.is_ev() || v.guidance.mode != traffic::Mode::free) continue;
      if (v.soc() >= pc.request_threshold) continue;
      protocol::handle_request(v, meds_, world_, pc);
    }

    for (auto& med : meds_) {
      protocol::update_guidance(world_, med, pc);
      for (int s = 0; s < 4; ++s) {
        auto& slot = med.slots[s];
        if (!slot.is_booked || slot.is_charging) continue;
        traffic::Vehicle* ev = world_.find(*slot.occupant);
        if (ev != nullptr) protocol::attach(*ev, med, s, world_, pc);
      }
    }
  }

  void on_departure(const traffic::Departure& dep, StepInfo& info) {
    const traffic::Vehicle& v = dep.vehicle;
    if (v.is_ev()) {
      auto& rec = tracker_.seen[v.id];
      rec.departed = true;
      rec.final_odometer = v.odometer;
      if (dep.reason == traffic::DepartureReason::depleted) {
        rec.depleted = true;
        ++info.depletions;
      }
      // Free any slot the EV held.
      if (v.guidance.med_id >= 0) {
        for (auto& med : meds_) {
          if (med.vehicle_id != v.guidance.med_id) continue;
          for (int s = 0; s < 4; ++s) {
            if (med.slots[s].occupant == v.id) protocol::detach(nullptr, med, s);
          }
        }
      }
    } else if (v.is_med()) {
      auto it = std::find_if(meds_.begin(), meds_.end(),
                             [&](const protocol::MedUnit& m) { return m.vehicle_id == v.id; });
      if (it != meds_.end()) {
        protocol::release_all(world_, *it);
        meds_.erase(it);
        returning_.push_back(step_count_ + cfg_.med_turnaround);
      }
    }
  }

  EnvConfig cfg_;
  traffic::World world_;
  traffic::Spawner spawner_;
  Rng rng_;
  std::vector<protocol::MedUnit> meds_;  // on the road, ascending vehicle id
  std::deque<long> returning_;           // steps at which exited MEDs rejoin the pool
  int pool_available_ = 0;
  int cooldown_remaining_ = 0;
  long step_count_ = 0;
  bool done_ = false;
  Tracker tracker_;
};

inline const char* kStepCsvHeader =
    "step,action,dispatch,reward,r_depletion,r_soc,r_distance,r_speed,ev_count,meds_deployed,"
    "depletions";

inline std::string step_csv_row(long step, const StepResult& r) {
  char buf[512];
  const auto& i = r.info;
  std::snprintf(buf, sizeof(buf), "%ld,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d", step,
                i.action, outcome_name(i.dispatch), r.reward, i.reward.depletion, i.reward.soc,
                i.reward.distance, i.reward.speed, i.ev_count, i.meds_deployed, i.depletions);
  return buf;
}

}  // namespace medsim::env

#endif  // MEDSIM_ENV_HPP_
