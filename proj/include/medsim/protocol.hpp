#ifndef MEDSIM_PROTOCOL_HPP_
#define MEDSIM_PROTOCOL_HPP_

// MED charging-slot state machine: booking, approach, attach, energy
// transfer, detach. Each MED carries four slots anchored FRONT, REAR, LEFT
// and RIGHT of the vehicle; the MED and its attached EVs span three lanes.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "medsim/battery.hpp"
#include "medsim/error.hpp"
#include "medsim/physics.hpp"
#include "medsim/traffic.hpp"

namespace medsim::protocol {

enum class Anchor { front = 0, rear = 1, left = 2, right = 3 };

inline constexpr std::array<Anchor, 4> kAnchors{Anchor::front, Anchor::rear, Anchor::left,
                                                Anchor::right};
// Order in which free slots are handed out.
inline constexpr std::array<int, 4> kBookingPreference{1, 2, 3, 0};

inline const char* anchor_name(Anchor a) {
  switch (a) {
    case Anchor::front: return "front";
    case Anchor::rear: return "rear";
    case Anchor::left: return "left";
    case Anchor::right: return "right";
  }
  return "?";
}

struct ChargingSlot {
  Anchor anchor = Anchor::front;
  bool is_booked = false;
  bool is_charging = false;
  std::optional<int> occupant;  // EV id
  int booking_age = 0;          // steps since booking without attach

  void clear() {
    is_booked = false;
    is_charging = false;
    occupant.reset();
    booking_age = 0;
  }
};

inline ChargingSlot make_slot(Anchor a) {
  ChargingSlot s;
  s.anchor = a;
  return s;
}

struct MedUnit {
  int vehicle_id = -1;
  std::array<ChargingSlot, 4> slots{
      make_slot(Anchor::front), make_slot(Anchor::rear), make_slot(Anchor::left),
      make_slot(Anchor::right)};
  bool in_service = false;
  battery::BatteryState dissemination_battery;

  int occupants() const {
    return static_cast<int>(std::count_if(slots.begin(), slots.end(),
                                          [](const ChargingSlot& s) { return s.is_booked; }));
  }
  bool any_charging() const {
    return std::any_of(slots.begin(), slots.end(),
                       [](const ChargingSlot& s) { return s.is_charging; });
  }
};

struct ChargingRequest {
  int ev_id = -1;
  int med_id = -1;
  long issued_step = 0;
};

struct ProtocolConfig {
  double request_threshold = 0.30;   // EV SoC below which a request is sent
  double target_soc = 0.80;          // charge-complete level
  double reserve_floor = 0.10;       // MED dissemination SoC kept in reserve
  double detection_radius = 600.0;   // units, |x_med - x_ev|
  int booking_timeout = 60;          // steps
  double charge_power = 50.0e3;      // W expended per charging slot
  double slot_offset = 10.0;         // m, FRONT/REAR anchor distance from the MED front
  double attach_tolerance = 1.0;     // m
  double max_transfer_offset = 1.0;  // m, no transfer beyond this horizontal offset
  double mounting_gap = 0.25;        // m, lateral misalignment c
  double max_tilt = 0.2;             // rad, clamp on angular misalignment
  int service_lane = 1;
  physics::CoilSpec med_coil;
  physics::CoilSpec ev_coil;
  physics::CircuitParams circuit;
  physics::QuadratureConfig quadrature;

  void validate(int lanes) const {
    if (!(request_threshold > 0.0 && request_threshold < target_soc && target_soc <= 1.0)) {
      throw ConfigError("env.protocol.request_threshold",
                        "need 0 < request_threshold < target_soc <= 1");
    }
    if (!(reserve_floor >= 0.0 && reserve_floor < 1.0)) {
      throw ConfigError("env.protocol.reserve_floor", "must lie in [0, 1)");
    }
    if (!(detection_radius > 0.0)) throw ConfigError("env.protocol.detection_radius", "must be > 0");
    if (booking_timeout < 1) throw ConfigError("env.protocol.booking_timeout", "must be >= 1");
    if (!(charge_power > 0.0)) throw ConfigError("env.protocol.charge_power", "must be > 0");
    if (!(slot_offset > 0.0)) throw ConfigError("env.protocol.slot_offset", "must be > 0");
    if (!(attach_tolerance > 0.0)) throw ConfigError("env.protocol.attach_tolerance", "must be > 0");
    if (!(max_transfer_offset > 0.0)) {
      throw ConfigError("env.protocol.max_transfer_offset", "must be > 0");
    }
    if (!(mounting_gap > 0.0)) throw ConfigError("env.protocol.mounting_gap", "must be > 0");
    if (!(max_tilt >= 0.0 && max_tilt < 1.5)) throw ConfigError("env.protocol.max_tilt", "must lie in [0, 1.5)");
    if (service_lane < 0 || service_lane >= lanes) {
      throw ConfigError("env.protocol.service_lane", "must be a valid lane index");
    }
    try {
      med_coil.validate("med_coil");
      ev_coil.validate("ev_coil");
      circuit.validate();
      quadrature.validate();
    } catch (const DomainError& e) {
      throw ConfigError("env.protocol", e.what());
    }
  }
};

struct TargetPose {
  int lane;
  double x;  // m, where the attached EV's front bumper belongs
};

// Anchor poses around a MED; nullopt where the adjacent lane does not exist.
inline std::array<std::optional<TargetPose>, 4> formation_targets(const traffic::Vehicle& med,
                                                                   const traffic::RoadNetwork& road,
                                                                   const ProtocolConfig& cfg) {
  std::array<std::optional<TargetPose>, 4> out;
  out[static_cast<int>(Anchor::front)] = TargetPose{med.lane, med.x + cfg.slot_offset};
  out[static_cast<int>(Anchor::rear)] = TargetPose{med.lane, med.x - cfg.slot_offset};
  if (med.lane - 1 >= 0) out[static_cast<int>(Anchor::left)] = TargetPose{med.lane - 1, med.x};
  if (med.lane + 1 < road.lanes) out[static_cast<int>(Anchor::right)] = TargetPose{med.lane + 1, med.x};
  return out;
}

inline bool can_accept_bookings(const MedUnit& med, const ProtocolConfig& cfg) {
  const auto& b = med.dissemination_battery;
  return med.in_service && !b.depleted && b.soc() > cfg.reserve_floor;
}

struct Booking {
  int med_id;
  int slot;
};

// Book the nearest eligible in-service MED. Mutates the chosen slot and the
// EV's guidance; returns nullopt when no MED can take the request.
inline std::optional<Booking> handle_request(traffic::Vehicle& ev, std::span<MedUnit> meds,
                                             const traffic::World& world,
                                             const ProtocolConfig& cfg) {
  if (!ev.is_ev() || !ev.battery) return std::nullopt;
  if (ev.soc() >= cfg.request_threshold) return std::nullopt;
  if (ev.guidance.mode != traffic::Mode::free) return std::nullopt;

  const double ceiling = cfg.circuit.efficiency_ceiling();
  const double ev_need = std::max(0.0, cfg.target_soc * ev.battery->capacity - ev.battery->charge);

  MedUnit* best = nullptr;
  int best_slot = -1;
  double best_dist = 0.0;
  int best_vid = 0;
  for (auto& med : meds) {
    if (!can_accept_bookings(med, cfg)) continue;
    const traffic::Vehicle* mv = world.find(med.vehicle_id);
    if (mv == nullptr) continue;
    const double dist = std::abs(world.road.to_units(mv->x - ev.x));
    if (dist > cfg.detection_radius) continue;
    const auto& b = med.dissemination_battery;
    const double spare = b.charge - cfg.reserve_floor * b.capacity;
    if (spare < ev_need / ceiling) continue;
    const auto poses = formation_targets(*mv, world.road, cfg);
    int slot = -1;
    for (int s : kBookingPreference) {
      if (!med.slots[s].is_booked && poses[s]) {
        slot = s;
        break;
      }
    }
    if (slot < 0) continue;
    if (best == nullptr || dist < best_dist || (dist == best_dist && mv->id < best_vid)) {
      best = &med;
      best_slot = slot;
      best_dist = dist;
      best_vid = mv->id;
    }
  }
  if (best == nullptr) return std::nullopt;

  auto& slot = best->slots[best_slot];
  slot.is_booked = true;
  slot.is_charging = false;
  slot.occupant = ev.id;
  slot.booking_age = 0;
  ev.guidance.pre_charge_desired_speed = ev.desired_speed;
  ev.guidance.mode = traffic::Mode::approach;
  ev.guidance.med_id = best->vehicle_id;
  ev.guidance.slot = best_slot;
  return Booking{best->vehicle_id, best_slot};
}

// Point a booked EV (or the MED itself) at its current target pose.
inline void update_guidance(traffic::World& world, MedUnit& med, const ProtocolConfig& cfg) {
  traffic::Vehicle* mv = world.find(med.vehicle_id);
  if (mv == nullptr) return;
  mv->guidance.mode = traffic::Mode::service;
  mv->guidance.target_lane = cfg.service_lane;
  mv->guidance.target_speed = mv->desired_speed;

  const auto poses = formation_targets(*mv, world.road, cfg);
  for (int s = 0; s < 4; ++s) {
    const auto& slot = med.slots[s];
    if (!slot.is_booked || !slot.occupant) continue;
    traffic::Vehicle* ev = world.find(*slot.occupant);
    if (ev == nullptr || !poses[s]) continue;
    auto& g = ev->guidance;
    g.target_x = poses[s]->x;
    g.target_speed = mv->speed;
    g.target_lane = poses[s]->lane;
    // FRONT/REAR slots can only be entered from the correct side of the MED.
    // Until the EV gets there it passes in a neighbouring lane.
    const auto anchor = static_cast<Anchor>(s);
    const bool wrong_side = (anchor == Anchor::rear && ev->x >= mv->rear()) ||
                            (anchor == Anchor::front && ev->rear() <= mv->x);
    if (!slot.is_charging && wrong_side) {
      if (ev->lane == mv->lane) {
        g.target_lane = mv->lane + 1 < world.road.lanes ? mv->lane + 1 : mv->lane - 1;
      } else {
        g.target_lane = ev->lane;
      }
    }
  }
}

// Attach if the EV sits on its anchor pose; otherwise leave the booking alone.
inline bool attach(traffic::Vehicle& ev, MedUnit& med, int slot_index, const traffic::World& world,
                   const ProtocolConfig& cfg) {
  auto& slot = med.slots.at(slot_index);
  if (!slot.is_booked || slot.occupant != ev.id || slot.is_charging) return false;
  const traffic::Vehicle* mv = world.find(med.vehicle_id);
  if (mv == nullptr) return false;
  const auto pose = formation_targets(*mv, world.road, cfg)[slot_index];
  if (!pose || ev.lane != pose->lane) return false;
  if (std::abs(ev.x - pose->x) > cfg.attach_tolerance) return false;
  slot.is_charging = true;
  slot.booking_age = 0;
  ev.guidance.mode = traffic::Mode::formation;
  ev.guidance.target_lane = pose->lane;
  ev.guidance.target_x = pose->x;
  ev.guidance.target_speed = mv->speed;
  return true;
}

// Clear the slot and hand the EV back to free driving at its pre-charge speed.
// `ev` may be null when the EV has already left the road.
inline void detach(traffic::Vehicle* ev, MedUnit& med, int slot_index) {
  auto& slot = med.slots.at(slot_index);
  if (ev != nullptr && slot.occupant == ev->id) {
    ev->desired_speed = ev->guidance.pre_charge_desired_speed > 0.0
                            ? ev->guidance.pre_charge_desired_speed
                            : ev->base_desired_speed;
    ev->guidance = traffic::Guidance{};
  }
  slot.clear();
}

inline void release_all(traffic::World& world, MedUnit& med) {
  for (int s = 0; s < 4; ++s) {
    if (med.slots[s].occupant) detach(world.find(*med.slots[s].occupant), med, s);
  }
}

// Age pending bookings and release those past the timeout. Returns released EV ids.
inline std::vector<int> expire_bookings(traffic::World& world, MedUnit& med,
                                        const ProtocolConfig& cfg) {
  std::vector<int> released;
  for (int s = 0; s < 4; ++s) {
    auto& slot = med.slots[s];
    if (!slot.is_booked || slot.is_charging) continue;
    if (++slot.booking_age >= cfg.booking_timeout) {
      released.push_back(*slot.occupant);
      detach(world.find(*slot.occupant), med, s);
    }
  }
  return released;
}

struct LedgerRow {
  long step = 0;
  int med_id = -1;
  int ev_id = -1;
  int slot = -1;
  double horizontal_d = 0.0;
  double angular_theta = 0.0;
  double eta = 0.0;
  double expended = 0.0;  // J drawn from the MED pack
  double received = 0.0;  // J credited to the EV, always eta * expended
};

inline physics::MisalignmentState misalignment_for(const traffic::Vehicle& ev, const TargetPose& pose,
                                                   const ProtocolConfig& cfg) {
  physics::MisalignmentState mis;
  mis.horizontal_d = std::abs(ev.x - pose.x);
  mis.lateral_c = cfg.mounting_gap;
  mis.angular_theta =
      std::min(std::atan(std::abs(ev.lateral_drift) / std::max(ev.speed, 1.0)), cfg.max_tilt);
  return mis;
}

inline double efficiency_for(const physics::MisalignmentState& mis, const ProtocolConfig& cfg) {
  try {
    const double m = physics::mutual_inductance(cfg.med_coil, cfg.ev_coil, mis, cfg.quadrature);
    return physics::transfer_efficiency(std::abs(m), cfg.circuit);
  } catch (const SingularGeometryError&) {
    return 0.0;
  }
}

// Transfer energy to every attached EV for one step, then detach EVs that are
// done. If the MED reaches its reserve floor every occupant is released.
inline std::vector<LedgerRow> charging_step(MedUnit& med, traffic::World& world, double dt,
                                            const ProtocolConfig& cfg) {
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  std::vector<LedgerRow> ledger;
  traffic::Vehicle* mv = world.find(med.vehicle_id);
  if (mv == nullptr) return ledger;
  const auto poses = formation_targets(*mv, world.road, cfg);
  auto& pack = med.dissemination_battery;
  const double floor = cfg.reserve_floor * pack.capacity;

  for (int s = 0; s < 4; ++s) {
    auto& slot = med.slots[s];
    if (!slot.is_charging) continue;
    traffic::Vehicle* ev = world.find(*slot.occupant);
    if (ev == nullptr || !ev->battery || !poses[s]) continue;

    LedgerRow row;
    row.step = world.step;
    row.med_id = med.vehicle_id;
    row.ev_id = ev->id;
    row.slot = s;
    const auto mis = misalignment_for(*ev, *poses[s], cfg);
    row.horizontal_d = mis.horizontal_d;
    row.angular_theta = mis.angular_theta;
    if (mis.horizontal_d <= cfg.max_transfer_offset) {
      row.eta = efficiency_for(mis, cfg);
      double expended = std::min(cfg.charge_power * dt, std::max(0.0, pack.charge - floor));
      const double room = ev->battery->capacity - ev->battery->charge;
      if (row.eta * expended > room) expended = room / row.eta;
      if (expended > 0.0) {
        pack.charge = std::max(0.0, pack.charge - expended);
        ev->battery = battery::charge(*ev->battery, expended / dt, row.eta, dt);
        row.expended = expended;
        row.received = row.eta * expended;
      }
    }
    ledger.push_back(row);
  }

  const bool exhausted = pack.charge <= floor * (1.0 + 1e-12);
  for (int s = 0; s < 4; ++s) {
    auto& slot = med.slots[s];
    if (!slot.is_booked) continue;
    traffic::Vehicle* ev = world.find(*slot.occupant);
    if (exhausted) {
      detach(ev, med, s);
    } else if (slot.is_charging && ev != nullptr && ev->soc() >= cfg.target_soc) {
      detach(ev, med, s);
    }
  }
  return ledger;
}

}  // namespace medsim::protocol

#endif  // MEDSIM_PROTOCOL_HPP_
