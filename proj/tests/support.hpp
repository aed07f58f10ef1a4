#ifndef MEDSIM_TESTS_SUPPORT_HPP_
#define MEDSIM_TESTS_SUPPORT_HPP_

// Scripted worlds for protocol and environment tests.

#include <cmath>
#include <vector>

#include "medsim/env.hpp"
#include "medsim/physics.hpp"
#include "medsim/protocol.hpp"
#include "medsim/traffic.hpp"

namespace medsim::testing {

struct Scene {
  traffic::World world;
  std::vector<protocol::MedUnit> meds;
  protocol::ProtocolConfig cfg;

  Scene() { world.road = traffic::RoadNetwork{}; }

  int add_med(double x, int lane = 1, double soc = 1.0, double capacity = 60.0e6) {
    traffic::Vehicle v;
    v.kind = traffic::Kind::med;
    v.x = x;
    v.lane = lane;
    v.length = 8.0;
    v.speed = 22.0;
    v.base_desired_speed = v.desired_speed = 22.0;
    const int id = world.add(v);
    protocol::MedUnit unit;
    unit.vehicle_id = id;
    unit.in_service = true;
    unit.dissemination_battery = battery::BatteryState::from_soc(capacity, soc);
    meds.push_back(unit);
    return id;
  }

  int add_ev(double x, int lane, double soc, double capacity = 3.0e6) {
    traffic::Vehicle v;
    v.kind = traffic::Kind::ev;
    v.x = x;
    v.lane = lane;
    v.speed = 22.0;
    v.base_desired_speed = v.desired_speed = 30.0;
    v.battery = battery::BatteryState::from_soc(capacity, soc);
    return world.add(v);
  }

  traffic::Vehicle& vehicle(int id) { return *world.find(id); }

  protocol::MedUnit& med_unit(int vehicle_id) {
    for (auto& m : meds) {
      if (m.vehicle_id == vehicle_id) return m;
    }
    throw std::out_of_range("no such MED");
  }

  // Put the EV exactly on its booked anchor pose.
  void place_on_anchor(int ev_id) {
    auto& ev = vehicle(ev_id);
    const auto& med = vehicle(ev.guidance.med_id);
    const auto pose = protocol::formation_targets(med, world.road, cfg)[ev.guidance.slot];
    ev.lane = pose->lane;
    ev.x = pose->x;
    ev.speed = med.speed;
    ev.lateral_drift = 0.0;
  }
};

// Classical coaxial-loop formula evaluated with the standard library's
// elliptic integrals (parameterised by modulus k).
inline double coaxial_oracle(double r1, double r2, double c, int n1 = 1, int n2 = 1) {
  const double k2 = 4.0 * r1 * r2 / ((r1 + r2) * (r1 + r2) + c * c);
  const double k = std::sqrt(k2);
  return physics::kFreeSpacePermeability * n1 * n2 * std::sqrt(r1 * r2) *
         ((2.0 / k - k) * std::comp_ellint_1(k) - (2.0 / k) * std::comp_ellint_2(k));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace medsim::testing

#endif  // MEDSIM_TESTS_SUPPORT_HPP_
