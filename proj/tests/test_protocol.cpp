#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "medsim/protocol.hpp"
#include "support.hpp"

using namespace medsim;
using namespace medsim::protocol;
using medsim::testing::Scene;
using medsim::testing::rel_err;
using Catch::Approx;

TEST_CASE("no MEDs on the road means no booking") {
  Scene s;
  const int ev = s.add_ev(100.0, 0, 0.2);
  CHECK_FALSE(handle_request(s.vehicle(ev), s.meds, s.world, s.cfg));
  CHECK(s.vehicle(ev).guidance.mode == traffic::Mode::free);
}

TEST_CASE("EVs above the request threshold do not book") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 0, 0.5);
  CHECK_FALSE(handle_request(s.vehicle(ev), s.meds, s.world, s.cfg));
}

TEST_CASE("a MED with every slot booked refuses further requests") {
  Scene s;
  s.add_med(500.0);
  for (int i = 0; i < 4; ++i) {
    const int ev = s.add_ev(400.0 - 20.0 * i, 3, 0.2);
    CHECK(handle_request(s.vehicle(ev), s.meds, s.world, s.cfg));
  }
  CHECK(s.meds[0].occupants() == 4);
  const int late = s.add_ev(300.0, 3, 0.2);
  CHECK_FALSE(handle_request(s.vehicle(late), s.meds, s.world, s.cfg));
}

TEST_CASE("the nearer of two eligible MEDs is booked") {
  Scene s;
  const int far = s.add_med(1300.0);
  const int near = s.add_med(850.0);
  const int ev = s.add_ev(1000.0, 3, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  REQUIRE(b);
  CHECK(b->med_id == near);
  CHECK(b->med_id != far);
  CHECK(s.vehicle(ev).guidance.mode == traffic::Mode::approach);
}

TEST_CASE("MEDs beyond the detection radius or below reserve are skipped") {
  Scene s;
  s.add_med(1000.0 + s.cfg.detection_radius + 1.0);
  s.add_med(1000.0, 1, s.cfg.reserve_floor);
  const int ev = s.add_ev(1000.0 - 20.0, 3, 0.2);
  CHECK_FALSE(handle_request(s.vehicle(ev), s.meds, s.world, s.cfg));
}

TEST_CASE("an EV exactly on its anchor pose attaches") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 1, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  REQUIRE(b);
  s.place_on_anchor(ev);
  CHECK(attach(s.vehicle(ev), s.meds[0], b->slot, s.world, s.cfg));
  CHECK(s.meds[0].slots[b->slot].is_charging);
  CHECK(s.vehicle(ev).guidance.mode == traffic::Mode::formation);
}

TEST_CASE("an EV one lane away from its anchor does not attach") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 1, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  REQUIRE(b);
  s.place_on_anchor(ev);
  s.vehicle(ev).lane += 1;
  CHECK_FALSE(attach(s.vehicle(ev), s.meds[0], b->slot, s.world, s.cfg));
  CHECK_FALSE(s.meds[0].slots[b->slot].is_charging);
  CHECK(s.meds[0].slots[b->slot].is_booked);
}

TEST_CASE("a booking that never attaches is released at the timeout") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(200.0, 3, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  REQUIRE(b);
  for (int t = 1; t < s.cfg.booking_timeout; ++t) {
    CHECK(expire_bookings(s.world, s.meds[0], s.cfg).empty());
    REQUIRE(s.meds[0].slots[b->slot].is_booked);
  }
  CHECK(expire_bookings(s.world, s.meds[0], s.cfg) == std::vector<int>{ev});
  CHECK_FALSE(s.meds[0].slots[b->slot].is_booked);
  CHECK(s.vehicle(ev).guidance.mode == traffic::Mode::free);
}

TEST_CASE("perfect alignment transfers eta_max * P * dt") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 1, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  s.place_on_anchor(ev);
  REQUIRE(attach(s.vehicle(ev), s.meds[0], b->slot, s.world, s.cfg));

  physics::MisalignmentState aligned;
  aligned.lateral_c = s.cfg.mounting_gap;
  const double eta_max = physics::transfer_efficiency(
      physics::mutual_inductance(s.cfg.med_coil, s.cfg.ev_coil, aligned, s.cfg.quadrature), s.cfg.circuit);
  const double before = s.vehicle(ev).battery->charge;
  const auto rows = charging_step(s.meds[0], s.world, 1.0, s.cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].eta == eta_max);
  CHECK(rows[0].expended == s.cfg.charge_power);
  CHECK(rel_err(s.vehicle(ev).battery->charge - before, eta_max * s.cfg.charge_power) < 1e-9);
  CHECK(rows[0].received == rows[0].eta * rows[0].expended);
}

TEST_CASE("an EV that fills up mid-step is credited only up to capacity") {
  Scene s;
  s.cfg.target_soc = 1.0;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 1, 0.2, 200e3);
  REQUIRE(handle_request(s.vehicle(ev), s.meds, s.world, s.cfg));
  s.place_on_anchor(ev);
  REQUIRE(attach(s.vehicle(ev), s.meds[0], s.vehicle(ev).guidance.slot, s.world, s.cfg));
  s.vehicle(ev).battery->charge = 200e3 - 1000.0;
  const double pack_before = s.meds[0].dissemination_battery.charge;
  const auto rows = charging_step(s.meds[0], s.world, 1.0, s.cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].received == Approx(1000.0).epsilon(1e-12));
  CHECK(rows[0].expended == Approx(1000.0 / rows[0].eta).epsilon(1e-12));
  CHECK(rows[0].expended < s.cfg.charge_power);
  CHECK(pack_before - s.meds[0].dissemination_battery.charge == Approx(rows[0].expended).epsilon(1e-9));
  // Reaching the target releases the slot.
  CHECK_FALSE(s.meds[0].slots[rows[0].slot].is_booked);
}

TEST_CASE("reaching the target SoC detaches and frees the slot") {
  Scene s;
  s.add_med(500.0);
  const int ev = s.add_ev(450.0, 1, 0.2);
  const auto b = handle_request(s.vehicle(ev), s.meds, s.world, s.cfg);
  s.place_on_anchor(ev);
  REQUIRE(attach(s.vehicle(ev), s.meds[0], b->slot, s.world, s.cfg));
  s.vehicle(ev).battery->charge = s.cfg.target_soc * s.vehicle(ev).battery->capacity - 1.0;
  charging_step(s.meds[0], s.world, 1.0, s.cfg);
  CHECK_FALSE(s.meds[0].slots[b->slot].is_booked);
  CHECK_FALSE(s.meds[0].slots[b->slot].is_charging);
  CHECK(s.vehicle(ev).guidance.mode == traffic::Mode::free);
  CHECK(s.vehicle(ev).desired_speed == 30.0);
}

TEST_CASE("a MED hitting its reserve floor releases all three charging EVs at once") {
  Scene s;
  s.add_med(500.0, 1, s.cfg.reserve_floor + 1e-4);
  std::vector<int> evs{s.add_ev(480.0, 0, 0.2), s.add_ev(470.0, 2, 0.2), s.add_ev(460.0, 1, 0.2)};
  s.cfg.reserve_floor = 0.0;  // admit the bookings
  for (int id : evs) {
    REQUIRE(handle_request(s.vehicle(id), s.meds, s.world, s.cfg));
    s.place_on_anchor(id);
    REQUIRE(attach(s.vehicle(id), s.meds[0], s.vehicle(id).guidance.slot, s.world, s.cfg));
  }
  s.cfg.reserve_floor = 0.1;
  s.meds[0].dissemination_battery.charge = s.cfg.reserve_floor * s.meds[0].dissemination_battery.capacity + 5e3;
  const auto rows = charging_step(s.meds[0], s.world, 1.0, s.cfg);
  CHECK(rows.size() == 3);
  CHECK(s.meds[0].occupants() == 0);
  for (int id : evs) CHECK(s.vehicle(id).guidance.mode == traffic::Mode::free);
}

TEST_CASE("a freed slot can be booked by another EV on the next step") {
  Scene s;
  s.add_med(500.0);
  const int first = s.add_ev(450.0, 1, 0.2);
  const auto b = handle_request(s.vehicle(first), s.meds, s.world, s.cfg);
  s.place_on_anchor(first);
  REQUIRE(attach(s.vehicle(first), s.meds[0], b->slot, s.world, s.cfg));
  s.vehicle(first).battery->charge = s.cfg.target_soc * s.vehicle(first).battery->capacity;
  charging_step(s.meds[0], s.world, 1.0, s.cfg);
  REQUIRE_FALSE(s.meds[0].slots[b->slot].is_booked);

  const int second = s.add_ev(300.0, 1, 0.1);
  const auto b2 = handle_request(s.vehicle(second), s.meds, s.world, s.cfg);
  REQUIRE(b2);
  CHECK(b2->slot == b->slot);
  CHECK(s.meds[0].slots[b->slot].occupant == second);
}

TEST_CASE("a MED in lane 1 of 4 anchors on lanes 0, 1 and 2") {
  Scene s;
  const int med = s.add_med(500.0, 1);
  const auto t = formation_targets(s.vehicle(med), s.world.road, s.cfg);
  std::set<int> lanes;
  for (const auto& p : t) {
    REQUIRE(p);
    lanes.insert(p->lane);
  }
  CHECK(lanes == std::set<int>{0, 1, 2});
  CHECK(t[0]->x == 500.0 + s.cfg.slot_offset);
  CHECK(t[1]->x == 500.0 - s.cfg.slot_offset);
  CHECK(t[2]->x == 500.0);
  CHECK(t[3]->x == 500.0);
}

TEST_CASE("a MED in lane 0 has no left slot") {
  Scene s;
  const int med = s.add_med(500.0, 0);
  const auto t = formation_targets(s.vehicle(med), s.world.road, s.cfg);
  CHECK_FALSE(t[static_cast<int>(Anchor::left)]);
  CHECK(t[static_cast<int>(Anchor::right)]->lane == 1);
}

TEST_CASE("randomised booking scenarios keep the slot invariants") {
  Rng rng(314);
  for (int scenario = 0; scenario < 2000; ++scenario) {
    Scene s;
    s.cfg.booking_timeout = 1 + rng.uniform_int(6);
    const int n_meds = 1 + rng.uniform_int(3);
    for (int m = 0; m < n_meds; ++m) s.add_med(rng.uniform(200.0, 3500.0), 1 + rng.uniform_int(2), rng.uniform(0.05, 1.0));
    const int n_evs = 1 + rng.uniform_int(12);
    for (int e = 0; e < n_evs; ++e) s.add_ev(rng.uniform(50.0, 3900.0), rng.uniform_int(4), rng.uniform(0.05, 0.6));

    std::map<int, int> waiting;  // ev id -> rounds since booking without attach
    for (int round = 0; round < 8; ++round) {
      for (auto& v : s.world.vehicles) {
        if (v.is_ev() && v.guidance.mode == traffic::Mode::free) handle_request(v, s.meds, s.world, s.cfg);
      }
      for (auto& med : s.meds) {
        update_guidance(s.world, med, s.cfg);
        for (int slot = 0; slot < 4; ++slot) {
          if (!med.slots[slot].is_booked || med.slots[slot].is_charging) continue;
          if (rng.bernoulli(0.3)) s.place_on_anchor(*med.slots[slot].occupant);
          attach(s.vehicle(*med.slots[slot].occupant), med, slot, s.world, s.cfg);
        }
        expire_bookings(s.world, med, s.cfg);
        charging_step(med, s.world, 1.0, s.cfg);
      }

      std::set<int> occupants;
      for (const auto& med : s.meds) {
        for (const auto& slot : med.slots) {
          if (slot.is_charging) REQUIRE(slot.is_booked);
          if (slot.is_booked) {
            REQUIRE(slot.occupant);
            REQUIRE(occupants.insert(*slot.occupant).second);  // no double booking
            REQUIRE(slot.booking_age < s.cfg.booking_timeout);
            const auto& ev = *s.world.find(*slot.occupant);
            REQUIRE(ev.guidance.med_id == med.vehicle_id);
          } else {
            REQUIRE_FALSE(slot.occupant);
          }
        }
      }
      for (const auto& v : s.world.vehicles) {
        if (!v.is_ev()) continue;
        const bool booked = v.guidance.mode != traffic::Mode::free;
        REQUIRE(booked == (occupants.count(v.id) == 1));
        if (booked && v.guidance.mode == traffic::Mode::approach) {
          REQUIRE(++waiting[v.id] <= s.cfg.booking_timeout);
        } else {
          waiting.erase(v.id);
        }
      }
    }
  }
}
