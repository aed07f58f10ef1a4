#include <catch2/catch_amalgamated.hpp>

#include "medsim/battery.hpp"
#include "medsim/rng.hpp"
#include "support.hpp"

using namespace medsim;
using namespace medsim::battery;
using medsim::testing::rel_err;

TEST_CASE("standing still draws no power") {
  CHECK(tractive_power(0.0, 0.0, 1.0, VehicleBodyParams{}, AmbientParams{}) == 0.0);
}

TEST_CASE("cruising at 20 m/s draws 6111 W") {
  CHECK(rel_err(tractive_power(20.0, 20.0, 1.0, VehicleBodyParams{}, AmbientParams{}), 6111.0) < 1e-12);
}

TEST_CASE("hard braking is clamped to zero") {
  VehicleBodyParams body;
  body.rotate_compensation = 1.0;
  const double raw = tractive_power_signed(20.0, 10.0, 1.0, body, AmbientParams{});
  CHECK(rel_err(raw, -221456.25) < 1e-12);
  CHECK(tractive_power(20.0, 10.0, 1.0, body, AmbientParams{}) == 0.0);
}

TEST_CASE("acceleration on a slope matches hand substitution") {
  VehicleBodyParams body{1800.0, 0.012, 0.28, 2.4, 1.1};
  AmbientParams amb;
  amb.slope = 0.03;
  CHECK(rel_err(tractive_power(10.0, 14.0, 2.0, body, amb), 57115.408110908020534) < 1e-12);

  VehicleBodyParams light;
  light.rotate_compensation = 0.05;
  CHECK(rel_err(tractive_power(15.0, 16.0, 0.5, light, AmbientParams{}), 6080.4795) < 1e-12);
}

TEST_CASE("tractive power rejects bad arguments") {
  CHECK_THROWS_AS(tractive_power(1.0, 1.0, 0.0, VehicleBodyParams{}, AmbientParams{}), DomainError);
  CHECK_THROWS_AS(tractive_power(-1.0, 1.0, 1.0, VehicleBodyParams{}, AmbientParams{}), DomainError);
}

TEST_CASE("consume subtracts power times duration") {
  BatteryState b{20000.0, 10000.0, false};
  const auto after = consume(b, 6111.0, 1.0);
  CHECK(after.charge == 3889.0);
  CHECK_FALSE(after.depleted);
}

TEST_CASE("consuming zero power leaves the state unchanged") {
  BatteryState b{20000.0, 1234.5, false};
  const auto after = consume(b, 0.0, 1.0);
  CHECK(after.charge == b.charge);
  CHECK(after.depleted == b.depleted);
}

TEST_CASE("consume saturates at empty and flags depletion") {
  const auto after = consume(BatteryState{20000.0, 100.0, false}, 6111.0, 1.0);
  CHECK(after.charge == 0.0);
  CHECK(after.depleted);
}

TEST_CASE("charging with zero efficiency changes nothing") {
  BatteryState b{1e5, 5e4, false};
  CHECK(charge(b, 50e3, 0.0, 1.0).charge == b.charge);
}

TEST_CASE("charge saturates at capacity") {
  const auto after = charge(BatteryState{100e3, 99.9e3, false}, 500.0, 0.5, 2.0);
  CHECK(after.charge == 100e3);
}

TEST_CASE("charge credits eta times power times duration") {
  CHECK(charge(BatteryState{1e6, 0.0, false}, 50e3, 0.9, 1.0).charge == 45e3);
  CHECK_THROWS_AS(charge(BatteryState{1e6, 0.0, false}, 1.0, 1.0, 1.0), DomainError);
}

TEST_CASE("random consume/charge sequences stay within [0, capacity]") {
  Rng rng(42);
  for (int seq = 0; seq < 2000; ++seq) {
    const double cap = rng.uniform(1e3, 1e7);
    BatteryState b = BatteryState::from_soc(cap, rng.uniform());
    bool was_depleted = false;
    for (int i = 0; i < 50; ++i) {
      const double before = b.charge;
      const double dt = rng.uniform(0.1, 2.0);
      if (rng.bernoulli(0.5)) {
        const double p = rng.uniform(0.0, cap / 5.0);
        b = consume(b, p, dt);
        if (before - p * dt > 0.0) REQUIRE(b.charge == before - p * dt);
        else REQUIRE(b.charge == 0.0);
      } else {
        const double p = rng.uniform(0.0, cap / 5.0);
        const double eta = rng.uniform(0.0, 0.99);
        b = charge(b, p, eta, dt);
        REQUIRE(b.charge == std::min(cap, before + eta * p * dt));
      }
      REQUIRE(b.charge >= 0.0);
      REQUIRE(b.charge <= cap);
      if (b.charge == 0.0 && before > 0.0) REQUIRE(b.depleted);
      if (was_depleted) REQUIRE(b.depleted);
      was_depleted = b.depleted;
    }
  }
}
