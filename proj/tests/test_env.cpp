#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "medsim/env.hpp"
#include "support.hpp"

using namespace medsim;
using namespace medsim::env;
using Catch::Approx;

namespace {

EnvConfig quiet_config() {
  EnvConfig cfg;
  cfg.spawn.rates = {0.0, 0.0, 0.0, 0.0};
  return cfg;
}

bool all_zero(const Observation& o) {
  return std::all_of(o.begin(), o.end(), [](double x) { return x == 0.0; });
}

}  // namespace

TEST_CASE("resets with the same seed give identical observations") {
  ChargingEnv a{EnvConfig{}}, b{EnvConfig{}};
  CHECK(a.reset(5) == b.reset(5));
  CHECK(a.reset(5) != a.reset(6));
}

TEST_CASE("without traffic the observation is all padding") {
  ChargingEnv env{quiet_config()};
  const auto obs = env.reset(1);
  CHECK(all_zero(obs));
}

TEST_CASE("observation length is 14 per MED plus 8 per EV") {
  for (auto [meds, evs] : {std::pair{15, 50}, std::pair{3, 7}, std::pair{1, 1}}) {
    EnvConfig cfg;
    cfg.max_meds = meds;
    cfg.max_evs = evs;
    cfg.horizon = 30;
    ChargingEnv env{cfg};
    CHECK(env.reset(0).size() == static_cast<std::size_t>(14 * meds + 8 * evs));
    Rng rng(3);
    while (!env.done()) CHECK(env.step(rng.uniform_int(kNumActions)).observation.size() == env.observation_size());
  }
}

TEST_CASE("always choosing no action never puts a MED on the road") {
  EnvConfig cfg;
  cfg.horizon = 300;
  ChargingEnv env{cfg};
  env.reset(2);
  while (!env.done()) {
    const auto r = env.step(0);
    CHECK(r.info.meds_deployed == 0);
    CHECK(r.info.dispatch == DispatchOutcome::none);
  }
  CHECK(env.summary().meds_dispatched == 0);
}

TEST_CASE("a dispatch during cooldown is rejected and changes nothing") {
  EnvConfig cfg;
  cfg.horizon = 100;
  ChargingEnv a{cfg}, b{cfg};
  a.reset(9);
  b.reset(9);
  REQUIRE(a.step(1).info.dispatch == DispatchOutcome::accepted);
  REQUIRE(b.step(1).info.dispatch == DispatchOutcome::accepted);
  for (int t = 1; t < cfg.cooldown; ++t) {
    const auto ra = a.step(1 + t % 4);
    const auto rb = b.step(0);
    CHECK(ra.info.dispatch == DispatchOutcome::cooldown);
    CHECK_FALSE(ra.info.decision_point);
    CHECK(ra.observation == rb.observation);
    CHECK(ra.reward == rb.reward);
  }
  CHECK(a.step(1).info.decision_point);
}

TEST_CASE("action 2 places a MED at the second ramp") {
  ChargingEnv env{quiet_config()};
  env.reset(0);
  REQUIRE(env.dispatch(1) == DispatchOutcome::accepted);
  const auto& med = env.world().vehicles.back();
  CHECK(med.is_med());
  CHECK(med.x == 1200.0);
  CHECK(med.lane == env.config().road.lanes - 1);

  ChargingEnv stepped{quiet_config()};
  stepped.reset(0);
  const auto r = stepped.step(2);
  CHECK(r.info.dispatch == DispatchOutcome::accepted);
  CHECK(r.info.meds_deployed == 1);
  CHECK(stepped.pool_available() == stepped.config().max_meds - 1);
}

TEST_CASE("an emptied pool rejects dispatches") {
  EnvConfig cfg = quiet_config();
  cfg.max_meds = 1;
  cfg.cooldown = 0;
  ChargingEnv env{cfg};
  env.reset(0);
  CHECK(env.step(1).info.dispatch == DispatchOutcome::accepted);
  const auto r = env.step(3);
  CHECK(r.info.dispatch == DispatchOutcome::pool_empty);
  CHECK_FALSE(r.info.decision_point);
}

TEST_CASE("the empty world observes as zeros") {
  traffic::World w;
  Observation o;
  CHECK_FALSE(build_observation(w, {}, EnvConfig{}, o));
  CHECK(all_zero(o));
}

TEST_CASE("one idle MED fills exactly one 14-block") {
  testing::Scene s;
  s.add_med(2000.0, 1);
  EnvConfig cfg;
  Observation o;
  build_observation(s.world, s.meds, cfg, o);
  int nonzero_blocks = 0;
  for (int b = 0; b < cfg.max_meds; ++b) {
    if (std::any_of(o.begin() + 14 * b, o.begin() + 14 * (b + 1), [](double x) { return x != 0.0; })) ++nonzero_blocks;
  }
  CHECK(nonzero_blocks == 1);
  CHECK(o[0] == Approx(0.5));
  CHECK(std::all_of(o.begin() + 14 * cfg.max_meds, o.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("a charging EV points at its MED's block") {
  testing::Scene s;
  s.add_med(800.0, 1);
  const int med = s.add_med(2000.0, 1);
  const int ev = s.add_ev(1990.0, 1, 0.2);
  REQUIRE(protocol::handle_request(s.vehicle(ev), s.meds, s.world, s.cfg)->med_id == med);
  s.place_on_anchor(ev);
  REQUIRE(protocol::attach(s.vehicle(ev), s.meds[1], s.vehicle(ev).guidance.slot, s.world, s.cfg));
  EnvConfig cfg;
  Observation o;
  build_observation(s.world, s.meds, cfg, o);
  const double* block = o.data() + 14 * cfg.max_meds;
  CHECK(block[6] == 1.0);
  CHECK(block[7] == Approx(2.0 / cfg.max_meds));
  CHECK(o[14 + 10 + s.vehicle(ev).guidance.slot] == 1.0);
}

TEST_CASE("reward with no EVs and no depletions is zero") {
  CHECK(compute_reward(RewardInputs{}, RewardWeights{}, 35.0, 1.0).total == 0.0);
}

TEST_CASE("reward substitution example gives -7.9") {
  RewardInputs in;
  in.depletions = 1;
  in.mean_soc = 0.5;
  in.moving_evs = 10;
  in.displacement_m = 0.8 * 35.0 * 10;
  in.mean_speed = 0.8 * 35.0;
  const auto r = compute_reward(in, RewardWeights{}, 35.0, 1.0);
  CHECK(r.total == Approx(-7.9).epsilon(1e-14));
  CHECK(r.depletion == -10.0);
}

TEST_CASE("doubling the SoC weight doubles only the SoC term") {
  RewardInputs in{2, 0.4, 300.0, 12, 25.0};
  RewardWeights w;
  const auto base = compute_reward(in, w, 35.0, 1.0);
  w.soc *= 2.0;
  const auto twice = compute_reward(in, w, 35.0, 1.0);
  CHECK(twice.soc == 2.0 * base.soc);
  CHECK(twice.depletion == base.depletion);
  CHECK(twice.distance == base.distance);
  CHECK(twice.speed == base.speed);
}

TEST_CASE("the step lifecycle is enforced") {
  EnvConfig cfg;
  cfg.horizon = 3;
  ChargingEnv env{cfg};
  env.reset(0);
  CHECK_THROWS_AS(env.step(5), InputError);
  CHECK_THROWS_AS(env.step(-1), InputError);
  env.step(0);
  env.step(0);
  CHECK(env.step(0).done);
  CHECK_THROWS_AS(env.step(0), LifecycleError);
  env.reset(1);
  CHECK_NOTHROW(env.step(0));
}

TEST_CASE("bad configurations are rejected") {
  EnvConfig cfg;
  cfg.road.lanes = 2;
  CHECK_THROWS_AS(ChargingEnv{cfg}, ConfigError);
  cfg = EnvConfig{};
  cfg.v_max = 10.0;
  CHECK_THROWS_AS(ChargingEnv{cfg}, ConfigError);
}

TEST_CASE("same seed and action script give identical step logs") {
  EnvConfig cfg;
  cfg.horizon = 400;
  auto run = [&] {
    ChargingEnv env{cfg};
    env.reset(17);
    Rng script(5);
    std::string log;
    for (long t = 0; !env.done(); ++t) log += step_csv_row(t, env.step(script.uniform_int(kNumActions))) + "\n";
    return log;
  };
  CHECK(run() == run());
}

TEST_CASE("charging energy is conserved through a dispatched episode") {
  EnvConfig cfg;
  cfg.horizon = 600;
  ChargingEnv env{cfg};
  env.reset(4);
  double expended = 0.0, received = 0.0;
  long t = 0;
  while (!env.done()) {
    const auto r = env.step(t++ % 45 == 0 ? 1 : 0);
    for (const auto& row : r.info.ledger) {
      CHECK(row.received == row.eta * row.expended);
      expended += row.expended;
      received += row.received;
    }
  }
  const auto s = env.summary();
  CHECK(expended > 0.0);
  CHECK(s.energy_expended == Approx(expended).epsilon(1e-12));
  CHECK(s.energy_received == Approx(received).epsilon(1e-12));
  CHECK(s.meds_dispatched > 0);
}
