#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "medsim/config.hpp"
#include "support.hpp"

using namespace medsim;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("medsim_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = std::string(MEDSIM_CLI) + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::string* header) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

const std::string kFast = "--override horizon=120 --override warmup_steps=40";

}  // namespace

TEST_CASE("defaults survive a commented dump and reload") {
  const config::RunConfig cfg;
  const std::string text = config::dump_commented(cfg);
  CHECK(text.find("// ") != std::string::npos);
  const auto back = config::from_json_text(text);
  CHECK(config::to_json(back) == config::to_json(cfg));
}

TEST_CASE("every schema path is unique and maps to a JSON leaf") {
  std::set<std::string> paths;
  for (const auto& f : config::schema()) {
    CHECK(paths.insert(f.path).second);
    CHECK_FALSE(f.doc.empty());
  }
  CHECK(paths.count("env.road.ramp_positions") == 1);
  CHECK(paths.count("ppo.total_steps") == 1);
}

TEST_CASE("unknown keys are rejected with their path") {
  try {
    config::from_json_text(R"({"env": {"road": {"lenght": 10}}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "env.road.lenght");
  }
  CHECK_THROWS_AS(config::from_json_text(R"({"extra": 1})"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"env": 3})"), ConfigError);
}

TEST_CASE("values are type checked") {
  CHECK_THROWS_AS(config::from_json_text(R"({"env": {"horizon": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"ppo": {"anneal_lr": 1}})"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"format_version": 2})"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text("{ not json"), ConfigError);
  const auto cfg = config::from_json_text(R"({"env": {"dt": 2}, "seed": 5})");
  CHECK(cfg.env.dt == 2.0);
  CHECK(cfg.env.seed == 5);
}

TEST_CASE("overrides accept dotted paths and unique leaf names") {
  config::RunConfig cfg;
  config::apply_override(cfg, "total_steps=5000");
  config::apply_override(cfg, "env.protocol.ev_coil.radius=0.25");
  config::apply_override(cfg, "ramp_positions=[100, 2000]");
  config::apply_override(cfg, "output_dir=runs/x");
  CHECK(cfg.ppo.total_steps == 5000);
  CHECK(cfg.env.protocol.ev_coil.radius == 0.25);
  CHECK(cfg.env.road.ramp_positions == std::vector<double>{100.0, 2000.0});
  CHECK(cfg.output_dir == "runs/x");
  CHECK_THROWS_AS(config::apply_override(cfg, "radius=0.2"), ConfigError);
  CHECK_THROWS_AS(config::apply_override(cfg, "no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(config::apply_override(cfg, "horizon"), ConfigError);
}

TEST_CASE("dump-config shows the road layout and pool size") {
  const auto dir = scratch("dump");
  const auto r = cli("dump-config", dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"ramp_positions\": [100.0,1200.0,2100.0,3200.0]") != std::string::npos);
  CHECK(r.out.find("\"max_meds\": 15") != std::string::npos);
  const auto back = config::from_json_text(r.out);
  CHECK(config::to_json(back) == config::to_json(config::RunConfig{}));
}

TEST_CASE("config errors exit with code 2") {
  const auto dir = scratch("errors");
  CHECK(cli("train --config /nonexistent/run.json", dir).code == 2);
  CHECK(slurp(dir / "stderr.txt").find("cannot read config file") != std::string::npos);
  CHECK(cli("dump-config --override bogus=1", dir).code == 2);
  CHECK(cli("eval", dir).code == 2);
  CHECK(cli("eval --baseline greedy", dir).code == 2);
  CHECK(cli("no-such-command", dir).code == 2);
}

TEST_CASE("a displacement sweep has falling efficiency and a coaxial first row") {
  const auto dir = scratch("sweep");
  const auto r = cli("inspect-physics --axis d --min 0 --max 0.5 --steps 26", dir);
  REQUIRE(r.code == 0);
  std::string header;
  const auto rows = parse_csv(r.out, &header);
  CHECK(header == "d,M,eta");
  REQUIRE(rows.size() == 26);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][2] < rows[i - 1][2]);
  const physics::CoilSpec coil;
  const double oracle = medsim::testing::coaxial_oracle(coil.radius, coil.radius, 0.25, coil.turns, coil.turns);
  CHECK(rows[0][1] == Approx(oracle).epsilon(1e-9));
}

TEST_CASE("a zero-length sweep prints only the header") {
  const auto dir = scratch("sweep0");
  const auto r = cli("inspect-physics --axis theta --steps 0", dir);
  REQUIRE(r.code == 0);
  CHECK(r.out == "theta,M,eta\n");
  CHECK(cli("inspect-physics --axis theta --max 2", dir).code == 2);
}

TEST_CASE("the no-action baseline dispatches nothing") {
  const auto dir = scratch("noop");
  const auto r = cli("eval --baseline noop --episodes 2 --out " + dir.string() + " " + kFast, dir);
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["meds_dispatched"] == 0);
  CHECK(summary["format_version"] == 1);
  for (const char* key : {"mean_reward", "std_reward", "depletion_proportion", "avg_range_units", "avg_soc"}) {
    CHECK(summary.contains(key));
  }
  std::istringstream steps(slurp(dir / "steps" / "episode_001.csv"));
  std::string line;
  std::getline(steps, line);
  CHECK(line == env::kStepCsvHeader);
  int rows = 0;
  while (std::getline(steps, line)) ++rows;
  CHECK(rows == 120);
  CHECK(fs::exists(dir / "episodes.csv"));
  CHECK(fs::exists(dir / "resolved_config.json"));
}

TEST_CASE("random-baseline evaluation is reproducible, also from the resolved config") {
  const auto a = scratch("rand_a"), b = scratch("rand_b"), c = scratch("rand_c");
  REQUIRE(cli("eval --baseline random --seed 3 --episodes 2 --out " + a.string() + " " + kFast, a).code == 0);
  REQUIRE(cli("eval --baseline random --seed 3 --episodes 2 --out " + b.string() + " " + kFast, b).code == 0);
  CHECK(slurp(a / "episodes.csv") == slurp(b / "episodes.csv"));
  CHECK(slurp(a / "steps" / "episode_001.csv") == slurp(b / "steps" / "episode_001.csv"));

  REQUIRE(cli("eval --baseline random --episodes 2 --config " + (a / "resolved_config.json").string() + " --out " +
                  c.string(),
              c).code == 0);
  CHECK(slurp(a / "episodes.csv") == slurp(c / "episodes.csv"));
  CHECK(slurp(a / "summary.json") == slurp(c / "summary.json"));
}

TEST_CASE("train honours overrides and is reproducible") {
  const auto a = scratch("train_a"), b = scratch("train_b");
  const std::string args = "train --seed 7 --override total_steps=1500 --override rollout_length=500 "
                           "--override eval_interval=500 --override eval_episodes=1 --override epochs=2 " +
                           kFast;
  REQUIRE(cli(args + " --out " + a.string(), a).code == 0);
  REQUIRE(cli(args + " --out " + b.string(), b).code == 0);
  const std::string curve = slurp(a / "training_curve.csv");
  CHECK(curve == slurp(b / "training_curve.csv"));
  std::string header;
  const auto rows = parse_csv(curve, &header);
  CHECK(header.rfind("env_steps,mean_episode_reward,objective,entropy", 0) == 0);
  REQUIRE(rows.size() == 3);
  CHECK(rows.back()[0] == 1500.0);
  CHECK(fs::exists(a / "final.json"));
  CHECK(slurp(a / "final.json") == slurp(b / "final.json"));

  // A trained checkpoint evaluates through the CLI.
  const auto e = scratch("train_eval");
  CHECK(cli("eval --checkpoint " + (a / "final.json").string() + " --episodes 1 --out " + e.string() + " " + kFast, e)
            .code == 0);
  // Mismatched observation layout is a configuration error.
  CHECK(cli("eval --checkpoint " + (a / "final.json").string() + " --override max_evs=3 --out " + e.string(), e).code ==
        2);
}
