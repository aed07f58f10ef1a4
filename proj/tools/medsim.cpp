// medsim: train, evaluate, inspect coil physics, dump the config schema.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "medsim/agent/checkpoint.hpp"
#include "medsim/agent/evaluate.hpp"
#include "medsim/agent/train.hpp"
#include "medsim/config.hpp"
#include "medsim/physics.hpp"

namespace fs = std::filesystem;
using namespace medsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
  int workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON run configuration (comments allowed)");
  cmd->add_option("--seed", a.seed, "Master seed; overrides the config's seed");
  cmd->add_option("--override", a.overrides, "key=value, dotted path or unique leaf name (repeatable)");
  cmd->add_option("--out", a.out, "Output directory; overrides the config's output_dir");
  cmd->add_option("--workers", a.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);
}

config::RunConfig resolve(const CommonArgs& a) {
  config::RunConfig cfg = a.config_path.empty() ? config::RunConfig{} : config::load(a.config_path);
  for (const auto& o : a.overrides) config::apply_override(cfg, o);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) cfg.output_dir = a.out;
  config::sync(cfg);
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config", e.what());
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

fs::path prepare_run_dir(const config::RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "resolved_config.json", config::to_json(cfg).dump(2) + "\n");
  return dir;
}

int cmd_train(const CommonArgs& a) {
  const config::RunConfig cfg = resolve(a);
  const fs::path dir = prepare_run_dir(cfg);
  spdlog::info("training for {} env steps, seed {}, {} worker(s), output {}", cfg.ppo.total_steps, cfg.seed,
               a.workers, dir.string());
  agent::TrainOptions opts;
  opts.workers = a.workers;
  opts.output_dir = dir;
  opts.log = [](const std::string& m) { spdlog::info("{}", m); };
  const agent::TrainResult r = agent::train(cfg.env, cfg.ppo, cfg.seed, opts);
  spdlog::info("wrote {} curve points and {}", r.curve.size(), (dir / "final.json").string());
  return kExitOk;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, const std::string& baseline, int episodes) {
  const config::RunConfig cfg = resolve(a);
  if (checkpoint.empty() == baseline.empty()) {
    throw ConfigError("eval", "give exactly one of --checkpoint or --baseline");
  }
  if (episodes < 1) throw ConfigError("--episodes", "must be >= 1");

  agent::ActionFn policy;
  std::string policy_name;
  if (!checkpoint.empty()) {
    auto params = std::make_shared<const agent::PolicyParams>(agent::load_checkpoint(checkpoint).params);
    if (params->arch.input_dim != static_cast<int>(cfg.env.observation_size())) {
      throw ConfigError("--checkpoint", "network input size " + std::to_string(params->arch.input_dim) +
                                            " does not match the configured observation size " +
                                            std::to_string(cfg.env.observation_size()));
    }
    policy = agent::greedy_policy(params);
    policy_name = "checkpoint:" + checkpoint;
  } else if (baseline == "random") {
    policy = agent::random_policy(agent::mix_seed(cfg.seed, 7));
    policy_name = "random";
  } else if (baseline == "noop") {
    policy = agent::noop_policy();
    policy_name = "noop";
  } else {
    throw ConfigError("--baseline", "expected random or noop, got '" + baseline + "'");
  }

  const fs::path dir = prepare_run_dir(cfg);
  fs::create_directories(dir / "steps");
  std::ofstream step_csv;
  int open_episode = -1;
  auto hook = [&](int episode, long step, const env::StepResult& r) {
    if (episode != open_episode) {
      char name[64];
      std::snprintf(name, sizeof(name), "episode_%03d.csv", episode);
      step_csv.close();
      step_csv.open(dir / "steps" / name);
      if (!step_csv) throw std::runtime_error("cannot write step log for episode " + std::to_string(episode));
      step_csv << env::kStepCsvHeader << '\n';
      open_episode = episode;
    }
    step_csv << env::step_csv_row(step, r) << '\n';
  };
  const agent::EvalStats s = agent::evaluate(cfg.env, policy, episodes, cfg.seed, hook);
  step_csv.close();

  std::ofstream ep(dir / "episodes.csv");
  ep << "episode,seed,total_reward,evs_seen,evs_depleted,depletion_proportion,avg_range_units,avg_soc,"
        "meds_dispatched,energy_expended,energy_received\n";
  for (std::size_t i = 0; i < s.episodes.size(); ++i) {
    const auto& e = s.episodes[i];
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%zu,%llu,%.17g,%d,%d,%.17g,%.17g,%.17g,%d,%.17g,%.17g", i,
                  static_cast<unsigned long long>(s.seeds[i]), e.total_reward, e.evs_seen, e.evs_depleted,
                  e.depletion_proportion, e.avg_range_units, e.avg_soc, e.meds_dispatched, e.energy_expended,
                  e.energy_received);
    ep << buf << '\n';
  }
  if (!ep) throw std::runtime_error("cannot write episodes.csv");

  nlohmann::json summary = {{"format_version", config::kFormatVersion},
                            {"policy", policy_name},
                            {"episodes", episodes},
                            {"seeds", s.seeds},
                            {"mean_reward", s.mean_reward},
                            {"std_reward", s.std_reward},
                            {"depletion_proportion", s.depletion_proportion},
                            {"avg_range_units", s.avg_range_units},
                            {"avg_soc", s.avg_soc},
                            {"meds_dispatched", s.meds_dispatched}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_inspect_physics(const CommonArgs& a, const std::string& axis, double lo, double hi, int steps) {
  const config::RunConfig cfg = resolve(a);
  if (axis != "d" && axis != "theta" && axis != "c") throw ConfigError("--axis", "expected d, theta or c");
  if (steps < 0) throw ConfigError("--steps", "must be >= 0");
  if (!(std::isfinite(lo) && std::isfinite(hi)) || hi < lo) throw ConfigError("--min/--max", "need finite min <= max");
  if (axis == "theta" && (lo < 0.0 || hi >= std::numbers::pi / 2)) {
    throw ConfigError("--min/--max", "theta must lie in [0, pi/2)");
  }
  if (axis == "c" && !(lo > 0.0)) throw ConfigError("--min", "c must be > 0");

  const auto& p = cfg.env.protocol;
  std::string csv = axis + ",M,eta\n";
  for (int i = 0; i < steps; ++i) {
    const double x = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    physics::MisalignmentState mis;
    mis.lateral_c = p.mounting_gap;
    if (axis == "d") mis.horizontal_d = x;
    if (axis == "theta") mis.angular_theta = x;
    if (axis == "c") mis.lateral_c = x;
    const double m = physics::mutual_inductance(p.med_coil, p.ev_coil, mis, p.quadrature);
    const double eta = physics::transfer_efficiency(m, p.circuit);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", x, m, eta);
    csv += buf;
  }
  if (!a.out.empty()) {
    const fs::path dir = prepare_run_dir(cfg);
    write_text(dir / "physics_sweep.csv", csv);
  }
  std::cout << csv;
  return kExitOk;
}

int cmd_dump_config(const CommonArgs& a) {
  std::cout << config::dump_commented(resolve(a));
  return kExitOk;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("medsim");
  logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MED_DISPATCH_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept "off" when asked for.
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("ignoring unknown MED_DISPATCH_LOG level '{}'", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Mobile energy disseminator dispatch: simulation, PPO training and evaluation"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, phys_args, dump_args;
  auto* train = app.add_subcommand("train", "Train a PPO dispatch policy");
  add_common(train, train_args);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline over seeded episodes");
  add_common(eval, eval_args);
  std::string checkpoint, baseline;
  int episodes = 10;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON to evaluate greedily");
  eval->add_option("--baseline", baseline, "random or noop");
  eval->add_option("--episodes", episodes, "Episodes; episode i uses seed + i");

  auto* phys = app.add_subcommand("inspect-physics", "Sweep one misalignment axis and print M and efficiency");
  add_common(phys, phys_args);
  std::string axis = "d";
  double lo = 0.0, hi = 0.5;
  int steps = 11;
  phys->add_option("--axis", axis, "d, theta or c");
  phys->add_option("--min", lo, "First axis value");
  phys->add_option("--max", hi, "Last axis value");
  phys->add_option("--steps", steps, "Number of rows; 0 prints only the header");

  auto* dump = app.add_subcommand("dump-config", "Print the resolved configuration with field documentation");
  add_common(dump, dump_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args, checkpoint, baseline, episodes);
    if (*phys) return cmd_inspect_physics(phys_args, axis, lo, hi, steps);
    if (*dump) return cmd_dump_config(dump_args);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
