#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "oam/config.hpp"
#include "oam/sim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"oam: whole-body control and planning stack for an "
               "omnidirectional aerial manipulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "simulate one scenario end to end");
  std::string scenario_name;
  std::string config_path;
  std::string out_dir = "out";
  std::string controller = "grite";
  unsigned seed = 0;
  bool disable_collision = false;
  run->add_option("--scenario", scenario_name, "scenario name")
      ->required()
      ->check(CLI::IsMember(oam::scenario_names()));
  run->add_option("--config", config_path, "robot/config JSON file");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--controller", controller, "grite|gpid|grise")
      ->check(CLI::IsMember({"grite", "gpid", "grise"}));
  run->add_option("--seed", seed, "run seed (recorded; pipeline is deterministic)");
  run->add_flag("--disable-collision-constraints", disable_collision,
                "drop collision constraints from both planning stages");

  auto* dump = app.add_subcommand("print-config", "print the default config JSON");

  auto* list = app.add_subcommand("list-scenarios", "list built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  if (dump->parsed()) {
    std::printf("%s\n", oam::default_config_json().c_str());
    return 0;
  }
  if (list->parsed()) {
    for (const auto& n : oam::scenario_names()) std::printf("%s\n", n.c_str());
    return 0;
  }

  try {
    const oam::OamConfig config = config_path.empty()
                                      ? oam::OamConfig{}
                                      : oam::load_config(config_path);
    const oam::Scenario scenario = oam::make_scenario(scenario_name, config);
    oam::RunOptions options;
    options.controller = oam::controller_type_from_string(controller);
    options.seed = seed;
    options.disable_collision_constraints = disable_collision;
    options.out_dir = out_dir;

    const oam::RunResult res = oam::run_scenario(scenario, config, options);
    std::printf("scenario:         %s\n", scenario_name.c_str());
    std::printf("status:           %s\n", res.metrics.status.c_str());
    std::printf("position error:   rms %.3f cm  mean %.3f cm  std %.3f cm\n",
                res.metrics.pos_rms_cm, res.metrics.pos_mean_cm,
                res.metrics.pos_std_cm);
    std::printf("orientation error: rms %.3f deg  mean %.3f deg  std %.3f deg\n",
                res.metrics.ang_rms_deg, res.metrics.ang_mean_deg,
                res.metrics.ang_std_deg);
    if (res.metrics.nmpc_solves > 0) {
      std::printf("nmpc solve time:  min %.2f ms  max %.2f ms  mean %.2f ms (%d solves)\n",
                  res.metrics.nmpc_ms_min, res.metrics.nmpc_ms_max,
                  res.metrics.nmpc_ms_mean, res.metrics.nmpc_solves);
    }
    if (std::isfinite(res.metrics.min_certificate)) {
      std::printf("min certificate:  %.4f\n", res.metrics.min_certificate);
    }
    if (res.metrics.grasp_fired) {
      std::printf("grasp trigger:    t=%.2f s, pull %s\n", res.metrics.grasp_time,
                  res.metrics.pull_completed ? "completed" : "incomplete");
    }
    std::printf("max tilt:         %.1f deg\n", res.metrics.max_tilt_deg);
    if (!out_dir.empty()) {
      std::printf("outputs:          %s/{telemetry.csv,metrics.json,plan.json,solver_log.json}\n",
                  out_dir.c_str());
    }
    return res.failed ? 1 : 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
