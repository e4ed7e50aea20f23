#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "nrho/checks.hpp"
#include "nrho/report.hpp"

namespace fs = std::filesystem;
using namespace nrho;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

std::string output_root() {
  const char* env = std::getenv("NRHO_OUT_ROOT");
  return env && *env ? env : "out";
}

struct OrbitArgs {
  double perilune_surface_km = 15674.0;
  double reference_distance_km = kEarthMoonSemimajorAxisKm;
  std::string out;
};

struct RunArgs {
  std::string config;
  int runs = 0;
  long long seed = -1;
  std::string mode;
  int parallel = 0;
  std::string out;
  std::string truth;
  bool quiet = false;
};

struct ValidateArgs {
  bool quick = false;
  std::string orbit;
};

int command_orbit(const OrbitArgs& a) {
  if (!(a.perilune_surface_km > 0.0) || !(a.reference_distance_km > 0.0)) {
    std::cerr << "error: perilune altitude and reference distance must be positive\n";
    return kValidation;
  }
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const PeriodicOrbit o = southern_nrho(a.perilune_surface_km, SystemConstants::earth_moon(a.reference_distance_km));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string path = a.out.empty() ? (fs::path(output_root()) / "orbit.json").string() : a.out;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    save_orbit(o, path);
    std::printf("perilune altitude  %.3f km\n", o.perilune_altitude_km());
    std::printf("period             %.5f d (%.10f normalized)\n", o.period_days(), o.period);
    std::printf("stability index    %.6f\n", o.stability_index);
    std::printf("periodicity error  %.3e\n", o.periodicity_residual);
    std::printf("corrected in       %.2f s\n", dt);
    std::printf("written to         %s\n", path.c_str());
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

int command_run(const RunArgs& a) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(a.config);
    if (a.runs != 0) cfg.campaign.runs = a.runs;
    if (a.seed >= 0) cfg.campaign.base_seed = static_cast<std::uint64_t>(a.seed);
    if (a.parallel != 0) cfg.campaign.parallelism = a.parallel;
    if (!a.mode.empty() && a.mode != "both") cfg.campaign.modes = {controller_mode_from_string(a.mode)};
    if (a.mode == "both") cfg.campaign.modes = {ControllerMode::robust, ControllerMode::nominal};
    if (!a.truth.empty()) cfg.truth = truth_model_from_string(a.truth);
    const auto errors = cfg.validation_errors();
    if (!errors.empty()) throw ConfigError(errors);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    const std::string out = a.out.empty() ? (fs::path(output_root()) / cfg.name).string() : a.out;
    const auto t0 = std::chrono::steady_clock::now();
    const Simulation sim = build_simulation(cfg);
    if (!a.quiet)
      std::fprintf(stderr, "orbit: perilune altitude %.1f km, period %.4f d, nu %.4f; setup %.1f s\n",
                   sim.orbit->perilune_altitude_km(), sim.orbit->period_days(), sim.orbit->stability_index,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::vector<CampaignSummary> campaigns;
    for (const auto mode : cfg.campaign.modes) {
      int done = 0;
      const auto progress = [&](int, const RunRecord& r) {
        ++done;
        if (!a.quiet)
          std::fprintf(stderr, "\r%s: %d/%d runs%s", to_string(mode).c_str(), done, cfg.campaign.runs,
                       r.failed ? " (failure recorded)" : "");
      };
      campaigns.push_back(
          run_campaign(sim, mode, cfg.campaign.runs, cfg.campaign.base_seed, cfg.campaign.parallelism, progress));
      if (!a.quiet) std::fprintf(stderr, "\n");
    }
    write_campaign_outputs(out, cfg, campaigns);
    for (const auto& c : campaigns)
      std::printf("%-8s runs %d  LOS satisfied %d (rate %.2f)  failed %d  cost mean %.4f min %.4f max %.4f m/s\n",
                  to_string(c.mode).c_str(), c.run_count, c.satisfied, c.los_rate, c.failed, c.cost_mean, c.cost_min,
                  c.cost_max);
    std::printf("outputs in %s\n", out.c_str());
    for (const auto& c : campaigns)
      if (c.failed > 0) return kRuntime;
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

int command_validate(const ValidateArgs& a) {
  try {
    const auto results = run_invariant_suite(a.quick, a.orbit);
    bool ok = true;
    for (const auto& r : results) {
      std::printf("%s  %-28s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
      ok = ok && r.passed;
    }
    return ok ? kOk : kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained MPC rendezvous on a Southern L2 NRHO"};
  app.require_subcommand(1);

  OrbitArgs oa;
  auto* orbit = app.add_subcommand("orbit", "Correct the target NRHO and write it to a file");
  orbit->add_option("--perilune-surface-km", oa.perilune_surface_km, "Perilune altitude above the lunar surface");
  orbit->add_option("--reference-distance-km", oa.reference_distance_km, "Primary separation used for selection");
  orbit->add_option("--out", oa.out, "Orbit file (default $NRHO_OUT_ROOT/orbit.json)");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run the Monte Carlo campaign of a scenario");
  run->add_option("--config", ra.config, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--runs", ra.runs, "Override campaign.runs")->check(CLI::PositiveNumber);
  run->add_option("--seed", ra.seed, "Override campaign.base_seed")->check(CLI::NonNegativeNumber);
  run->add_option("--mode", ra.mode, "robust, nominal or both")->check(CLI::IsMember({"robust", "nominal", "both"}));
  run->add_option("--parallel", ra.parallel, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", ra.out, "Output directory (default $NRHO_OUT_ROOT/<scenario name>)");
  run->add_option("--truth", ra.truth, "nonlinear or linear")->check(CLI::IsMember({"nonlinear", "linear"}));
  run->add_flag("--quiet", ra.quiet, "No progress output");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Run the fast invariant suite");
  validate->add_flag("--quick", va.quick, "Smaller Monte Carlo and QP samples");
  validate->add_option("--orbit", va.orbit, "Check this orbit file instead of correcting one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  if (*orbit) return command_orbit(oa);
  if (*run) return command_run(ra);
  if (*validate) return command_validate(va);
  return kValidation;
}
