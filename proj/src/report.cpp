#include "nrho/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace nrho {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const Vec3& run_bias(const ScenarioConfig& cfg, const RunRecord& r) {
  return cfg.controller.impulsive_enabled() ? r.bias.impulse : r.bias.thrust;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::ostringstream stream() {
  std::ostringstream s;
  s.precision(12);
  return s;
}

}  // namespace

std::string summary_json(const ScenarioConfig& config, const std::vector<CampaignSummary>& campaigns) {
  json j;
  j["schema"] = "nrho.summary";
  j["version"] = 1;
  j["scenario"] = json::parse(serialize_scenario(config));
  json modes = json::object();
  for (const auto& c : campaigns) {
    json m;
    m["run_count"] = c.run_count;
    m["satisfied"] = c.satisfied;
    m["failed"] = c.failed;
    m["los_satisfaction_rate"] = c.los_rate;
    m["mission_cost_mps"] = {{"mean", c.cost_mean}, {"min", c.cost_min}, {"max", c.cost_max}};
    json runs = json::array();
    for (const auto& r : c.runs) {
      const Vec3& b = run_bias(config, r);
      runs.push_back({{"run", r.run_index},
                      {"los_violated", r.los_violated},
                      {"first_violation_t_s", r.first_violation_t},
                      {"max_violation_m", r.max_violation_m},
                      {"max_distance_m", r.max_distance_m},
                      {"mission_cost_mps", r.mission_cost},
                      {"terminal_miss_m", r.terminal_miss_m},
                      {"terminal_miss_mps", r.terminal_miss_mps},
                      {"bias", {b(0), b(1), b(2)}},
                      {"fallback_steps", r.fallback_steps},
                      {"failed", r.failed},
                      {"error", r.error}});
    }
    m["runs"] = runs;
    modes[to_string(c.mode)] = m;
  }
  j["modes"] = modes;
  return j.dump(2) + "\n";
}

std::string timing_json(const std::vector<CampaignSummary>& campaigns) {
  json j;
  j["schema"] = "nrho.timing";
  j["version"] = 1;
  json modes = json::object();
  for (const auto& c : campaigns) {
    double total = 0.0, worst = 0.0;
    int steps = 0;
    for (const auto& r : c.runs)
      for (const auto& n : r.nodes) {
        total += n.solve_time_s;
        worst = std::max(worst, n.solve_time_s);
        ++steps;
      }
    modes[to_string(c.mode)] = {{"steps", steps},
                                {"mean_step_solve_time_s", steps > 0 ? total / steps : 0.0},
                                {"max_step_solve_time_s", worst}};
  }
  j["modes"] = modes;
  return j.dump(2) + "\n";
}

std::string run_csv(const std::vector<const RunRecord*>& records) {
  auto s = stream();
  s << "mode,t_s,node,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,dv_cmd_x_mps,dv_cmd_y_mps,dv_cmd_z_mps,"
       "dv_app_x_mps,dv_app_y_mps,dv_app_z_mps,u_cmd_x_mps2,u_cmd_y_mps2,u_cmd_z_mps2,"
       "u_app_x_mps2,u_app_y_mps2,u_app_z_mps2\n";
  for (const RunRecord* r : records) {
    for (const auto& p : r->trajectory) {
      Vec3 dvc = Vec3::Zero(), dva = Vec3::Zero();
      if (p.node >= 0 && p.node < static_cast<int>(r->nodes.size())) {
        dvc = r->nodes[p.node].dv_cmd;
        dva = r->nodes[p.node].dv_applied;
      }
      s << to_string(r->mode) << ',' << p.t << ',' << p.node;
      for (int i = 0; i < 6; ++i) s << ',' << p.x(i);
      for (const Vec3* v : std::initializer_list<const Vec3*>{&dvc, &dva, &p.u_cmd, &p.u_applied})
        for (int i = 0; i < 3; ++i) s << ',' << (*v)(i);
      s << '\n';
    }
  }
  return s.str();
}

std::string steps_csv(const std::vector<const RunRecord*>& records) {
  auto s = stream();
  s << "mode,node,t_s,qp_status,fallback,objective,b_delta_norm,qp_iterations,solve_time_s,kkt,"
       "delta_hat_norm,sigma_hat_trace\n";
  for (const RunRecord* r : records)
    for (const auto& n : r->nodes)
      s << to_string(r->mode) << ',' << n.k << ',' << n.t << ',' << to_string(n.status) << ',' << n.fallback << ','
        << n.objective << ',' << n.b_delta_norm << ',' << n.qp_iterations << ',' << n.solve_time_s << ',' << n.kkt
        << ',' << n.delta_hat.norm() << ',' << n.sigma_trace << '\n';
  return s.str();
}

void write_campaign_outputs(const std::string& dir, const ScenarioConfig& config,
                            const std::vector<CampaignSummary>& campaigns) {
  const fs::path root(dir);
  fs::create_directories(root / "runs");
  fs::create_directories(root / "plots");
  write_file(root / "summary.json", summary_json(config, campaigns));
  write_file(root / "timing.json", timing_json(campaigns));

  int max_runs = 0;
  for (const auto& c : campaigns) max_runs = std::max(max_runs, c.run_count);
  for (int i = 0; i < max_runs; ++i) {
    std::vector<const RunRecord*> recs;
    for (const auto& c : campaigns)
      if (i < c.run_count && !c.runs[i].failed) recs.push_back(&c.runs[i]);
    write_file(root / "runs" / ("run_" + std::to_string(i) + ".csv"), run_csv(recs));
    write_file(root / "runs" / ("steps_" + std::to_string(i) + ".csv"), steps_csv(recs));
  }

  for (const auto& c : campaigns) {
    const std::string m = to_string(c.mode);
    auto xz = stream();
    xz << "# run t_s x_m y_m z_m\n";
    auto cost = stream();
    cost << "# run bias_x bias_y bias_z bias_norm mission_cost_mps los_violated\n";
    for (const auto& r : c.runs) {
      if (r.failed) continue;
      for (const auto& p : r.trajectory)
        xz << r.run_index << ' ' << p.t << ' ' << p.x(0) << ' ' << p.x(1) << ' ' << p.x(2) << '\n';
      xz << "\n\n";
      const Vec3& b = run_bias(config, r);
      cost << r.run_index << ' ' << b(0) << ' ' << b(1) << ' ' << b(2) << ' ' << b.norm() << ' ' << r.mission_cost
           << ' ' << r.los_violated << '\n';
    }
    write_file(root / "plots" / ("trajectory_xz_" + m + ".dat"), xz.str());
    write_file(root / "plots" / ("cost_vs_bias_" + m + ".dat"), cost.str());

    const RunRecord* first = nullptr;
    for (const auto& r : c.runs)
      if (!r.failed) {
        first = &r;
        break;
      }
    if (!first) continue;
    auto imp = stream();
    imp << "# run " << first->run_index << ": node t_s dv_x_mps dv_y_mps dv_z_mps\n";
    for (const auto& n : first->nodes)
      imp << n.k << ' ' << n.t << ' ' << n.dv_cmd(0) << ' ' << n.dv_cmd(1) << ' ' << n.dv_cmd(2) << '\n';
    write_file(root / "plots" / ("impulses_" + m + ".dat"), imp.str());
    auto thr = stream();
    thr << "# run " << first->run_index << ": t_s u_x_mps2 u_y_mps2 u_z_mps2\n";
    for (const auto& p : first->trajectory)
      thr << p.t << ' ' << p.u_cmd(0) << ' ' << p.u_cmd(1) << ' ' << p.u_cmd(2) << '\n';
    write_file(root / "plots" / ("thrust_" + m + ".dat"), thr.str());
  }
}

}  // namespace nrho
