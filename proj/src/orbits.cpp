#include "nrho/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace nrho {

namespace {

struct Crossing {
  double t_half;
  VecX y;  // 6 or 42 entries
};

IntegratorSettings tight(const CorrectorSettings& s) {
  IntegratorSettings i = s.integrator;
  i.dense_output = false;
  return i;
}

Crossing half_period_crossing(const Vec6& x0, const SystemConstants& c, const IntegratorSettings& is,
                              bool with_stm, double period_guess) {
  VecX y0(with_stm ? 42 : 6);
  y0.head<6>() = x0;
  if (with_stm) {
    y0.tail<36>().setZero();
    for (int i = 0; i < 6; ++i) y0(6 + 7 * i) = 1.0;
  }
  OdeRhs rhs = with_stm ? OdeRhs([&](double, const VecX& y, VecX& dy) { dy = variational_derivative(y, c); })
                        : OdeRhs([&](double, const VecX& y, VecX& dy) { dy = cr3bp_derivative(y.head<6>(), c); });
  EventSpec ev;
  ev.g = [](double, const VecX& y) { return y(1); };
  ev.min_elapsed = period_guess > 0.0 ? 0.2 * period_guess : 1e-2;
  const double t_max = period_guess > 0.0 ? 1.5 * period_guess : 20.0;
  EventHit hit = integrate_to_event(rhs, 0.0, y0, t_max, ev, is);
  if (!hit.found) throw CorrectorError("no xz-plane crossing found");
  return {hit.t, hit.y};
}

double moon_distance(const Vec6& x, const SystemConstants& c) {
  return (x.head<3>() - primary2_position(c)).norm();
}

struct NewtonResult {
  Vec6 state;
  double t_half;
  int iterations;
};

// Columns of the free parameters for each mode.
NewtonResult newton(Vec6 x0, const SystemConstants& c, const CorrectorSettings& s,
                    std::optional<double> rp_target, double period_guess) {
  const IntegratorSettings is = tight(s);
  const double mu = c.mass_ratio();
  const std::vector<int> cols = rp_target ? std::vector<int>{0, 2, 4} : std::vector<int>{0, 4};
  const int m = static_cast<int>(cols.size());
  x0(1) = x0(3) = x0(5) = 0.0;

  auto residual = [&](const Vec6& x, const Crossing& cr) {
    VecX f(m);
    f(0) = cr.y(3);
    f(1) = cr.y(5);
    if (rp_target) f(2) = moon_distance(x, c) - *rp_target;
    return f;
  };

  std::optional<NewtonResult> best;
  double best_norm = std::numeric_limits<double>::infinity();
  int polish = 0;
  for (int it = 0; it <= s.max_iterations; ++it) {
    Crossing cr = half_period_crossing(x0, c, is, s.variational, period_guess);
    period_guess = 2.0 * cr.t_half;
    VecX f = residual(x0, cr);
    const double fn = f.cwiseAbs().maxCoeff();
    if (fn <= s.residual_tol) {
      if (fn < best_norm) {
        best_norm = fn;
        best = NewtonResult{x0, cr.t_half, it};
      }
      // a couple of extra steps to squeeze out the remaining residual
      if (polish++ == 2 || fn == 0.0) return *best;
    } else if (best) {
      return *best;
    }
    if (it == s.max_iterations) break;

    MatX jac(m, m);
    if (s.variational) {
      const Mat6 phi = stm_from_augmented(cr.y);
      const Vec6 xf = cr.y.head<6>();
      const Vec6 fx = cr3bp_derivative(xf, c);
      for (int k = 0; k < m; ++k) {
        const int col = cols[k];
        jac(0, k) = phi(3, col) - fx(3) / xf(4) * phi(1, col);
        jac(1, k) = phi(5, col) - fx(5) / xf(4) * phi(1, col);
      }
    } else {
      for (int k = 0; k < m; ++k) {
        const double h = 1e-7;
        Vec6 xp = x0, xm = x0;
        xp(cols[k]) += h;
        xm(cols[k]) -= h;
        const Crossing cp = half_period_crossing(xp, c, is, false, period_guess);
        const Crossing cm = half_period_crossing(xm, c, is, false, period_guess);
        jac(0, k) = (cp.y(3) - cm.y(3)) / (2 * h);
        jac(1, k) = (cp.y(5) - cm.y(5)) / (2 * h);
      }
    }
    if (rp_target) {
      const double rp = moon_distance(x0, c);
      jac(2, 0) = (x0(0) - (1.0 - mu)) / rp;
      jac(2, 1) = x0(2) / rp;
      jac(2, 2) = 0.0;
    }
    Eigen::FullPivLU<MatX> lu(jac);
    lu.setThreshold(1e-13);
    if (lu.rank() < m) throw CorrectorError("corrector Jacobian is rank deficient");
    VecX dx = lu.solve(-f);
    const double cap = 0.02;
    if (dx.cwiseAbs().maxCoeff() > cap) dx *= cap / dx.cwiseAbs().maxCoeff();
    for (int k = 0; k < m; ++k) x0(cols[k]) += dx(k);
  }
  if (best) return *best;
  throw CorrectorError("corrector did not converge");
}

double refine_perilune(const PeriodicOrbit& o) {
  const auto& ts = o.samples.times();
  const auto& xs = o.samples.states();
  double best = std::numeric_limits<double>::infinity();
  std::size_t ib = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double d = moon_distance(xs[i].head<6>(), o.constants);
    if (d < best) {
      best = d;
      ib = i;
    }
  }
  // golden-section search on the interpolant around the best sample
  double a = ts[ib > 0 ? ib - 1 : 0], b = ts[std::min(ib + 1, ts.size() - 1)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  auto dist = [&](double t) { return moon_distance(o.samples(t).head<6>(), o.constants); };
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = dist(x1), f2 = dist(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = dist(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = dist(x2);
    }
  }
  return std::min({best, f1, f2});
}

PeriodicOrbit finalize(const Vec6& x0, double t_half, int iterations, const SystemConstants& c,
                       const CorrectorSettings& s) {
  PeriodicOrbit o;
  o.constants = c;
  o.initial_state = SynodicState::from_vector(x0, 0.0);
  o.period = 2.0 * t_half;
  o.iterations = iterations;

  IntegratorSettings is = tight(s);
  // Symmetric orbit: M = G phi(T/2)^-1 G phi(T/2) with G = diag(1,-1,1,-1,1,-1).
  // Half-period propagation keeps the trivial Jordan pair much closer to 1.
  const Trajectory half = propagate_with_stm(o.initial_state, t_half, c, is);
  const Mat6 ph = stm_from_augmented(half.back());
  Mat6 G = Mat6::Zero();
  G.diagonal() << 1.0, -1.0, 1.0, -1.0, 1.0, -1.0;
  o.monodromy = G * ph.inverse() * G * ph;
  const Trajectory full = propagate(o.initial_state, o.period, c, is);
  o.periodicity_residual = (full.back().head<6>() - x0).norm();
  o.stability_index = stability_index(o.monodromy);

  IntegratorSettings dense = s.integrator;
  dense.dense_output = true;
  dense.max_step = std::min(dense.max_step, o.period / 10000.0);
  o.samples = propagate(o.initial_state, o.period, c, dense);
  o.perilune_radius_km = refine_perilune(o) * c.distance_km;
  return o;
}

}  // namespace

PeriodicOrbit correct_halo(const HaloGuess& guess, const SystemConstants& c,
                           const CorrectorSettings& settings, std::optional<double> perilune_radius) {
  c.validate();
  if (!(settings.residual_tol > 0.0)) throw std::invalid_argument("residual tolerance must be positive");
  NewtonResult r = newton(guess.state.vector(), c, settings, perilune_radius, guess.period);
  // Re-anchor at the crossing nearest the Moon so that t = 0 is perilune.
  const Crossing half = half_period_crossing(r.state, c, tight(settings), false, 2.0 * r.t_half);
  Vec6 other = half.y.head<6>();
  if (moon_distance(other, c) < moon_distance(r.state, c)) {
    other(1) = other(3) = other(5) = 0.0;
    std::optional<double> rp;
    if (perilune_radius) rp = moon_distance(other, c);
    NewtonResult again = newton(other, c, settings, rp, 2.0 * r.t_half);
    again.iterations += r.iterations;
    r = again;
  }
  return finalize(r.state, r.t_half, r.iterations, c, settings);
}

Eigen::Matrix<std::complex<double>, 6, 1> monodromy_eigenvalues(const Mat6& monodromy) {
  Eigen::EigenSolver<Mat6> es(monodromy, false);
  return es.eigenvalues();
}

double stability_index(const Mat6& monodromy) {
  const auto ev = monodromy_eigenvalues(monodromy);
  double real_max = 0.0, any_max = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double mag = std::abs(ev(i));
    any_max = std::max(any_max, mag);
    if (std::abs(ev(i).imag()) <= 1e-8 * std::max(1.0, mag)) real_max = std::max(real_max, mag);
  }
  double lam = real_max > 1.0 ? real_max : any_max;
  if (lam <= 0.0) lam = 1.0;
  return 0.5 * (lam + 1.0 / lam);
}

std::vector<PeriodicOrbit> continue_family(const PeriodicOrbit& seed, int steps, double step_km,
                                           const SystemConstants& c, const CorrectorSettings& s) {
  std::vector<PeriodicOrbit> family{seed};
  if (steps <= 0) return family;
  const Vec3 moon = primary2_position(c);
  auto rp_of = [&](const PeriodicOrbit& o) { return (o.initial_state.r - moon).norm(); };

  for (int k = 0; k < steps; ++k) {
    const PeriodicOrbit& last = family.back();
    double step = step_km / c.distance_km;
    bool done = false;
    for (int attempt = 0; attempt < 5 && !done; ++attempt, step *= 0.5) {
      const double rp_new = rp_of(last) + step;
      Vec6 guess = last.initial_state.vector();
      if (family.size() >= 2) {
        const PeriodicOrbit& prev = family[family.size() - 2];
        const double drp = rp_of(last) - rp_of(prev);
        if (std::abs(drp) > 0.0)
          guess += (last.initial_state.vector() - prev.initial_state.vector()) * (step / drp);
      } else {
        const Vec3 rel = last.initial_state.r - moon;
        guess.head<3>() = moon + rel * (rp_new / rel.norm());
      }
      try {
        HaloGuess g{SynodicState::from_vector(guess), last.period};
        family.push_back(correct_halo(g, c, s, rp_new));
        done = true;
      } catch (const std::exception&) {
      }
      if (!done && attempt == 4) {
        // near a fold: hold the z amplitude instead of the radius
        try {
          HaloGuess g{SynodicState::from_vector(guess), last.period};
          family.push_back(correct_halo(g, c, s));
          done = true;
        } catch (const std::exception&) {
        }
      }
    }
    if (!done) break;  // stall: partial family
  }
  return family;
}

std::vector<HaloGuess> nrho_seed_table() {
  // Perilune crossings (x, 0, z, 0, vy, 0) and periods, normalized Earth-Moon units.
  std::vector<HaloGuess> seeds;
  auto add = [&](double x, double z, double vy, double t) {
    SynodicState st;
    st.r = Vec3(x, 0.0, z);
    st.v = Vec3(0.0, vy, 0.0);
    seeds.push_back({st, t});
  };
  add(0.987375873026, 0.008425934520, 1.669060120441, 1.5106999276);  // 9:2 resonant
  add(0.987065346293, 0.016745499894, 1.170398318244, 1.7472562466);
  add(0.987385130476, 0.025084068433, 0.947100679835, 1.9500863305);
  add(0.988633579756, 0.033403611093, 0.812568007023, 2.1368463067);
  add(0.989685880969, 0.037530111239, 0.762169941076, 2.2256877745);
  add(0.991062357135, 0.041613354601, 0.718987976010, 2.3117542566);
  add(0.992789837846, 0.045632722503, 0.681211551461, 2.3950760887);
  add(0.994893097242, 0.049563542389, 0.647554175998, 2.4756112176);
  add(0.997394532860, 0.053376960711, 0.617069384878, 2.5532719534);
  return seeds;
}

PeriodicOrbit southern_nrho(double perilune_altitude_km, const SystemConstants& c,
                            const CorrectorSettings& s) {
  if (!(perilune_altitude_km > 0.0)) throw std::invalid_argument("perilune altitude must be positive");
  const double rp_target = (perilune_altitude_km + c.moon_radius_km) / c.distance_km;
  const Vec3 moon = primary2_position(c);
  const auto seeds = nrho_seed_table();
  const HaloGuess* best = &seeds.front();
  for (const auto& g : seeds)
    if (std::abs((g.state.r - moon).norm() - rp_target) < std::abs((best->state.r - moon).norm() - rp_target))
      best = &g;
  PeriodicOrbit orbit = correct_halo(*best, c, s, (best->state.r - moon).norm());
  const double max_step = 400.0 / c.distance_km;
  for (int guard = 0; guard < 200; ++guard) {
    const double rp = (orbit.initial_state.r - moon).norm();
    const double gap = rp_target - rp;
    if (std::abs(gap) <= 1e-14) break;
    const double step = std::clamp(gap, -max_step, max_step);
    auto fam = continue_family(orbit, 1, step * c.distance_km, c, s);
    if (fam.size() < 2) throw CorrectorError("continuation toward the requested perilune stalled");
    orbit = fam.back();
    if (std::abs(step - gap) == 0.0) break;
  }
  return orbit;
}

SynodicState PeriodicOrbit::state_at(double t) const {
  double tau = std::fmod(t, period);
  if (tau < 0.0) tau += period;
  SynodicState s = SynodicState::from_vector(samples(tau).head<6>(), t);
  return s;
}

SynodicState target_ephemeris(const PeriodicOrbit& orbit, double t) { return orbit.state_at(t); }

std::vector<std::string> orbit_invariant_violations(const PeriodicOrbit& o) {
  std::vector<std::string> out;
  std::ostringstream msg;
  IntegratorSettings is{1e-13, 1e-13};
  is.dense_output = false;
  const Trajectory tr = propagate(o.initial_state, o.initial_state.t + o.period, o.constants, is);
  const double residual = (tr.back().head<6>() - o.initial_state.vector()).norm();
  if (!(residual <= 1e-10)) {
    msg << "periodicity residual " << residual << " exceeds 1e-10";
    out.push_back(msg.str());
    msg.str("");
  }
  const double det = o.monodromy.determinant();
  if (!(std::abs(det - 1.0) <= 1e-8)) {
    msg << "monodromy determinant " << det << " differs from 1 by more than 1e-8";
    out.push_back(msg.str());
    msg.str("");
  }
  const auto ev = monodromy_eigenvalues(o.monodromy);
  std::array<bool, 6> used{};
  for (int i = 0; i < 6; ++i) {
    if (used[i]) continue;
    int partner = -1;
    double err = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 6; ++j) {
      if (j == i || used[j]) continue;
      const double e = std::abs(ev(i) * ev(j) - 1.0);
      if (e < err) {
        err = e;
        partner = j;
      }
    }
    if (partner < 0 || err > 1e-4) {
      msg << "eigenvalue " << ev(i) << " has no reciprocal partner";
      out.push_back(msg.str());
      msg.str("");
      continue;
    }
    used[i] = used[partner] = true;
  }
  int unit = 0;
  for (int i = 0; i < 6; ++i)
    if (std::abs(ev(i) - 1.0) <= 1e-4) ++unit;
  if (unit < 2) out.push_back("monodromy lacks a unit eigenvalue pair");
  const double nu = stability_index(o.monodromy);
  if (!(nu >= 1.0 - 1e-6)) out.push_back("stability index below one");
  if (std::abs(nu - o.stability_index) > 1e-9) out.push_back("stored stability index is stale");
  return out;
}

std::string serialize_orbit(const PeriodicOrbit& o) {
  using nlohmann::json;
  json j;
  j["schema"] = "nrho.orbit";
  j["version"] = 1;
  j["constants"] = {{"mu1_km3_s2", o.constants.mu1},
                    {"mu2_km3_s2", o.constants.mu2},
                    {"distance_km", o.constants.distance_km},
                    {"moon_radius_km", o.constants.moon_radius_km}};
  const Vec6 x0 = o.initial_state.vector();
  j["initial_state"] = std::vector<double>(x0.data(), x0.data() + 6);
  j["period"] = o.period;
  j["period_days"] = o.period_days();
  std::vector<double> m(36);
  for (int r = 0; r < 6; ++r)
    for (int cidx = 0; cidx < 6; ++cidx) m[6 * r + cidx] = o.monodromy(r, cidx);
  j["monodromy_row_major"] = m;
  j["stability_index"] = o.stability_index;
  j["perilune_radius_km"] = o.perilune_radius_km;
  j["periodicity_residual"] = o.periodicity_residual;
  j["corrector_iterations"] = o.iterations;
  json samples = json::array();
  for (std::size_t i = 0; i < o.samples.size(); ++i) {
    const VecX& x = o.samples.states()[i];
    const VecX& dx = o.samples.derivatives()[i];
    samples.push_back({o.samples.times()[i], std::vector<double>(x.data(), x.data() + 6),
                       std::vector<double>(dx.data(), dx.data() + 6)});
  }
  j["samples"] = samples;
  return j.dump();
}

PeriodicOrbit deserialize_orbit(const std::string& text) {
  using nlohmann::json;
  const json j = json::parse(text);
  if (j.at("schema") != "nrho.orbit" || j.at("version") != 1)
    throw std::invalid_argument("unsupported orbit file schema");
  PeriodicOrbit o;
  const auto& c = j.at("constants");
  o.constants.mu1 = c.at("mu1_km3_s2");
  o.constants.mu2 = c.at("mu2_km3_s2");
  o.constants.distance_km = c.at("distance_km");
  o.constants.moon_radius_km = c.at("moon_radius_km");
  o.constants.validate();
  const auto x0 = j.at("initial_state").get<std::vector<double>>();
  if (x0.size() != 6) throw std::invalid_argument("initial_state must have 6 entries");
  o.initial_state = SynodicState::from_vector(Eigen::Map<const Vec6>(x0.data()), 0.0);
  o.period = j.at("period");
  const auto m = j.at("monodromy_row_major").get<std::vector<double>>();
  if (m.size() != 36) throw std::invalid_argument("monodromy must have 36 entries");
  for (int r = 0; r < 6; ++r)
    for (int cidx = 0; cidx < 6; ++cidx) o.monodromy(r, cidx) = m[6 * r + cidx];
  o.stability_index = j.at("stability_index");
  o.perilune_radius_km = j.at("perilune_radius_km");
  o.periodicity_residual = j.at("periodicity_residual");
  o.iterations = j.value("corrector_iterations", 0);
  for (const auto& s : j.at("samples")) {
    const auto x = s.at(1).get<std::vector<double>>();
    const auto dx = s.at(2).get<std::vector<double>>();
    if (x.size() != 6 || dx.size() != 6) throw std::invalid_argument("malformed orbit sample");
    o.samples.push(s.at(0).get<double>(), Eigen::Map<const VecX>(x.data(), 6),
                   Eigen::Map<const VecX>(dx.data(), 6));
  }
  if (o.samples.size() < 2) throw std::invalid_argument("orbit file has no samples");
  return o;
}

void save_orbit(const PeriodicOrbit& orbit, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << serialize_orbit(orbit);
}

PeriodicOrbit load_orbit(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_orbit(ss.str());
}

}  // namespace nrho
