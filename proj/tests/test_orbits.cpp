#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "nrho/checks.hpp"
#include "support.hpp"

using namespace nrho;
using namespace nrho::test;

namespace {

const PeriodicOrbit& reference_orbit() {
  static const PeriodicOrbit o = southern_nrho(15674.0, SystemConstants::earth_moon(kEarthMoonSemimajorAxisKm));
  return o;
}

}  // namespace

TEST_SUITE("orbits") {

TEST_CASE("target NRHO matches the reported perilune, period and stability index") {
  const PeriodicOrbit& o = reference_orbit();
  CHECK(std::abs(o.perilune_altitude_km() - 15674.0) <= 0.02 * 15674.0);
  CHECK(std::abs(o.period_days() - 10.35) <= 0.02 * 10.35);
  CHECK(std::abs(o.stability_index - 1.0120) <= 0.02);
  CHECK(o.initial_state.r.z() > 0.0);
  CHECK(o.state_at(0.5 * o.period).r.z() < 0.0);
  CHECK(o.initial_state.r.x() > 1.0 - o.constants.mass_ratio());
}

TEST_CASE("perilune is the closest approach to the Moon") {
  const PeriodicOrbit& o = reference_orbit();
  const Vec3 moon = primary2_position(o.constants);
  const double rp = o.perilune_radius_km / o.constants.distance_km;
  double closest = 1e9;
  for (int i = 0; i < 2000; ++i) closest = std::min(closest, (o.state_at(o.period * i / 2000.0).r - moon).norm());
  CHECK(closest >= rp - 1e-9);
  CHECK(std::abs((o.initial_state.r - moon).norm() - rp) < 1e-9);
}

TEST_CASE("invariants hold for the converged orbit") {
  const PeriodicOrbit& o = reference_orbit();
  const auto v = orbit_invariant_violations(o);
  CHECK(v.empty());
  CHECK(o.periodicity_residual <= 1e-10);
  CHECK(std::abs(o.monodromy.determinant() - 1.0) <= 1e-8);
  const auto ev = monodromy_eigenvalues(o.monodromy);
  for (int i = 0; i < 6; ++i) {
    double best = 1e9;
    for (int j = 0; j < 6; ++j)
      if (j != i) best = std::min(best, std::abs(ev(i) * ev(j) - 1.0));
    CHECK(best <= 1e-4);
  }
}

TEST_CASE("already periodic input converges immediately") {
  const PeriodicOrbit& o = reference_orbit();
  const Vec3 moon = primary2_position(o.constants);
  const double rp = (o.initial_state.r - moon).norm();
  const PeriodicOrbit again = correct_halo({o.initial_state, o.period}, o.constants, {}, rp);
  CHECK(again.iterations <= 2);
  CHECK((again.initial_state.vector() - o.initial_state.vector()).norm() <= 1e-10);
  CHECK(std::abs(again.period - o.period) <= 1e-10);
}

TEST_CASE("finite-difference Newton Jacobian reaches the same orbit") {
  const PeriodicOrbit& o = reference_orbit();
  const Vec3 moon = primary2_position(o.constants);
  CorrectorSettings s;
  s.variational = false;
  HaloGuess g{o.initial_state, o.period};
  g.state.v.y() *= 1.0 + 1e-5;
  const PeriodicOrbit fd = correct_halo(g, o.constants, s, (o.initial_state.r - moon).norm());
  CHECK((fd.initial_state.vector() - o.initial_state.vector()).norm() <= 1e-9);
}

TEST_CASE("stability index examples") {
  CHECK(stability_index(Mat6::Identity()) == doctest::Approx(1.0).epsilon(1e-14));
  Mat6 d = Mat6::Zero();
  d(0, 0) = 4.0;
  d(1, 1) = 0.25;
  d(2, 2) = 1.0;
  d(3, 3) = 1.0;
  const double th = 0.4;
  d(4, 4) = std::cos(th);
  d(4, 5) = -std::sin(th);
  d(5, 4) = std::sin(th);
  d(5, 5) = std::cos(th);
  CHECK(stability_index(d) == doctest::Approx(2.125).epsilon(1e-12));
  Mat6 rot = Mat6::Identity();
  rot(4, 4) = rot(5, 5) = 1.2 * std::cos(th);
  rot(4, 5) = -1.2 * std::sin(th);
  rot(5, 4) = 1.2 * std::sin(th);
  CHECK(stability_index(rot) == doctest::Approx(0.5 * (1.2 + 1 / 1.2)).epsilon(1e-12));
}

TEST_CASE("continuation: zero steps returns the seed") {
  const PeriodicOrbit& o = reference_orbit();
  const auto fam = continue_family(o, 0, 100.0, o.constants);
  REQUIRE(fam.size() == 1);
  CHECK((fam[0].initial_state.vector() - o.initial_state.vector()).norm() == 0.0);
}

TEST_CASE("continuation: period increases with perilune radius and nu stays near one") {
  const PeriodicOrbit& o = reference_orbit();
  const auto fam = continue_family(o, 6, -300.0, o.constants);
  REQUIRE(fam.size() == 7);
  for (std::size_t i = 1; i < fam.size(); ++i) {
    CHECK(fam[i].perilune_radius_km < fam[i - 1].perilune_radius_km);
    CHECK(fam[i].period < fam[i - 1].period);
    CHECK(fam[i].stability_index >= 1.0 - 1e-6);
    CHECK(std::abs(fam[i].stability_index - 1.0) <= 0.05);
    CHECK(orbit_invariant_violations(fam[i]).empty());
  }
}

TEST_CASE("ephemeris interpolation") {
  const PeriodicOrbit& o = reference_orbit();
  CHECK((o.state_at(0.0).vector() - o.initial_state.vector()).norm() == 0.0);
  CHECK((o.state_at(o.period).vector() - o.initial_state.vector()).norm() <= 1e-10);
  CHECK((target_ephemeris(o, -0.25 * o.period).vector() - o.state_at(0.75 * o.period).vector()).norm() <= 1e-12);
  const IntegratorSettings is{1e-13, 1e-13};
  const Vec6 half = propagate(o.initial_state, 0.5 * o.period, o.constants, is).back();
  CHECK((o.state_at(0.5 * o.period).vector() - half).norm() <= 1e-9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, o.period);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double t = u(rng);
    const Vec6 direct = propagate(o.initial_state, t, o.constants, is).back();
    worst = std::max(worst, (o.state_at(t).vector() - direct).norm());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("serialization round trip") {
  const PeriodicOrbit& o = reference_orbit();
  const PeriodicOrbit back = deserialize_orbit(serialize_orbit(o));
  CHECK((back.initial_state.vector() - o.initial_state.vector()).norm() == 0.0);
  CHECK(back.period == o.period);
  CHECK(max_abs(back.monodromy - o.monodromy) == 0.0);
  CHECK(back.stability_index == o.stability_index);
  CHECK(back.samples.size() == o.samples.size());
  CHECK(orbit_invariant_violations(back).empty());
}

TEST_CASE("corrupted orbit files") {
  const PeriodicOrbit& o = reference_orbit();
  CHECK_THROWS(deserialize_orbit("{not json"));
  CHECK_THROWS(deserialize_orbit(R"({"schema":"nrho.orbit","version":2})"));
  auto j = nlohmann::json::parse(serialize_orbit(o));
  j["initial_state"][4] = j["initial_state"][4].get<double>() * (1.0 + 1e-4);
  const PeriodicOrbit bad = deserialize_orbit(j.dump());
  CHECK_FALSE(orbit_invariant_violations(bad).empty());

  const auto path = std::filesystem::temp_directory_path() / "nrho_corrupt_orbit.json";
  {
    std::ofstream f(path);
    f << j.dump();
  }
  const auto results = run_invariant_suite(true, path.string());
  REQUIRE_FALSE(results.empty());
  CHECK(results.front().name == "orbit invariants");
  CHECK_FALSE(results.front().passed);
  std::filesystem::remove(path);
}

TEST_CASE("target orbit re-dimensionalized with the minimum distance") {
  const auto o = target_orbit();
  const PeriodicOrbit& ref = reference_orbit();
  CHECK(o->constants.distance_km == kEarthMoonMinDistanceKm);
  CHECK((o->initial_state.vector() - ref.initial_state.vector()).norm() == 0.0);
  CHECK(o->perilune_radius_km / o->constants.distance_km ==
        doctest::Approx(ref.perilune_radius_km / ref.constants.distance_km).epsilon(1e-14));
}

}
