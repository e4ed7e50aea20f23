#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nrho/qp.hpp"
#include "nrho/scenario.hpp"

namespace nrho {

/// Exhaustive active-set enumeration for small strictly convex QPs (box rows folded into G).
/// Returns nullopt when no feasible vertex set exists.
std::optional<VecX> solve_qp_enumerate(const QpProblem& problem);

/// Random strictly convex instance with a known feasible point.
QpProblem random_qp(int n, int m, std::uint64_t seed, bool with_box);

/// Empirical per-row satisfaction P(a_i delta_S >= (b_delta)_i) for the LOS stack with N nodes,
/// under iid draws of delta ~ model at every node.
VecX chance_bound_satisfaction(const MatX& A_LS, const MatX& G_delta, const DisturbanceModel& model, double alpha,
                               int draws, std::uint64_t seed);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant suite: orbit invariants, STM composition, chance bound, QP oracle.
std::vector<CheckResult> run_invariant_suite(bool quick, const std::string& orbit_file = {});

}  // namespace nrho
