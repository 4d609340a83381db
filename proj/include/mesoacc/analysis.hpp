#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mesoacc/scenario.hpp"

namespace mesoacc {

struct PartitionReport {
    long long samples = 0;
    long long matched_exactly_one = 0;
    long long resolved_by_precedence = 0;
    std::vector<RelativeState> offenders; // capped sample of fallback states
};

// Uniformly samples follower states and tallies how many lie in exactly one
// regime domain as literally defined.
PartitionReport partition_check(long long count, const VehicleParams& p,
                                std::uint64_t seed);

struct BrakeViolation {
    RelativeState start;
    double min_gap = 0.0;
    // True when no deceleration-bounded controller could have kept the gap
    // above the collision threshold from this start.
    bool kinematically_doomed = false;
};

struct BrakeOracleResult {
    std::string grid_description;
    long long states_evaluated = 0;
    double min_gap = 0.0;          // over all passing trajectories
    double pass_margin = 0.0;      // threshold used: min gap > margin
    std::vector<BrakeViolation> violations;
    long long doomed_violations = 0;   // violations that are kinematically doomed
    long long standstill_equalities = 0; // trajectories ending at exactly the threshold
    long long refined_states = 0;      // extra evaluations near violations
    bool passed = false;
};

struct BrakeGrid {
    int n_gap = 25;
    int n_rel = 25;
    int n_lead = 25;
    double gap_max = 600.0;
};

// Worst case sweep: from each valid initial state the leader brakes fully
// to a standstill while the follower runs the automaton at the given fixed
// headway scale. Integration is event-exact: piecewise-quadratic kinematics
// with bisected regime-boundary crossings, independent of the cluster
// engine's fixed-step path.
BrakeOracleResult worst_case_brake_oracle(const BrakeGrid& grid,
                                          const VehicleParams& p, double alpha);

// Single-trajectory version; exposed for tests and the Python bindings.
double brake_trajectory_min_gap(const RelativeState& start, const VehicleParams& p,
                                double alpha);

// Closed-form bound: no controller with |u| <= accel_max can avoid a gap
// violation from this state under full leader braking.
bool kinematically_doomed(const RelativeState& start, const VehicleParams& p);

struct EquilibriumTolerance {
    double speed_tol = 0.1;
    double rel_speed_tol = 0.1;
    double band_slack = 0.5;
    double lat_speed_tol = 1e-6;
};

struct ConvergenceReport {
    std::map<int, std::optional<double>> time;       // absent: never converged
    std::map<int, double> terminal_distance;         // 0 when inside at the end
};

ConvergenceReport equilibrium_check(const Trace& trace, const Scenario& sc,
                                    const EquilibriumTolerance& tol = {});

struct SwitchReport {
    std::map<int, SwitchStat> per_vehicle;
    long long max_per_second = 0;
    long long conformance_violations = 0;
    long long unsafe_regime_rows = 0;
};

SwitchReport switch_stats(const Trace& trace, const Scenario& sc);

} // namespace mesoacc
