#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mesoacc/automaton.hpp"
#include "mesoacc/types.hpp"

namespace mesoacc {

struct VDesChange {
    double t = 0.0;
    double v_des = 0.0;
};

struct VehicleSpec {
    int id = 0;
    Lane lane = Lane::Right;
    double p0 = 0.0;
    double v0 = 0.0;
    double py0 = 0.0; // defaults to the lane midline
    double vy0 = 0.0;
    double steer0 = 0.0;
    HighMode high0 = HighMode::Right;
    double v_des0 = 0.0; // defaults to v0
    std::vector<VDesChange> schedule;
    VehicleParams params; // per-vehicle effective parameters
};

struct RunFlags {
    bool mesoscopic = true;
    ClosingLaw closing_law = ClosingLaw::SignCorrected;
    bool fail_fast = false;
    int info_delay_steps = 0;
    // Test hooks: pin the headway scale and/or the trigger variant
    // independently of the mesoscopic flag.
    std::optional<double> alpha_override;
    std::optional<bool> meso_trigger_override;
};

struct Scenario {
    int schema_version = 1;
    std::string name;
    double dt = 0.01;
    double duration = 0.0;
    double sample_interval = 0.1;
    LaneGeometry geometry;
    VehicleParams defaults;
    RunFlags flags;
    std::vector<VehicleSpec> vehicles;
};

// Parses and fully validates a scenario document (JSON). Validation errors
// carry the offending field path.
Scenario load_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);
std::string serialize(const Scenario& sc);

// Events applied to a vehicle during one step, in application order.
enum EventBits : std::uint8_t {
    kEventCross = 1,     // line crossing
    kEventLaneExit = 2,  // lane-change initiation
    kEventNewLeader = 4, // leader identity change
};

constexpr int kFictitiousLeader = -1;

struct TraceRecord {
    double t = 0.0;
    int id = 0;
    HighMode high = HighMode::Right;
    LowMode low = LowMode::FreeDriving;
    double p = 0.0;
    double v = 0.0;
    double py = 0.0;
    double vy = 0.0;
    double steer = 0.0;
    double u = 0.0;
    double alpha = 1.0;
    int leader = kFictitiousLeader;
    std::uint8_t events = 0;
};

using Trace = std::vector<TraceRecord>;

// CSV with a fixed header and six-decimal fields; returns bytes written.
std::size_t write_trace(const Trace& trace, std::ostream& out);
std::size_t write_trace_file(const Trace& trace, const std::string& path);
std::string trace_to_csv(const Trace& trace);
Trace read_trace_csv(const std::string& csv);

struct SwitchStat {
    long long count = 0;
    long long max_per_second = 0;
    long long conformance_violations = 0;
};

struct RunSummary {
    long long collision_episodes = 0;
    std::vector<std::pair<int, int>> collision_pairs;
    double min_same_lane_gap = 0.0;
    std::map<std::pair<int, int>, double> min_gap_by_pair; // follower -> leader
    std::map<int, std::optional<double>> convergence_time;
    std::map<int, SwitchStat> switches;
    long long unsafe_regime_steps = 0;
    std::optional<double> min_leader_dwell; // shortest time between leader swaps
    bool leader_dwell_flag = false;         // any swap interval below 2*dt
    std::map<int, int> lane_changes_completed;
    std::map<int, std::vector<double>> lane_exit_times;
    std::map<int, std::optional<double>> decel_onset;
    std::map<int, long long> accel_sign_changes;
    double wall_time_s = 0.0;
};

std::string summary_to_json(const RunSummary& s);

// Recomputes a RunSummary from trace rows. Exact when the trace was sampled
// every step; otherwise a sampled view of the same quantities.
RunSummary summarize(const Trace& trace, const Scenario& sc);

} // namespace mesoacc
