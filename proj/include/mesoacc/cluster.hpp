#pragma once

#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include "mesoacc/flowstats.hpp"
#include "mesoacc/maneuver.hpp"
#include "mesoacc/scenario.hpp"

namespace mesoacc {

constexpr int kNoVehicle = -1;

// Immutable per-step view of one vehicle, as seen by the others.
struct VehicleView {
    int id = 0;
    double p = 0.0;
    double v = 0.0;
    double py = 0.0;
    Lane lane = Lane::Right;
    HighMode high = HighMode::Right;
};

struct Snapshot {
    std::vector<VehicleView> vehicles;
    LaneGeometry geometry;
};

// m / i / j of the reference framework: closest ahead in the own lane,
// closest behind in the other lane, closest ahead in the other lane, all
// within the visibility radius. Entries are indices into the snapshot, or
// kNoVehicle.
struct NeighborSet {
    int ahead_same = kNoVehicle;
    int behind_other = kNoVehicle;
    int ahead_other = kNoVehicle;
};

NeighborSet neighborhood(const Snapshot& s, int self, double radio_range);

// Leader of the vehicle: the ahead-same neighbor, unless a lane-changing
// vehicle ahead in the other lane is closer. Returns kNoVehicle for the
// fictitious leader.
int resolve_leader(const Snapshot& s, int self, double radio_range);

struct VehicleRuntime {
    VehicleSpec spec;
    double p = 0.0, v = 0.0, py = 0.0, vy = 0.0, steer = 0.0;
    double py_prev = 0.0;
    HighMode high = HighMode::Right;
    LowMode low = LowMode::FreeDriving;
    double u = 0.0;
    double v_des = 0.0;
    std::size_t sched_next = 0;
    int leader_id = kFictitiousLeader;
    RelativeState x;
    double alpha = 1.0;
    FlowStatistic flow_own, flow_target;
    SampleWindow lead_hist, target_hist;

    // Running statistics.
    double last_leader_swap = -1.0;
    double decel_run_start = -1.0;
    double prev_u = 0.0;
    double last_outside_equilibrium = -1.0;

    Lane lane(const LaneGeometry& g) const { return lane_of(py, g); }
};

// Synchronous fixed-step engine over the whole cluster. All cross-vehicle
// reads go through the step-start snapshot, so per-vehicle updates are
// order-independent.
class Engine {
public:
    explicit Engine(Scenario sc);

    // Advances one step: events, regime classification, control, Euler
    // integration, monitoring. When a trace is given, one row per vehicle
    // is appended after evaluation (before integration).
    void step(Trace* trace = nullptr);

    // Runs the scenario to completion, emitting one trace row per vehicle
    // at each sample instant.
    std::pair<Trace, RunSummary> run();

    double time() const { return static_cast<double>(step_index_) * sc_.dt; }
    const Scenario& scenario() const { return sc_; }
    const std::vector<VehicleRuntime>& vehicles() const { return fleet_; }
    const RunSummary& summary() const { return summary_; }
    bool collided() const { return !colliding_pairs_.empty(); }

    Snapshot make_snapshot() const;

private:
    static int index_in(const Snapshot& s, int id);
    void apply_schedule(VehicleRuntime& n, double t);
    void rebuild_relative(VehicleRuntime& n, const Snapshot& snap);
    void update_flow_and_histories(VehicleRuntime& n, const Snapshot& info, double t);
    bool evaluate_lane_exit(VehicleRuntime& n, const Snapshot& info, double t);
    void monitor_collisions();
    void monitor_equilibrium(VehicleRuntime& n, const Thresholds& th, double t);

    Scenario sc_;
    std::vector<VehicleRuntime> fleet_;
    std::deque<Snapshot> history_; // for the optional information delay
    long long step_index_ = 0;
    long long sample_every_ = 1;
    RunSummary summary_;
    std::vector<std::vector<long long>> switch_buckets_; // per vehicle, per second
    std::vector<std::pair<int, int>> colliding_pairs_;   // episodes in progress
    bool aborted_ = false;
};

// Low-regime transitions that may occur without an external event.
bool allowed_state_transition(LowMode from, LowMode to);

// Lane occupancy for collision purposes: a vehicle occupies its geometric
// lane, and while mid-maneuver near the separation line it conservatively
// occupies both.
bool occupies_lane(double py, HighMode high, Lane lane, const LaneGeometry& g);

} // namespace mesoacc
