#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mesoacc/analysis.hpp"
#include "mesoacc/cluster.hpp"

using namespace mesoacc;

namespace {

Scenario minimal(double duration, double dt = 0.01) {
    Scenario sc;
    sc.duration = duration;
    sc.dt = dt;
    sc.sample_interval = dt;
    sc.geometry.lane_count = 1;
    return sc;
}

VehicleSpec vehicle(int id, Lane lane, double p0, double v0,
                    std::optional<double> v_des = std::nullopt) {
    VehicleSpec v;
    v.id = id;
    v.lane = lane;
    v.p0 = p0;
    v.v0 = v0;
    v.py0 = lane == Lane::Right ? 2.0 : 7.0;
    v.high0 = lane == Lane::Right ? HighMode::Right : HighMode::Left;
    v.v_des0 = v_des.value_or(v0);
    return v;
}

} // namespace

TEST_CASE("neighborhood and leader resolution") {
    Snapshot s;
    s.geometry = LaneGeometry{};
    // the reference sketch: follower on the right; one ahead in lane,
    // one ahead and one behind on the left
    s.vehicles = {
        {1, 100.0, 30.0, 2.0, Lane::Right, HighMode::Right}, // self
        {2, 140.0, 28.0, 2.0, Lane::Right, HighMode::Right}, // m
        {3, 130.0, 31.0, 7.0, Lane::Left, HighMode::Left},   // j
        {4, 60.0, 33.0, 7.0, Lane::Left, HighMode::Left},    // i
    };
    const NeighborSet nb = neighborhood(s, 0, 500.0);
    CHECK(nb.ahead_same == 1);
    CHECK(nb.ahead_other == 2);
    CHECK(nb.behind_other == 3);

    // leader is m while j is not changing lane
    CHECK(resolve_leader(s, 0, 500.0) == 1);
    // once j is crossing toward us and closer, it takes over
    s.vehicles[2].high = HighMode::CrossRight;
    CHECK(resolve_leader(s, 0, 500.0) == 2);
    // m absent entirely: fictitious even with a crossing j
    s.vehicles[1].lane = Lane::Left;
    CHECK(resolve_leader(s, 0, 500.0) == kNoVehicle);
}

TEST_CASE("radius bounds the neighborhood") {
    Snapshot s;
    s.geometry = LaneGeometry{};
    s.vehicles = {
        {1, 0.0, 30.0, 2.0, Lane::Right, HighMode::Right},
        {2, 501.0, 30.0, 2.0, Lane::Right, HighMode::Right},
    };
    CHECK(neighborhood(s, 0, 500.0).ahead_same == kNoVehicle);
    s.vehicles[1].p = 500.0; // inclusive at the boundary
    CHECK(neighborhood(s, 0, 500.0).ahead_same == 1);

    Snapshot lone;
    lone.geometry = LaneGeometry{};
    lone.vehicles = {{1, 0.0, 30.0, 2.0, Lane::Right, HighMode::Right}};
    const NeighborSet nb = neighborhood(lone, 0, 500.0);
    CHECK(nb.ahead_same == kNoVehicle);
    CHECK(nb.ahead_other == kNoVehicle);
    CHECK(nb.behind_other == kNoVehicle);
}

TEST_CASE("matched-speed pair coasts indefinitely") {
    Scenario sc = minimal(20.0);
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 24.0),
                   vehicle(2, Lane::Right, -45.0, 24.0, 30.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();
    (void)trace;
    CHECK(summary.collision_episodes == 0);
    const VehicleRuntime& follower = engine.vehicles()[1];
    CHECK(follower.v == doctest::Approx(24.0));
    CHECK(follower.x.gap == doctest::Approx(45.0));
    CHECK(summary.switches.at(2).count == 0);
}

TEST_CASE("free vehicle reaches its desired speed in finite time") {
    Scenario sc = minimal(60.0);
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 20.0, 30.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();

    const VehicleRuntime& n = engine.vehicles()[0];
    CHECK(n.v == doctest::Approx(30.0).epsilon(1e-12));

    // closed form of the tracking law: exponential leg until the floor
    // takes over, then a constant-rate leg; within 0.1 m/s at
    // 10 ln(10) + 9 s.
    const double expect = 10.0 * std::log(10.0) + 9.0;
    REQUIRE(summary.convergence_time.at(1).has_value());
    CHECK(*summary.convergence_time.at(1) == doctest::Approx(expect).epsilon(0.01));

    // speed increases monotonically on the way up
    double prev = -1.0;
    for (const TraceRecord& r : trace) {
        CHECK(r.v >= prev - 1e-12);
        prev = r.v;
    }

    // after landing exactly on target the control stays at zero
    bool seen_zero_tail = false;
    for (const TraceRecord& r : trace)
        if (r.t > 40.0) {
            CHECK(r.u == 0.0);
            seen_zero_tail = true;
        }
    CHECK(seen_zero_tail);
}

TEST_CASE("runs are deterministic") {
    Scenario sc = minimal(10.0);
    sc.geometry.lane_count = 2;
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 30.0),
                   vehicle(2, Lane::Right, -50.0, 32.0, 34.0),
                   vehicle(3, Lane::Left, -20.0, 28.0, 30.0)};
    auto run_csv = [&sc] {
        Engine e(sc);
        return trace_to_csv(e.run().first);
    };
    CHECK(run_csv() == run_csv());
}

TEST_CASE("listing order does not affect the physics") {
    Scenario a = minimal(12.0);
    a.geometry.lane_count = 2;
    a.vehicles = {vehicle(1, Lane::Right, 0.0, 30.0, 28.0),
                  vehicle(2, Lane::Right, -60.0, 33.0, 33.0),
                  vehicle(3, Lane::Left, -30.0, 27.0, 31.0)};
    Scenario b = a;
    std::swap(b.vehicles[0], b.vehicles[2]); // different per-lane blocks order

    Engine ea(a), eb(b);
    auto ta = ea.run().first;
    auto tb = eb.run().first;
    REQUIRE(ta.size() == tb.size());
    // compare per (t, id) regardless of row order inside a sample
    auto key = [](const TraceRecord& r) { return std::make_pair(r.t, r.id); };
    std::sort(ta.begin(), ta.end(),
              [&](const auto& x, const auto& y) { return key(x) < key(y); });
    std::sort(tb.begin(), tb.end(),
              [&](const auto& x, const auto& y) { return key(x) < key(y); });
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].id == tb[i].id);
        CHECK(ta[i].p == tb[i].p);
        CHECK(ta[i].v == tb[i].v);
        CHECK(ta[i].low == tb[i].low);
        CHECK(ta[i].u == tb[i].u);
    }
}

TEST_CASE("leader swap emits the re-anchoring event once") {
    // Three vehicles; the middle one changes lane, handing its follower a
    // new leader.
    Scenario sc = minimal(40.0);
    sc.geometry.lane_count = 2;
    sc.sample_interval = sc.dt;
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 24.0, 24.0),
                   vehicle(2, Lane::Right, -45.0, 24.0, 32.0),
                   vehicle(3, Lane::Right, -90.0, 24.0, 24.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();

    // vehicle 2 finds the empty left lane strictly better once its own
    // prospect saturates below target
    CHECK(summary.lane_exit_times.count(2) == 1);
    CHECK(summary.lane_changes_completed.at(2) == 1);

    // vehicle 3 saw its leader change from 2 to 1 when 2 left the lane
    bool saw_swap = false;
    for (const TraceRecord& r : trace)
        if (r.id == 3 && (r.events & kEventNewLeader) && r.leader == 1) saw_swap = true;
    CHECK(saw_swap);
    CHECK(summary.collision_episodes == 0);
}

TEST_CASE("crossing sequence walks the cycle and settles on the midline") {
    Scenario sc = minimal(30.0);
    sc.geometry.lane_count = 2;
    sc.sample_interval = sc.dt;
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 24.0, 32.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();

    REQUIRE(summary.lane_exit_times.count(1) == 1);
    REQUIRE(summary.lane_changes_completed.at(1) == 1);

    // mode sequence r -> r2l -> l2l -> l, each exactly once
    std::vector<HighMode> seq;
    for (const TraceRecord& r : trace)
        if (seq.empty() || seq.back() != r.high) seq.push_back(r.high);
    REQUIRE(seq.size() == 4);
    CHECK(seq[0] == HighMode::Right);
    CHECK(seq[1] == HighMode::CrossLeft);
    CHECK(seq[2] == HighMode::AlignLeft);
    CHECK(seq[3] == HighMode::Left);

    const VehicleRuntime& n = engine.vehicles()[0];
    CHECK(std::abs(n.py - 7.0) < 0.05);
    CHECK(n.vy == 0.0);
    CHECK(n.steer == 0.0);

    // speed magnitude is preserved across the exit/midline pair up to the
    // acceleration applied during the maneuver
    CHECK(n.v <= 32.0 + 1e-9);
}

TEST_CASE("single-lane scenarios never initiate maneuvers") {
    Scenario sc = minimal(30.0);
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 24.0, 32.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();
    (void)trace;
    CHECK(summary.lane_exit_times.empty());
    for (const VehicleRuntime& n : engine.vehicles()) CHECK(n.high == HighMode::Right);
}

TEST_CASE("collision detection honors lanes and straddling") {
    Scenario sc = minimal(1.0);
    sc.geometry.lane_count = 2;
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 10.0),
                   vehicle(2, Lane::Left, -3.0, 10.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();
    (void)trace;
    // different lanes: 3 m apart is not a collision
    CHECK(summary.collision_episodes == 0);

    // a straddling vehicle blocks both lanes
    Scenario sc2 = minimal(0.1);
    sc2.geometry.lane_count = 2;
    VehicleSpec crossing = vehicle(3, Lane::Left, 0.0, 10.0);
    crossing.py0 = 4.6; // just over the separation line
    crossing.high0 = HighMode::AlignLeft;
    crossing.steer0 = -0.1;
    VehicleSpec right = vehicle(4, Lane::Right, -3.0, 10.0);
    sc2.vehicles = {crossing, right};
    Engine e2(sc2);
    auto [t2, s2] = e2.run();
    (void)t2;
    CHECK(s2.collision_episodes >= 1);
}

TEST_CASE("gap boundary: exactly the threshold counts as a collision") {
    Scenario sc = minimal(0.0); // evaluate the initial state only
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 24.0),
                   vehicle(2, Lane::Right, -45.0, 24.0)};
    {
        Engine engine(sc);
        auto [t, s] = engine.run();
        (void)t;
        CHECK(s.collision_episodes == 0);
    }
    // the loader rejects a 5.0 m initial gap as unsafe, so drive into it:
    // check the predicate through the runtime monitor instead
    Scenario close = minimal(2.0);
    close.vehicles = {vehicle(1, Lane::Right, 0.0, 10.0, 10.0),
                      vehicle(2, Lane::Right, -5.6, 10.6, 10.6)};
    Engine engine(close);
    auto [t, s] = engine.run();
    (void)t;
    CHECK(s.collision_episodes == 1);
    CHECK(s.min_same_lane_gap <= 5.0);
}

TEST_CASE("fail-fast stops at the first collision") {
    Scenario sc = minimal(30.0);
    sc.flags.fail_fast = true;
    VehicleSpec weak = vehicle(2, Lane::Right, -400.0, 36.0, 36.0);
    weak.params.accel_max = 0.5;
    weak.params.floor_accel = 0.01;
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 30.0, 0.0), weak};
    // per-vehicle params flow through VehicleSpec directly here
    Engine engine(sc);
    auto [trace, summary] = engine.run();
    CHECK(summary.collision_episodes == 1);
    CHECK(trace.back().t < 30.0 - 1e-9);
}

TEST_CASE("information delay postpones the flow response") {
    Scenario base = minimal(40.0);
    base.geometry.lane_count = 1;
    base.flags.mesoscopic = true;
    base.vehicles = {vehicle(1, Lane::Right, 0.0, 30.0, 30.0),
                     vehicle(2, Lane::Right, -50.0, 30.0, 30.0),
                     vehicle(3, Lane::Right, -100.0, 30.0, 33.0)};
    base.vehicles[0].schedule = {{10.0, 20.0}};

    auto first_alpha_above = [](const Trace& trace, int id) {
        for (const TraceRecord& r : trace)
            if (r.id == id && r.alpha > 1.0 + 1e-9) return r.t;
        return -1.0;
    };
    Engine e0(base);
    const double t0 = first_alpha_above(e0.run().first, 3);
    Scenario delayed = base;
    delayed.flags.info_delay_steps = 200; // two seconds
    Engine e1(delayed);
    const double t1 = first_alpha_above(e1.run().first, 3);
    REQUIRE(t0 > 0.0);
    REQUIRE(t1 > 0.0);
    CHECK(t1 == doctest::Approx(t0 + 2.0).epsilon(0.01));
}

TEST_CASE("equilibrium monitoring matches the analysis oracle") {
    Scenario sc = minimal(60.0);
    sc.vehicles = {vehicle(1, Lane::Right, 0.0, 20.0, 30.0)};
    Engine engine(sc);
    auto [trace, summary] = engine.run();
    const ConvergenceReport rep = equilibrium_check(trace, sc);
    REQUIRE(rep.time.at(1).has_value());
    REQUIRE(summary.convergence_time.at(1).has_value());
    CHECK(*rep.time.at(1) == doctest::Approx(*summary.convergence_time.at(1)).epsilon(1e-9));
    CHECK(rep.terminal_distance.at(1) == 0.0);
}
