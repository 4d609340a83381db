#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mesoacc/cluster.hpp"
#include "mesoacc/scenario.hpp"

using namespace mesoacc;

namespace {
std::string scenario_path(const char* name) {
    return std::string(MESOACC_SCENARIO_DIR) + "/" + name;
}
} // namespace

TEST_CASE("bundled single-lane platoon loads with the documented shape") {
    const Scenario sc = load_scenario_file(scenario_path("table2.json"));
    REQUIRE(sc.vehicles.size() == 5);
    CHECK(sc.geometry.lane_count == 1);
    CHECK(sc.dt == 0.01);
    CHECK(sc.duration == 150.0);

    CHECK(sc.vehicles[0].p0 == 0.0);
    CHECK(sc.vehicles[1].p0 == -50.0);
    CHECK(sc.vehicles[2].p0 == -100.0);
    CHECK(sc.vehicles[3].p0 == -150.0);
    CHECK(sc.vehicles[4].p0 == -650.0);

    CHECK(sc.vehicles[4].v0 == 36.0);
    CHECK(sc.vehicles[4].v_des0 == 36.0); // defaults to the initial speed

    REQUIRE(sc.vehicles[0].schedule.size() == 2);
    CHECK(sc.vehicles[0].schedule[0].t == 30.0);
    CHECK(sc.vehicles[0].schedule[0].v_des == 18.0);
    CHECK(sc.vehicles[0].schedule[1].t == 90.0);
    CHECK(sc.vehicles[0].schedule[1].v_des == 33.0);
}

TEST_CASE("bundled two-lane overtake scenario loads") {
    const Scenario sc = load_scenario_file(scenario_path("table3.json"));
    REQUIRE(sc.vehicles.size() == 11);
    CHECK(sc.geometry.lane_count == 2);
    int right = 0, left = 0;
    for (const VehicleSpec& v : sc.vehicles) (v.lane == Lane::Right ? right : left)++;
    CHECK(right == 6);
    CHECK(left == 5);
    // columns line up: both leaders at p = 0
    CHECK(sc.vehicles[0].p0 == 0.0);
    CHECK(sc.vehicles[6].p0 == 0.0);
    // lane midlines fill in when omitted
    CHECK(sc.vehicles[0].py0 == 2.0);
    CHECK(sc.vehicles[6].py0 == 7.0);
}

TEST_CASE("invalid parameter overrides are rejected with a field path") {
    const char* text = R"({
      "schema_version": 1, "duration_s": 1.0,
      "params": {"brake_ratio": 1.0},
      "vehicles": [{"id": 1, "lane": "r", "p0_m": 0.0, "v0_mps": 30.0}]
    })";
    CHECK_THROWS_WITH_AS(load_scenario(text),
                         doctest::Contains("params"), std::invalid_argument);
}

TEST_CASE("schema violations carry the offending path") {
    CHECK_THROWS_WITH_AS(load_scenario("{}"), doctest::Contains("schema_version"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        load_scenario(R"({"schema_version": 1, "duration_s": 1, "vehicles": [{}]})"),
        doctest::Contains("vehicles[0].id"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        load_scenario(
            R"({"schema_version": 1, "duration_s": 1, "vehicles": [], "unknown": 3})"),
        doctest::Contains("unknown"), std::invalid_argument);
}

TEST_CASE("initial states inside the unsafe band are rejected") {
    const char* text = R"({
      "schema_version": 1, "duration_s": 1.0,
      "geometry": {"lane_count": 1},
      "vehicles": [
        {"id": 1, "lane": "r", "p0_m": 0.0, "v0_mps": 20.0},
        {"id": 2, "lane": "r", "p0_m": -6.0, "v0_mps": 30.0}
      ]
    })";
    CHECK_THROWS_WITH_AS(load_scenario(text), doctest::Contains("unsafe"),
                         std::invalid_argument);
}

TEST_CASE("per-lane ordering is enforced") {
    const char* text = R"({
      "schema_version": 1, "duration_s": 1.0,
      "geometry": {"lane_count": 1},
      "vehicles": [
        {"id": 1, "lane": "r", "p0_m": 0.0, "v0_mps": 30.0},
        {"id": 2, "lane": "r", "p0_m": 10.0, "v0_mps": 30.0}
      ]
    })";
    CHECK_THROWS_WITH_AS(load_scenario(text), doctest::Contains("p0_m"),
                         std::invalid_argument);
}

TEST_CASE("serialization round-trips") {
    const Scenario sc = load_scenario_file(scenario_path("table3.json"));
    const std::string once = serialize(sc);
    const Scenario again = load_scenario(once);
    CHECK(serialize(again) == once);
}

TEST_CASE("trace format") {
    Trace trace;
    CHECK(trace_to_csv(trace) == "t,id,hmode,wmode,p,v,py,vy,phi,u,alphaT,leader,events\n");

    TraceRecord r;
    r.t = 0.0;
    r.id = 3;
    r.high = HighMode::Right;
    r.low = LowMode::ClosingIn;
    r.p = -50.0;
    r.v = 30.0;
    r.py = 2.0;
    r.alpha = 1.0;
    r.leader = 2;
    r.events = kEventCross | kEventNewLeader;
    trace.push_back(r);
    const std::string csv = trace_to_csv(trace);
    CHECK(csv ==
          "t,id,hmode,wmode,p,v,py,vy,phi,u,alphaT,leader,events\n"
          "0.000000,3,r,closing,-50.000000,30.000000,2.000000,0.000000,0.000000,"
          "0.000000,1.000000,2,c+nl\n");

    const Trace parsed = read_trace_csv(csv);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].id == 3);
    CHECK(parsed[0].low == LowMode::ClosingIn);
    CHECK(parsed[0].events == (kEventCross | kEventNewLeader));
}

TEST_CASE("trace row count matches samples times vehicles") {
    // 150 s at 0.1 s sampling: 1501 sample instants, five vehicles.
    Trace trace;
    for (int k = 0; k <= 1500; ++k)
        for (int id = 1; id <= 5; ++id) {
            TraceRecord r;
            r.t = 0.1 * k;
            r.id = id;
            trace.push_back(r);
        }
    CHECK(trace.size() == 7505);
    std::ostringstream out;
    const std::size_t bytes = write_trace(trace, out);
    CHECK(bytes == out.str().size());
    // header + one line per record
    std::size_t lines = 0;
    for (char c : out.str())
        if (c == '\n') ++lines;
    CHECK(lines == 7506);
}

TEST_CASE("unwritable destination reports an error") {
    Trace trace;
    CHECK_THROWS_AS(write_trace_file(trace, "/nonexistent-dir/trace.csv"),
                    std::runtime_error);
}

TEST_CASE("summary consistency on a crafted collision scenario") {
    // The leader brakes to a stop while the follower has almost no braking
    // authority; the follower must run through it. Sampled every step, so
    // the trace-derived summary must agree exactly with the engine's.
    const char* text = R"({
      "schema_version": 1, "duration_s": 30.0, "dt_s": 0.01,
      "sample_interval_s": 0.01,
      "geometry": {"lane_count": 1},
      "vehicles": [
        {"id": 1, "lane": "r", "p0_m": 0.0, "v0_mps": 30.0, "v_des_mps": 0.0},
        {"id": 2, "lane": "r", "p0_m": -400.0, "v0_mps": 36.0, "v_des_mps": 36.0,
         "params": {"accel_max_mps2": 0.5, "floor_accel_mps2": 0.01}}
      ]
    })";
    Scenario sc = load_scenario(text);
    Engine engine(sc);
    auto [trace, engine_summary] = engine.run();
    CHECK(engine_summary.collision_episodes >= 1);

    const RunSummary derived = summarize(trace, sc);
    CHECK(derived.collision_episodes == engine_summary.collision_episodes);
    CHECK(derived.collision_pairs == engine_summary.collision_pairs);
    CHECK(derived.min_same_lane_gap ==
          doctest::Approx(engine_summary.min_same_lane_gap));
}
