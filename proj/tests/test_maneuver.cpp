#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mesoacc/maneuver.hpp"

using namespace mesoacc;

namespace {

struct Rng {
    std::uint64_t s;
    double unit() {
        s += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = s;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
    }
    double range(double lo, double hi) { return lo + (hi - lo) * unit(); }
};

SampleWindow constant_history(double value, double t0, double t1, double dt) {
    SampleWindow w;
    for (double t = t0; t <= t1 + 1e-12; t += dt) w.push(t, value);
    return w;
}

} // namespace

TEST_CASE("lane utility of a constant prospect") {
    const SampleWindow w = constant_history(20.0, 0.0, 20.0, 0.1);
    CHECK(lane_utility(w, 30.0, 10.0, 20.0) == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("lane utility clamps at the desired speed") {
    const SampleWindow w = constant_history(36.0, 0.0, 20.0, 0.1);
    CHECK(lane_utility(w, 30.0, 10.0, 20.0) == doctest::Approx(300.0).epsilon(1e-12));
}

TEST_CASE("identical histories yield identical utilities") {
    const SampleWindow a = constant_history(24.0, 0.0, 15.0, 0.05);
    const SampleWindow b = constant_history(24.0, 0.0, 15.0, 0.05);
    CHECK(lane_utility(a, 30.0, 10.0, 15.0) == lane_utility(b, 30.0, 10.0, 15.0));
}

TEST_CASE("empty history stands for an unobstructed lane") {
    SampleWindow w;
    CHECK(lane_utility(w, 30.0, 10.0, 5.0) == doctest::Approx(300.0));
}

TEST_CASE("warm-up extrapolates the partial mean") {
    SampleWindow w = constant_history(20.0, 0.0, 2.0, 0.1); // only 2 s of data
    CHECK(lane_utility(w, 30.0, 10.0, 2.0) == doctest::Approx(200.0).epsilon(1e-9));
}

TEST_CASE("utility respects its bounds") {
    Rng rng{23};
    for (int i = 0; i < 500; ++i) {
        SampleWindow w;
        double t = 0.0;
        for (int k = 0; k < 80; ++k) {
            w.push(t, rng.range(0.0, 36.0));
            t += 0.25;
        }
        const double u = lane_utility(w, 30.0, 10.0, t - 0.25);
        CHECK(u >= -1e-9);
        CHECK(u <= 300.0 + 1e-9);
    }
}

TEST_CASE("required clearance ahead") {
    const VehicleParams p;
    CHECK(gap_ahead_required(24, 26, p, 0.0) == doctest::Approx(29.96).epsilon(1e-12));
    CHECK(gap_ahead_required(24, 24, p, 0.0) == doctest::Approx(28.04).epsilon(1e-12));
    CHECK(gap_ahead_required(0, 0, p, 0.0) == doctest::Approx(5.0));
    CHECK(gap_ahead_required(24, 24, p, 2.5) == doctest::Approx(30.54).epsilon(1e-12));
}

TEST_CASE("required clearance behind") {
    const VehicleParams p;
    CHECK(gap_behind_required(24, 30, p) == doctest::Approx(33.8).epsilon(1e-12));
    CHECK(gap_behind_required(24, 24, p) == doctest::Approx(28.04).epsilon(1e-12));
    CHECK(gap_behind_required(0, 0, p) == doctest::Approx(5.0));
}

TEST_CASE("crossing erosion margin") {
    const VehicleParams p;
    const LaneGeometry g;
    const double duration = 5.0 / (24.0 * std::sin(0.1));
    const double braked = 24.0 * duration - 0.5 * 5.0 * duration * duration;
    const double expect = 24.0 * std::cos(0.1) * duration - braked;
    CHECK(lane_change_margin(24, 24, p, g) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(lane_change_margin(24, 24, p, g) == doctest::Approx(10.66).epsilon(1e-3));

    // a much faster ahead vehicle outruns the erosion entirely
    CHECK(lane_change_margin(5, 36, p, g) == 0.0);

    // a wider steering angle shortens the maneuver and the margin
    VehicleParams steeper = p;
    steeper.steer_mag = 0.2;
    CHECK(lane_change_margin(24, 24, steeper, g) < lane_change_margin(24, 24, p, g));

    // no forward motion: the maneuver cannot be made
    CHECK(std::isinf(lane_change_margin(0, 24, p, g)));
}

namespace {

TriggerInputs base_inputs() {
    TriggerInputs in;
    in.utility_own = 200.0;
    in.utility_target = 250.0;
    in.gap_ahead = 100.0;
    in.required_ahead = 40.0;
    in.gap_behind = 100.0;
    in.required_behind = 40.0;
    in.change_cost = 10.0;
    return in;
}

} // namespace

TEST_CASE("trigger basics") {
    TriggerInputs in = base_inputs();
    CHECK(lane_change_trigger(in));
    in.mesoscopic = true;
    CHECK(lane_change_trigger(in));

    // an ongoing maneuver blocks everything
    in.steer = 0.1;
    CHECK_FALSE(lane_change_trigger(in));

    // insufficient clearance blocks
    in = base_inputs();
    in.gap_ahead = 30.0;
    CHECK_FALSE(lane_change_trigger(in));
    in = base_inputs();
    in.gap_behind = 30.0;
    CHECK_FALSE(lane_change_trigger(in));
}

TEST_CASE("trigger utility band") {
    TriggerInputs in = base_inputs();
    in.utility_own = 245.0;
    in.utility_target = 250.0;

    in.mesoscopic = false;
    in.alpha_own = 1.5;
    in.alpha_target = 1.0;
    CHECK_FALSE(lane_change_trigger(in)); // 245 > 240

    in.mesoscopic = true;
    CHECK_FALSE(lane_change_trigger(in)); // 367.5 > 250

    in.alpha_own = 1.0;
    in.alpha_target = 1.2;
    CHECK(lane_change_trigger(in)); // inside the band and flow-weighted better
    in.mesoscopic = false;
    CHECK_FALSE(lane_change_trigger(in));
}

TEST_CASE("fully symmetric prospects stall") {
    TriggerInputs in = base_inputs();
    in.utility_own = 240.0;
    in.utility_target = 240.0;
    in.alpha_own = 1.0;
    in.alpha_target = 1.0;
    in.mesoscopic = false;
    CHECK_FALSE(lane_change_trigger(in));
    in.mesoscopic = true;
    CHECK_FALSE(lane_change_trigger(in));
}

TEST_CASE("property: the flow-adaptive clause subsumes the local one") {
    Rng rng{29};
    for (int i = 0; i < 50000; ++i) {
        TriggerInputs in;
        in.utility_own = rng.range(0, 300);
        in.utility_target = rng.range(0, 300);
        in.alpha_own = rng.range(0.2, 2.2);
        in.alpha_target = rng.range(0.2, 2.2);
        in.change_cost = 10.0;
        in.mesoscopic = false;
        const bool micro = lane_change_trigger(in);
        in.mesoscopic = true;
        const bool meso = lane_change_trigger(in);
        if (micro) CHECK(meso);
    }
}

TEST_CASE("property: dropping a neighbor never blocks a change") {
    Rng rng{31};
    for (int i = 0; i < 50000; ++i) {
        TriggerInputs in;
        in.utility_own = rng.range(0, 300);
        in.utility_target = rng.range(0, 300);
        in.gap_ahead = rng.range(0, 120);
        in.required_ahead = rng.range(0, 120);
        in.gap_behind = rng.range(0, 120);
        in.required_behind = rng.range(0, 120);
        in.mesoscopic = rng.unit() < 0.5;
        in.alpha_own = rng.range(0.2, 2.2);
        in.alpha_target = rng.range(0.2, 2.2);
        const bool with_both = lane_change_trigger(in);
        TriggerInputs no_ahead = in;
        no_ahead.gap_ahead.reset();
        no_ahead.required_ahead.reset();
        TriggerInputs no_behind = in;
        no_behind.gap_behind.reset();
        no_behind.required_behind.reset();
        if (with_both) {
            CHECK(lane_change_trigger(no_ahead));
            CHECK(lane_change_trigger(no_behind));
        }
    }
}

TEST_CASE("line-crossing detection") {
    const LaneGeometry g;
    CHECK(detect_line_crossing(4.4, 4.6, HighMode::CrossLeft, g) ==
          CrossKind::Separation);
    CHECK_FALSE(detect_line_crossing(4.0, 4.4, HighMode::CrossLeft, g).has_value());
    CHECK(detect_line_crossing(6.9, 7.0, HighMode::AlignLeft, g) == CrossKind::Midline);
    CHECK(detect_line_crossing(4.6, 4.5, HighMode::CrossRight, g) ==
          CrossKind::Separation);
    CHECK(detect_line_crossing(2.1, 2.0, HighMode::AlignRight, g) == CrossKind::Midline);
    CHECK_FALSE(detect_line_crossing(4.4, 4.6, HighMode::Right, g).has_value());
    CHECK_FALSE(detect_line_crossing(4.4, 4.6, HighMode::Left, g).has_value());
}
