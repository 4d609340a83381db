#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace mesoacc {

// Lane-level mode of a vehicle. The legal sequence forms a cycle:
// Right -> CrossLeft -> AlignLeft -> Left -> CrossRight -> AlignRight -> Right.
enum class HighMode { Right, CrossLeft, AlignLeft, Left, CrossRight, AlignRight };

// Car-following regime, decided purely by the gap/speed state of the
// follower relative to its leader.
enum class LowMode { FreeDriving, FollowingI, FollowingII, ClosingIn, Danger, Unsafe };

struct Mode {
    HighMode high = HighMode::Right;
    LowMode low = LowMode::FreeDriving;
};

inline bool is_transfer(HighMode h) {
    return h == HighMode::CrossLeft || h == HighMode::AlignLeft ||
           h == HighMode::CrossRight || h == HighMode::AlignRight;
}

inline HighMode next_in_cycle(HighMode h) {
    switch (h) {
        case HighMode::Right: return HighMode::CrossLeft;
        case HighMode::CrossLeft: return HighMode::AlignLeft;
        case HighMode::AlignLeft: return HighMode::Left;
        case HighMode::Left: return HighMode::CrossRight;
        case HighMode::CrossRight: return HighMode::AlignRight;
        case HighMode::AlignRight: return HighMode::Right;
    }
    return HighMode::Right;
}

const char* to_string(HighMode h);
const char* to_string(LowMode w);
HighMode high_mode_from_string(const std::string& s);
LowMode low_mode_from_string(const std::string& s);

// Follower-centric continuous state. All longitudinal quantities are
// relative to the current leader (real or fictitious).
struct RelativeState {
    double gap = 0.0;        // distance to leader, m (> 0)
    double rel_speed = 0.0;  // leader speed minus own speed, m/s
    double lead_speed = 0.0; // leader speed, m/s
    double lat_pos = 0.0;    // own lateral position, m
    double lat_speed = 0.0;  // own lateral speed, m/s
    double steer = 0.0;      // steering angle, rad; piecewise constant

    double own_speed() const { return lead_speed - rel_speed; }
};

// Per-vehicle constants. Defaults follow the reference parameter set used
// by the bundled scenarios; entries marked (chosen) have no published
// source value and are project defaults.
struct VehicleParams {
    double length_m = 4.5;       // body length L
    double buffer_m = 0.5;       // minimum standstill clearance L0
    double accel_max = 5.0;      // |u| bound, m/s^2
    double brake_ratio = 2.0;    // soft-braking ratio (> 1); soft decel = accel_max / brake_ratio
    double react_coef = 0.2;     // human reaction margin on the risky distance
    double safe_coef = 0.2;      // margin on the safe distance (>= react_coef)
    double approach_coef = 10.0; // approach-awareness gain, m per sqrt(m/s)
    double interact_coef = 0.5;  // interaction-distance gain (chosen; see README notes)
    double interact_time = 20.0; // fixed interaction headway T, s
    double v_des = 30.0;         // desired speed, m/s
    double v_max = 36.0;         // physical speed cap, m/s
    double gain_free = 0.1;      // free-driving speed-tracking gain
    double gain_follow = 0.1;    // far-following stimulus gain
    double gain_closing = 1.0;   // closing-regime kinematic gain
    double floor_accel = 0.1;    // finite-time convergence floor, m/s^2
    double follow_range = 500.0; // far-following range constant G, m
    double steer_mag = 0.1;      // lane-change steering angle, rad (chosen)
    double idm_headway = 1.5;    // desired time headway in transfer regimes, s (chosen)
    double idm_brake = 3.0;      // comfortable braking in transfer regimes, m/s^2 (chosen)
    double idm_gap = 5.0;        // standstill gap in transfer regimes, m (chosen)
    double radio_range = 500.0;  // neighbor visibility radius, m
    double change_cost = 10.0;   // fixed lane-change utility cost, m (chosen)
    double window = 10.0;        // utility averaging window, s (chosen)
    double flow_window = 10.0;   // flow-statistic window, s (chosen, = window by default)
    double alpha_floor = 0.2;    // lower saturation of the headway scale
    double alpha_cap = 2.2;      // upper saturation of the headway scale
    double flow_gain = 4.0;      // sensitivity of the flow integral

    double min_gap() const { return length_m + buffer_m; } // collision threshold s

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

// Stopping-time headways derived from the relative state.
struct Headways {
    double t_emerg = 0.0; // stop the relative speed at full braking
    double t_react = 0.0; // stop the own speed at full braking
    double t_soft = 0.0;  // stop the own speed at soft braking
};

// Gap thresholds that partition the follower state space.
struct Thresholds {
    double emergency = 0.0; // below: collision unavoidable under worst case
    double risky = 0.0;     // adds a human reaction margin
    double safe = 0.0;      // adds a further comfort margin
    double interact = 0.0;  // beyond: the leader can be ignored
    double approach = 0.0;  // awareness of fast approach at short range
};

struct LaneGeometry {
    double y_right = 2.0; // right-lane midline, m
    double y_left = 7.0;  // left-lane midline, m
    int lane_count = 2;   // 1 disables the overtake machinery

    double y_sep() const { return 0.5 * (y_right + y_left); }
    double half_width() const { return 0.5 * (y_left - y_right); }
};

enum class Lane { Right, Left };

inline Lane lane_of(double y, const LaneGeometry& g) {
    return y > g.y_sep() ? Lane::Left : Lane::Right;
}

} // namespace mesoacc
