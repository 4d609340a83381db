#include "mesoacc/automaton.hpp"

#include <algorithm>
#include <cmath>

namespace mesoacc {

const char* to_string(HighMode h) {
    switch (h) {
        case HighMode::Right: return "r";
        case HighMode::CrossLeft: return "r2l";
        case HighMode::AlignLeft: return "l2l";
        case HighMode::Left: return "l";
        case HighMode::CrossRight: return "l2r";
        case HighMode::AlignRight: return "r2r";
    }
    return "?";
}

const char* to_string(LowMode w) {
    switch (w) {
        case LowMode::FreeDriving: return "free";
        case LowMode::FollowingI: return "follow1";
        case LowMode::FollowingII: return "follow2";
        case LowMode::ClosingIn: return "closing";
        case LowMode::Danger: return "danger";
        case LowMode::Unsafe: return "unsafe";
    }
    return "?";
}

HighMode high_mode_from_string(const std::string& s) {
    if (s == "r") return HighMode::Right;
    if (s == "r2l") return HighMode::CrossLeft;
    if (s == "l2l") return HighMode::AlignLeft;
    if (s == "l") return HighMode::Left;
    if (s == "l2r") return HighMode::CrossRight;
    if (s == "r2r") return HighMode::AlignRight;
    throw std::invalid_argument("unknown high mode: " + s);
}

LowMode low_mode_from_string(const std::string& s) {
    if (s == "free") return LowMode::FreeDriving;
    if (s == "follow1") return LowMode::FollowingI;
    if (s == "follow2") return LowMode::FollowingII;
    if (s == "closing") return LowMode::ClosingIn;
    if (s == "danger") return LowMode::Danger;
    if (s == "unsafe") return LowMode::Unsafe;
    throw std::invalid_argument("unknown low mode: " + s);
}

void VehicleParams::validate() const {
    auto fail = [](const char* what) { throw std::invalid_argument(what); };
    if (!(brake_ratio > 1.0)) fail("params.brake_ratio: must be > 1");
    if (!(safe_coef >= react_coef)) fail("params.safe_coef: must be >= react_coef");
    if (!(floor_accel > 0.0 && floor_accel < accel_max / brake_ratio))
        fail("params.floor_accel: must lie in (0, accel_max/brake_ratio)");
    if (!(accel_max > 0.0)) fail("params.accel_max: must be > 0");
    if (!(follow_range >= radio_range))
        fail("params.follow_range: must be >= radio_range");
    if (!(v_des >= 0.0 && v_des <= v_max)) fail("params.v_des: must lie in [0, v_max]");
    if (!(steer_mag > 0.0 && steer_mag < 1.0)) fail("params.steer_mag: must lie in (0, 1)");
    const double nonneg[] = {length_m, buffer_m, react_coef, approach_coef,
                             interact_coef, interact_time, v_max, gain_free,
                             gain_follow, gain_closing, idm_headway, idm_brake,
                             idm_gap, radio_range, change_cost, window,
                             flow_window, flow_gain};
    for (double v : nonneg)
        if (v < 0.0) fail("params: negative value");
    if (!(alpha_floor > 0.0 && alpha_floor < 1.0 && alpha_cap > 1.0))
        fail("params.alpha bounds: need 0 < alpha_floor < 1 < alpha_cap");
    if (!(window > 0.0 && flow_window > 0.0)) fail("params.window: must be > 0");
}

namespace {
inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
inline double clamp_accel(double u, const VehicleParams& p) {
    return std::clamp(u, -p.accel_max, p.accel_max);
}
} // namespace

Headways compute_headways(const RelativeState& x, const VehicleParams& p) {
    Headways h;
    h.t_emerg = std::abs(x.rel_speed) / p.accel_max;
    h.t_react = std::abs(x.own_speed()) / p.accel_max;
    h.t_soft = p.brake_ratio * h.t_react;
    return h;
}

Thresholds compute_thresholds(const RelativeState& x, const VehicleParams& p,
                              double alpha_t) {
    const Headways h = compute_headways(x, p);
    const double s = p.min_gap();
    const bool closing = x.rel_speed <= 0.0;
    // Relative stopping margin; not stretched by the headway scale.
    const double rel_stop = closing ? 0.5 * p.accel_max * h.t_emerg * h.t_emerg : 0.0;
    const double react_term = p.react_coef * (alpha_t * h.t_react) * x.lead_speed;
    const double safe_term = p.safe_coef * (alpha_t * h.t_soft) * x.lead_speed;

    Thresholds th;
    th.emergency = s + rel_stop;
    th.risky = s + react_term + rel_stop;
    th.safe = s + safe_term + rel_stop;
    th.interact = closing
                      ? s + p.interact_coef * (alpha_t * p.interact_time) * x.own_speed()
                      : s + safe_term;
    th.approach = s + safe_term +
                  (closing ? p.approach_coef * std::sqrt(-x.rel_speed) : 0.0);
    return th;
}

namespace {

// Literal domain predicates. Boundaries follow the printed strict/non-strict
// inequalities; the max/min envelopes leave measure-zero seams which
// classify_verbose resolves by precedence.
bool in_free(const RelativeState& x, const Thresholds& t) {
    if (x.rel_speed >= 0.0) return x.gap > t.safe;
    return x.gap > std::max(t.interact, t.safe);
}
bool in_following1(const RelativeState& x, const Thresholds& t) {
    return x.rel_speed < 0.0 && x.gap > std::max(t.safe, t.approach) &&
           x.gap <= t.interact;
}
bool in_following2(const RelativeState& x, const Thresholds& t) {
    if (x.rel_speed <= 0.0)
        return x.gap > t.safe && x.gap < std::min(t.interact, t.approach);
    return x.gap > t.risky && x.gap <= t.safe;
}
bool in_closing(const RelativeState& x, const Thresholds& t) {
    if (x.rel_speed <= 0.0 && x.gap > t.risky && x.gap <= t.safe) return true;
    return x.rel_speed == 0.0 && x.gap == t.risky;
}
bool in_danger(const RelativeState& x, const Thresholds& t) {
    if (!(x.gap >= t.emergency && x.gap <= t.risky)) return false;
    return !(x.rel_speed == 0.0 && x.gap == t.risky);
}
bool in_unsafe(const RelativeState& x, const Thresholds& t) {
    return x.gap < t.emergency;
}

} // namespace

DomainMatch classify_verbose(const RelativeState& x, const Thresholds& th) {
    const bool hit[6] = {in_free(x, th),     in_following1(x, th),
                         in_following2(x, th), in_closing(x, th),
                         in_danger(x, th),   in_unsafe(x, th)};
    DomainMatch m;
    for (bool h : hit) m.match_count += h ? 1 : 0;
    if (m.match_count == 1) {
        static constexpr LowMode kOrder[6] = {
            LowMode::FreeDriving, LowMode::FollowingI, LowMode::FollowingII,
            LowMode::ClosingIn,   LowMode::Danger,     LowMode::Unsafe};
        for (int i = 0; i < 6; ++i)
            if (hit[i]) m.mode = kOrder[i];
        return m;
    }
    m.by_precedence = true;
    if (hit[5]) m.mode = LowMode::Unsafe;
    else if (hit[4]) m.mode = LowMode::Danger;
    else if (hit[3]) m.mode = LowMode::ClosingIn;
    else if (hit[1]) m.mode = LowMode::FollowingI;
    else if (hit[2]) m.mode = LowMode::FollowingII;
    else if (hit[0]) m.mode = LowMode::FreeDriving;
    else {
        // Gap seam between domains: place by distance ordering.
        if (x.gap < th.emergency) m.mode = LowMode::Unsafe;
        else if (x.gap <= th.risky) m.mode = LowMode::Danger;
        else if (x.gap <= th.safe) m.mode = LowMode::ClosingIn;
        else if (x.gap <= th.interact) m.mode = LowMode::FollowingI;
        else m.mode = LowMode::FreeDriving;
    }
    return m;
}

LowMode classify_domain(const RelativeState& x, const Thresholds& th) {
    return classify_verbose(x, th).mode;
}

namespace {

double desired_gap_transfer(double own, const VehicleParams& p) {
    return p.idm_gap + own * p.idm_headway +
           own / (2.0 * std::sqrt(p.accel_max * p.idm_brake));
}

double accel_free_lane_keep(const RelativeState& x, const VehicleParams& p) {
    // Proportional speed tracking with a floor that yields finite-time
    // convergence; the floor acts symmetrically on both sides of v_des.
    const double err = p.v_des - x.own_speed();
    const double prop = p.gain_free * err;
    if (std::abs(prop) >= p.floor_accel) return prop;
    return p.floor_accel * sgn(err);
}

double accel_free_transfer(const RelativeState& x, const VehicleParams& p) {
    const double r = x.own_speed() / p.v_des;
    return p.accel_max * (1.0 - r * r * r * r);
}

double accel_follow_lane_keep(const RelativeState& x, const VehicleParams& p) {
    // Stimulus-response following. The range term is positive over the
    // whole following domain; the guard only protects the fictitious-anchor
    // corner where gap == follow_range.
    const double range = std::max(p.follow_range - x.gap, 1e-6);
    return p.gain_follow * (p.v_des + x.rel_speed) * x.own_speed() / range;
}

double accel_follow_transfer(const RelativeState& x, const VehicleParams& p) {
    const double r = x.own_speed() / p.v_des;
    const double sg = desired_gap_transfer(x.own_speed(), p) / x.gap;
    return p.accel_max * (1.0 - r * r * r * r - sg * sg);
}

double accel_closing_lane_keep(const RelativeState& x, const VehicleParams& p,
                               ClosingLaw law) {
    const double own = x.own_speed();
    const double lead = x.lead_speed;
    const double denom =
        2.0 * (x.gap + p.min_gap() +
               (p.safe_coef * p.brake_ratio / p.accel_max) * lead * lead);
    double kin = p.gain_closing * (lead * lead - own * own) / denom;
    if (law == ClosingLaw::Verbatim) kin = -kin;
    return std::min(kin, p.floor_accel * sgn(x.rel_speed));
}

double accel_closing_transfer(const RelativeState& x, const VehicleParams& p) {
    const double sg = desired_gap_transfer(x.own_speed(), p) / x.gap;
    return -p.accel_max * sg * sg;
}

} // namespace

double control_accel(Mode mode, const RelativeState& x, const VehicleParams& p,
                     ClosingLaw law) {
    const bool transfer = is_transfer(mode.high);
    double u = 0.0;
    switch (mode.low) {
        case LowMode::FreeDriving:
            u = transfer ? accel_free_transfer(x, p) : accel_free_lane_keep(x, p);
            break;
        case LowMode::FollowingI:
            u = transfer ? accel_follow_transfer(x, p) : accel_follow_lane_keep(x, p);
            break;
        case LowMode::FollowingII:
            u = 0.0;
            break;
        case LowMode::ClosingIn:
            u = transfer ? accel_closing_transfer(x, p)
                         : accel_closing_lane_keep(x, p, law);
            break;
        case LowMode::Danger:
            u = -p.accel_max;
            break;
        case LowMode::Unsafe:
            throw std::logic_error("control_accel: no law for the unsafe regime");
    }
    return clamp_accel(u, p);
}

RelativeState derivative(const RelativeState& x, double u, double d) {
    RelativeState dx;
    dx.gap = x.rel_speed;
    dx.rel_speed = d - u * std::cos(x.steer);
    dx.lead_speed = d;
    dx.lat_pos = x.lat_speed;
    dx.lat_speed = -u * std::sin(x.steer);
    dx.steer = 0.0;
    return dx;
}

RelativeState reset_new_leader(const RelativeState& x, double gap_new,
                               double speed_new) {
    if (!(gap_new > 0.0))
        throw std::invalid_argument("reset_new_leader: gap must be positive");
    RelativeState r = x;
    r.gap = gap_new;
    r.rel_speed = speed_new - x.own_speed();
    r.lead_speed = speed_new;
    return r;
}

RelativeState reset_lane_exit(const RelativeState& x, const VehicleParams& p,
                              ChangeDirection dir) {
    if (x.steer != 0.0)
        throw std::logic_error("reset_lane_exit: maneuver already in progress");
    const double c = std::cos(p.steer_mag);
    const double s = std::sin(p.steer_mag);
    const double own = x.own_speed();
    RelativeState r = x;
    r.rel_speed = c * x.rel_speed + (1.0 - c) * x.lead_speed;
    if (dir == ChangeDirection::ToLeft) {
        r.lat_speed = s * own;
        r.steer = -p.steer_mag;
    } else {
        r.lat_speed = -s * own;
        r.steer = p.steer_mag;
    }
    return r;
}

RelativeState reset_midline(const RelativeState& x) {
    RelativeState r = x;
    const double own = x.own_speed();
    r.rel_speed = x.lead_speed - std::sqrt(own * own + x.lat_speed * x.lat_speed);
    r.lat_speed = 0.0;
    r.steer = 0.0;
    return r;
}

bool init_check(Mode mode, const RelativeState& x, const Thresholds& th) {
    if (mode.low == LowMode::Unsafe) return false;
    return classify_domain(x, th) == mode.low;
}

} // namespace mesoacc
