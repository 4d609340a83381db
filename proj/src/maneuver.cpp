#include "mesoacc/maneuver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mesoacc {

void SampleWindow::push(double t, double value) {
    if (!samples_.empty() && !(t > samples_.back().first))
        throw std::invalid_argument("SampleWindow: timestamps must increase");
    samples_.emplace_back(t, value);
}

void SampleWindow::trim(double t, double keep) {
    const double cutoff = t - keep;
    while (samples_.size() > 1 && samples_[1].first <= cutoff)
        samples_.pop_front();
}

namespace {

// Trapezoid over [lo, t] of f(v) applied to the samples, where f is either
// identity or min(cap, .). The left boundary segment is linearly
// interpolated when lo falls between samples.
template <typename F>
double windowed_trapezoid(const std::deque<std::pair<double, double>>& s,
                          double t, double window, F f) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double lo = t - window;
    const double t0 = s.front().first;
    const double t1 = s.back().first;
    const double span_hi = std::min(t, t1);
    if (s.size() == 1 || span_hi <= t0) return f(s.back().second) * window;

    double start = std::max(lo, t0);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto [ta, va] = s[i];
        const auto [tb, vb] = s[i + 1];
        if (tb <= start) continue;
        double a = std::max(ta, start);
        // Linear interpolation at the clipped left edge.
        double fa = f(va), fb = f(vb);
        if (a > ta) {
            const double w = (a - ta) / (tb - ta);
            fa = f(va + w * (vb - va));
        }
        acc += 0.5 * (fa + fb) * (tb - a);
    }
    const double span = t1 - start;
    if (span <= 0.0) return f(s.back().second) * window;
    if (start > lo) return acc * (window / span); // warm-up extrapolation
    return acc;
}

} // namespace

double SampleWindow::integral_capped(double t, double window, double cap) const {
    return windowed_trapezoid(samples_, t, window,
                              [cap](double v) { return std::min(cap, v); });
}

double SampleWindow::integral(double t, double window) const {
    return windowed_trapezoid(samples_, t, window, [](double v) { return v; });
}

double lane_utility(const SampleWindow& hist, double cap, double window, double t) {
    if (hist.empty()) return cap * window;
    return hist.integral_capped(t, window, cap);
}

double gap_ahead_required(double v_own, double v_ahead, const VehicleParams& p,
                          double delta_p) {
    const double s = p.min_gap();
    if (v_ahead > v_own)
        return s + p.react_coef * (v_own / p.accel_max) * v_ahead + delta_p;
    const double dv = v_ahead - v_own;
    return s +
           (2.0 * p.react_coef * v_own * v_ahead + dv * dv) / (2.0 * p.accel_max) +
           delta_p;
}

double gap_behind_required(double v_own, double v_behind, const VehicleParams& p) {
    const double s = p.min_gap();
    if (v_behind > v_own)
        return s + p.react_coef * (v_own / p.accel_max) * v_behind;
    const double dv = v_behind - v_own;
    return s +
           (2.0 * p.react_coef * v_own * v_behind + dv * dv) / (2.0 * p.accel_max);
}

double lane_change_margin(double v_own, double v_ahead, const VehicleParams& p,
                          const LaneGeometry& g) {
    const double lat_rate = v_own * std::sin(p.steer_mag);
    if (!(lat_rate > 0.0)) return std::numeric_limits<double>::infinity();
    const double duration = (g.y_left - g.y_right) / lat_rate;
    // Distance the ahead vehicle covers if it brakes fully from initiation.
    double braked;
    if (v_ahead >= p.accel_max * duration)
        braked = v_ahead * duration - 0.5 * p.accel_max * duration * duration;
    else
        braked = v_ahead * v_ahead / (2.0 * p.accel_max);
    const double own_travel = v_own * std::cos(p.steer_mag) * duration;
    return std::max(0.0, own_travel - braked);
}

bool lane_change_trigger(const TriggerInputs& in) {
    if (in.steer != 0.0) return false;
    if (in.gap_ahead && in.required_ahead && *in.gap_ahead < *in.required_ahead)
        return false;
    if (in.gap_behind && in.required_behind && *in.gap_behind < *in.required_behind)
        return false;

    const double gain_clause = in.utility_target - in.change_cost;
    if (in.utility_own <= gain_clause) return true;
    if (!in.mesoscopic) return false;
    // Flow-weighted tie-break band: strictly better once weighted, so the
    // fully symmetric case stalls rather than ping-ponging between lanes.
    return in.utility_own <= in.utility_target &&
           in.alpha_own * in.utility_own < in.alpha_target * in.utility_target;
}

std::optional<CrossKind> detect_line_crossing(double y_prev, double y_now,
                                              HighMode h, const LaneGeometry& g) {
    switch (h) {
        case HighMode::CrossLeft:
            if (y_prev < g.y_sep() && y_now >= g.y_sep()) return CrossKind::Separation;
            return std::nullopt;
        case HighMode::CrossRight:
            if (y_prev > g.y_sep() && y_now <= g.y_sep()) return CrossKind::Separation;
            return std::nullopt;
        case HighMode::AlignLeft:
            if (y_prev < g.y_left && y_now >= g.y_left) return CrossKind::Midline;
            return std::nullopt;
        case HighMode::AlignRight:
            if (y_prev > g.y_right && y_now <= g.y_right) return CrossKind::Midline;
            return std::nullopt;
        default:
            return std::nullopt;
    }
}

} // namespace mesoacc
