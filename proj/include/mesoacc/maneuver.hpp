#pragma once

#include <deque>
#include <optional>

#include "mesoacc/types.hpp"

namespace mesoacc {

// Append-only window of timestamped samples. Supports exact trapezoidal
// integration over a trailing window; while the buffer is still shorter
// than the window the partial mean is extrapolated to the full span.
class SampleWindow {
public:
    void push(double t, double value);
    void clear() { samples_.clear(); }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }

    // Integral of min(cap, v(tau)) over [t - window, t] via the trapezoidal
    // rule on the stored samples, with the warm-up extrapolation above.
    double integral_capped(double t, double window, double cap) const;

    // Same, without a cap.
    double integral(double t, double window) const;

    // Drops samples strictly older than t - keep (keeps one for boundary
    // interpolation).
    void trim(double t, double keep);

private:
    std::deque<std::pair<double, double>> samples_;
};

// Short-term utility of a lane: integral of the capped prospect speed over
// the trailing window. An empty history stands for an unobstructed lane and
// yields cap * window.
double lane_utility(const SampleWindow& hist, double cap, double window, double t);

// Required clearance to the vehicle ahead in the target lane, including the
// maneuver-erosion margin delta_p.
double gap_ahead_required(double v_own, double v_ahead, const VehicleParams& p,
                          double delta_p);

// Required clearance to the vehicle behind in the target lane.
double gap_behind_required(double v_own, double v_behind, const VehicleParams& p);

// Worst-case gap erosion while crossing: the distance lost to the ahead
// vehicle if it brakes fully at initiation, over the duration of the lateral
// motion. Returns +inf when the maneuver cannot progress (v_own <= 0).
double lane_change_margin(double v_own, double v_ahead, const VehicleParams& p,
                          const LaneGeometry& g);

struct TriggerInputs {
    double utility_own = 0.0;
    double utility_target = 0.0;
    // Absent neighbor => no gap requirement on that side.
    std::optional<double> gap_ahead;
    std::optional<double> required_ahead;
    std::optional<double> gap_behind;
    std::optional<double> required_behind;
    double steer = 0.0;
    double alpha_own = 1.0;
    double alpha_target = 1.0;
    double change_cost = 10.0;
    bool mesoscopic = false;
};

// Lane-change decision. The mesoscopic variant widens the utility clause
// with a flow-weighted comparison; the tie case (equal utilities and equal
// flow scales) deliberately does not fire.
bool lane_change_trigger(const TriggerInputs& in);

enum class CrossKind { Separation, Midline };

// Reports a line crossing between two consecutive lateral positions, for
// the line relevant to the current transfer mode. Lane-keeping modes never
// report.
std::optional<CrossKind> detect_line_crossing(double y_prev, double y_now,
                                              HighMode h, const LaneGeometry& g);

} // namespace mesoacc
