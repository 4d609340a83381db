#pragma once

#include "mesoacc/types.hpp"

namespace mesoacc {

// Variant switch for the closing-regime law. SignCorrected (default)
// produces a deceleration when approaching a slower leader; Verbatim keeps
// the opposite-sign form, which the floor then caps at the minimum action.
enum class ClosingLaw { SignCorrected, Verbatim };

Headways compute_headways(const RelativeState& x, const VehicleParams& p);

// Thresholds at the given headway scale. The scale stretches the
// reaction/comfort/interaction terms only; the emergency distance and the
// relative-stopping add-on are scale-independent.
Thresholds compute_thresholds(const RelativeState& x, const VehicleParams& p,
                              double alpha_t = 1.0);

struct DomainMatch {
    LowMode mode = LowMode::FreeDriving;
    int match_count = 0;       // how many literal domain predicates held
    bool by_precedence = false; // true when match_count != 1
};

// Evaluates all six domain predicates literally. When the state lies in
// exactly one domain (the generic case), that domain is returned; residual
// boundary states are resolved by fixed precedence Unsafe > Danger >
// ClosingIn > FollowingI > FollowingII > FreeDriving and flagged.
DomainMatch classify_verbose(const RelativeState& x, const Thresholds& th);
LowMode classify_domain(const RelativeState& x, const Thresholds& th);

// State-feedback acceleration for the given mode, clamped to
// [-accel_max, accel_max]. Throws std::logic_error for LowMode::Unsafe,
// which has no law; see Engine for the runtime fallback policy.
double control_accel(Mode mode, const RelativeState& x, const VehicleParams& p,
                     ClosingLaw law = ClosingLaw::SignCorrected);

// Time derivative of the relative state under own control u and leader
// acceleration d.
RelativeState derivative(const RelativeState& x, double u, double d);

// Re-anchors the longitudinal frame to a new leader at distance gap_new
// moving at speed_new; the follower's own speed is preserved.
RelativeState reset_new_leader(const RelativeState& x, double gap_new, double speed_new);

enum class ChangeDirection { ToLeft, ToRight };

// Splits the speed vector at lane-change initiation: the longitudinal
// component shrinks by cos(steer_mag) and the remainder becomes lateral
// speed toward the target lane. Requires steer == 0.
RelativeState reset_lane_exit(const RelativeState& x, const VehicleParams& p,
                              ChangeDirection dir);

// Folds lateral speed back into the longitudinal component when the target
// midline is reached (speed magnitude conserved), and zeroes the steering.
RelativeState reset_midline(const RelativeState& x);

// A (mode, state) pair is a valid initial condition iff the state lies in
// the mode's domain and the mode is not Unsafe.
bool init_check(Mode mode, const RelativeState& x, const Thresholds& th);

} // namespace mesoacc
