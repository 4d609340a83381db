#include "mesoacc/cluster.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mesoacc {

bool allowed_state_transition(LowMode from, LowMode to) {
    using W = LowMode;
    if (from == to) return true;
    switch (from) {
        case W::FreeDriving:
            return to == W::FollowingI || to == W::FollowingII || to == W::ClosingIn;
        case W::FollowingI:
            return to == W::FreeDriving || to == W::FollowingII || to == W::ClosingIn;
        case W::FollowingII:
            return to == W::FreeDriving || to == W::FollowingI || to == W::ClosingIn ||
                   to == W::Danger;
        case W::ClosingIn:
            return to == W::FreeDriving || to == W::FollowingI || to == W::FollowingII ||
                   to == W::Danger;
        case W::Danger:
            return to == W::FollowingII || to == W::ClosingIn;
        case W::Unsafe:
            return false;
    }
    return false;
}

bool occupies_lane(double py, HighMode high, Lane lane, const LaneGeometry& g) {
    if (lane_of(py, g) == lane) return true;
    return is_transfer(high) && std::abs(py - g.y_sep()) < g.half_width();
}

NeighborSet neighborhood(const Snapshot& s, int self, double radio_range) {
    NeighborSet out;
    const VehicleView& me = s.vehicles[static_cast<std::size_t>(self)];
    double best_m = std::numeric_limits<double>::infinity();
    double best_i = std::numeric_limits<double>::infinity();
    double best_j = std::numeric_limits<double>::infinity();
    for (int k = 0; k < static_cast<int>(s.vehicles.size()); ++k) {
        if (k == self) continue;
        const VehicleView& o = s.vehicles[static_cast<std::size_t>(k)];
        const double d = o.p - me.p;
        if (std::abs(d) > radio_range) continue;
        if (o.lane == me.lane) {
            if (d > 0.0 && d < best_m) {
                best_m = d;
                out.ahead_same = k;
            }
        } else {
            if (d < 0.0 && -d < best_i) {
                best_i = -d;
                out.behind_other = k;
            }
            if (d >= 0.0 && d < best_j) {
                best_j = d;
                out.ahead_other = k;
            }
        }
    }
    return out;
}

int resolve_leader(const Snapshot& s, int self, double radio_range) {
    const NeighborSet nb = neighborhood(s, self, radio_range);
    if (nb.ahead_same == kNoVehicle) return kNoVehicle;
    if (nb.ahead_other == kNoVehicle) return nb.ahead_same;
    const VehicleView& me = s.vehicles[static_cast<std::size_t>(self)];
    const VehicleView& j = s.vehicles[static_cast<std::size_t>(nb.ahead_other)];
    if (!is_transfer(j.high)) return nb.ahead_same;
    const VehicleView& m = s.vehicles[static_cast<std::size_t>(nb.ahead_same)];
    return (j.p - me.p) < (m.p - me.p) ? nb.ahead_other : nb.ahead_same;
}

Engine::Engine(Scenario sc) : sc_(std::move(sc)) {
    if (!(sc_.dt > 0.0)) throw std::invalid_argument("scenario.dt_s: must be > 0");
    if (sc_.sample_interval + 1e-12 < sc_.dt)
        throw std::invalid_argument("scenario.sample_interval_s: must be >= dt");
    sample_every_ = std::llround(sc_.sample_interval / sc_.dt);
    if (std::abs(static_cast<double>(sample_every_) * sc_.dt - sc_.sample_interval) >
        1e-9)
        throw std::invalid_argument(
            "scenario.sample_interval_s: must be an integer multiple of dt");

    std::set<int> ids;
    std::map<Lane, double> last_p;
    for (const VehicleSpec& v : sc_.vehicles) {
        v.params.validate();
        if (!ids.insert(v.id).second)
            throw std::invalid_argument("vehicles: duplicate id " + std::to_string(v.id));
        if (sc_.geometry.lane_count < 2 && v.lane == Lane::Left)
            throw std::invalid_argument("vehicles[" + std::to_string(v.id) +
                                        "].lane: left lane not present");
        if (lane_of(v.py0, sc_.geometry) != v.lane)
            throw std::invalid_argument("vehicles[" + std::to_string(v.id) +
                                        "].py0_m: inconsistent with lane");
        auto it = last_p.find(v.lane);
        if (it != last_p.end() && !(v.p0 < it->second))
            throw std::invalid_argument(
                "vehicles[" + std::to_string(v.id) +
                "].p0_m: per-lane positions must strictly decrease");
        last_p[v.lane] = v.p0;
        if (!(v.v0 >= 0.0 && v.v0 <= v.params.v_max))
            throw std::invalid_argument("vehicles[" + std::to_string(v.id) +
                                        "].v0_mps: outside [0, v_max]");

        VehicleRuntime r;
        r.spec = v;
        r.p = v.p0;
        r.v = v.v0;
        r.py = v.py0;
        r.py_prev = v.py0;
        r.vy = v.vy0;
        r.steer = v.steer0;
        r.high = v.high0;
        r.v_des = v.v_des0;
        r.spec.params.v_des = v.v_des0;
        fleet_.push_back(std::move(r));
    }
    switch_buckets_.assign(fleet_.size(), {});

    // Resolve initial leaders, build relative frames, and check that every
    // vehicle starts inside a valid (non-unsafe) regime.
    const Snapshot snap = make_snapshot();
    for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) {
        VehicleRuntime& n = fleet_[static_cast<std::size_t>(i)];
        const int lead = resolve_leader(snap, i, n.spec.params.radio_range);
        n.leader_id = lead == kNoVehicle
                          ? kFictitiousLeader
                          : snap.vehicles[static_cast<std::size_t>(lead)].id;
        rebuild_relative(n, snap);
        const Thresholds th = compute_thresholds(n.x, n.spec.params, 1.0);
        n.low = classify_domain(n.x, th);
        if (!init_check({n.high, n.low}, n.x, th))
            throw std::invalid_argument("vehicles[" + std::to_string(n.spec.id) +
                                        "]: initial state is in the unsafe regime");
        summary_.switches[n.spec.id] = SwitchStat{};
        summary_.lane_changes_completed[n.spec.id] = 0;
        summary_.accel_sign_changes[n.spec.id] = 0;
        summary_.decel_onset[n.spec.id] = std::nullopt;
        summary_.convergence_time[n.spec.id] = std::nullopt;
    }
    summary_.min_same_lane_gap = std::numeric_limits<double>::infinity();
}

Snapshot Engine::make_snapshot() const {
    Snapshot s;
    s.geometry = sc_.geometry;
    s.vehicles.reserve(fleet_.size());
    for (const VehicleRuntime& n : fleet_) {
        VehicleView v;
        v.id = n.spec.id;
        v.p = n.p;
        v.v = n.v;
        v.py = n.py;
        v.lane = n.lane(sc_.geometry);
        v.high = n.high;
        s.vehicles.push_back(v);
    }
    return s;
}

void Engine::apply_schedule(VehicleRuntime& n, double t) {
    while (n.sched_next < n.spec.schedule.size() &&
           n.spec.schedule[n.sched_next].t <= t + 1e-12) {
        n.v_des = n.spec.schedule[n.sched_next].v_des;
        n.spec.params.v_des = n.v_des;
        ++n.sched_next;
    }
}

void Engine::rebuild_relative(VehicleRuntime& n, const Snapshot& snap) {
    n.x.lat_pos = n.py;
    n.x.lat_speed = n.vy;
    n.x.steer = n.steer;
    if (n.leader_id == kFictitiousLeader) {
        // Fictitious anchor: held at the visibility radius each step, moving
        // at the desired speed, never integrated.
        n.x.gap = n.spec.params.radio_range;
        n.x.lead_speed = n.v_des;
        n.x.rel_speed = n.v_des - n.v;
        return;
    }
    for (const VehicleView& o : snap.vehicles) {
        if (o.id == n.leader_id) {
            n.x.gap = o.p - n.p;
            n.x.lead_speed = o.v;
            n.x.rel_speed = o.v - n.v;
            return;
        }
    }
    throw std::logic_error("rebuild_relative: leader not in snapshot");
}

int Engine::index_in(const Snapshot& s, int id) {
    for (int i = 0; i < static_cast<int>(s.vehicles.size()); ++i)
        if (s.vehicles[static_cast<std::size_t>(i)].id == id) return i;
    return kNoVehicle;
}

void Engine::update_flow_and_histories(VehicleRuntime& n, const Snapshot& info,
                                       double t) {
    const VehicleParams& p = n.spec.params;
    // Own-lane prospect: the resolved leader's current speed (sensor data).
    n.lead_hist.push(t, n.leader_id == kFictitiousLeader ? n.v_des : n.x.lead_speed);
    n.lead_hist.trim(t, p.window + 1.0);

    if (sc_.geometry.lane_count >= 2) {
        const NeighborSet nb = neighborhood(info, index_in(info, n.spec.id), p.radio_range);
        const double target_v =
            nb.ahead_other == kNoVehicle
                ? p.v_max
                : info.vehicles[static_cast<std::size_t>(nb.ahead_other)].v;
        n.target_hist.push(t, target_v);
        n.target_hist.trim(t, p.window + 1.0);
    }

    if (!sc_.flags.mesoscopic) {
        n.alpha = sc_.flags.alpha_override.value_or(1.0);
        return;
    }
    // Ahead sets per lane from the (possibly delayed) broadcast view.
    const Lane own_lane = n.lane(sc_.geometry);
    std::vector<double> own_speeds, target_speeds;
    for (const VehicleView& o : info.vehicles) {
        if (o.id == n.spec.id) continue;
        const double d = o.p - n.p;
        if (d <= 0.0 || d > p.radio_range) continue;
        (o.lane == own_lane ? own_speeds : target_speeds).push_back(o.v);
    }
    n.flow_own.update(t, own_speeds, n.v, p);
    n.flow_target.update(t, target_speeds, n.v, p);
    n.alpha = sc_.flags.alpha_override.value_or(n.flow_own.alpha);
}

bool Engine::evaluate_lane_exit(VehicleRuntime& n, const Snapshot& info, double t) {
    if (sc_.geometry.lane_count < 2) return false;
    if (n.high != HighMode::Right && n.high != HighMode::Left) return false;
    if (n.steer != 0.0) return false;
    const VehicleParams& p = n.spec.params;
    const NeighborSet nb = neighborhood(info, index_in(info, n.spec.id), p.radio_range);

    TriggerInputs in;
    in.utility_own = lane_utility(n.lead_hist, n.v_des, p.window, t);
    in.utility_target = lane_utility(n.target_hist, n.v_des, p.window, t);
    in.steer = n.steer;
    in.change_cost = p.change_cost;
    in.mesoscopic = sc_.flags.meso_trigger_override.value_or(sc_.flags.mesoscopic);
    in.alpha_own = n.alpha;
    in.alpha_target = sc_.flags.mesoscopic
                          ? sc_.flags.alpha_override.value_or(n.flow_target.alpha)
                          : 1.0;
    if (nb.ahead_other != kNoVehicle) {
        const VehicleView& j = info.vehicles[static_cast<std::size_t>(nb.ahead_other)];
        in.gap_ahead = j.p - n.p;
        in.required_ahead =
            gap_ahead_required(n.v, j.v, p, lane_change_margin(n.v, j.v, p, sc_.geometry));
    }
    if (nb.behind_other != kNoVehicle) {
        const VehicleView& i = info.vehicles[static_cast<std::size_t>(nb.behind_other)];
        in.gap_behind = n.p - i.p;
        in.required_behind = gap_behind_required(n.v, i.v, p);
    }
    return lane_change_trigger(in);
}

void Engine::monitor_equilibrium(VehicleRuntime& n, const Thresholds& th, double t) {
    const bool lateral_ok = std::abs(n.vy) <= 1e-6 && n.steer == 0.0;
    bool inside = false;
    if (lateral_ok) {
        if (std::abs(n.v - n.v_des) <= 0.1) inside = true;
        else if (n.leader_id != kFictitiousLeader && std::abs(n.x.rel_speed) <= 0.1 &&
                 n.x.gap >= th.risky - 0.5 && n.x.gap <= th.safe + 0.5)
            inside = true;
    }
    if (!inside) n.last_outside_equilibrium = t;
}

void Engine::monitor_collisions() {
    const LaneGeometry& g = sc_.geometry;
    const std::size_t n = fleet_.size();
    std::vector<std::pair<int, int>> now;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const VehicleRuntime& va = fleet_[a];
            const VehicleRuntime& vb = fleet_[b];
            auto occupies = [&](const VehicleRuntime& r, Lane lane) {
                return occupies_lane(r.py, r.high, lane, g);
            };
            const bool share = (occupies(va, Lane::Right) && occupies(vb, Lane::Right)) ||
                               (occupies(va, Lane::Left) && occupies(vb, Lane::Left));
            if (!share) continue;
            const double gap = std::abs(va.p - vb.p);
            const VehicleRuntime& behind = va.p < vb.p ? va : vb;
            const VehicleRuntime& ahead = va.p < vb.p ? vb : va;
            const auto key = std::make_pair(behind.spec.id, ahead.spec.id);
            auto it = summary_.min_gap_by_pair.find(key);
            if (it == summary_.min_gap_by_pair.end())
                summary_.min_gap_by_pair[key] = gap;
            else
                it->second = std::min(it->second, gap);
            summary_.min_same_lane_gap = std::min(summary_.min_same_lane_gap, gap);
            const double s = std::max(va.spec.params.min_gap(), vb.spec.params.min_gap());
            if (gap <= s) now.push_back(key);
        }
    }
    std::sort(now.begin(), now.end());
    for (const auto& pr : now) {
        if (!std::binary_search(colliding_pairs_.begin(), colliding_pairs_.end(), pr)) {
            ++summary_.collision_episodes;
            summary_.collision_pairs.push_back(pr);
            if (sc_.flags.fail_fast) aborted_ = true;
        }
    }
    colliding_pairs_ = std::move(now);
}

void Engine::step(Trace* trace) {
    const double t = time();
    const double dt = sc_.dt;

    history_.push_back(make_snapshot());
    const std::size_t depth =
        static_cast<std::size_t>(std::max(0, sc_.flags.info_delay_steps)) + 1;
    while (history_.size() > depth) history_.pop_front();
    const Snapshot& snap = history_.back();
    const Snapshot& info = history_.front(); // delayed view (== snap when delay 0)

    monitor_collisions();

    for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) {
        VehicleRuntime& n = fleet_[static_cast<std::size_t>(i)];
        const VehicleParams& p = n.spec.params;
        std::uint8_t events = 0;
        bool reanchored = false;

        apply_schedule(n, t);

        // Line crossings completed during the previous integration step.
        if (auto kind = detect_line_crossing(n.py_prev, n.py, n.high, sc_.geometry)) {
            n.high = next_in_cycle(n.high);
            events |= kEventCross;
            if (*kind == CrossKind::Separation) {
                // The vehicle now geometrically belongs to the target lane;
                // re-anchor onto that lane's leader.
                const int lead = resolve_leader(snap, i, p.radio_range);
                n.leader_id = lead == kNoVehicle
                                  ? kFictitiousLeader
                                  : snap.vehicles[static_cast<std::size_t>(lead)].id;
                reanchored = true;
            } else {
                // Target midline reached: fold the lateral speed back into
                // the longitudinal component and straighten out.
                n.v = std::min(std::hypot(n.v, n.vy), p.v_max);
                n.vy = 0.0;
                n.steer = 0.0;
                ++summary_.lane_changes_completed[n.spec.id];
            }
        }

        // Leader identity tracking (a crossing that re-anchored already
        // accounts for the change).
        if (!reanchored) {
            const int lead = resolve_leader(snap, i, p.radio_range);
            const int lead_id = lead == kNoVehicle
                                    ? kFictitiousLeader
                                    : snap.vehicles[static_cast<std::size_t>(lead)].id;
            if (lead_id != n.leader_id) {
                n.leader_id = lead_id;
                events |= kEventNewLeader;
                if (n.last_leader_swap >= 0.0) {
                    const double dwell = t - n.last_leader_swap;
                    if (!summary_.min_leader_dwell || dwell < *summary_.min_leader_dwell)
                        summary_.min_leader_dwell = dwell;
                    if (dwell < 2.0 * dt - 1e-12) summary_.leader_dwell_flag = true;
                }
                n.last_leader_swap = t;
            }
        }

        rebuild_relative(n, snap);
        update_flow_and_histories(n, info, t);

        // Lane-change initiation.
        if (evaluate_lane_exit(n, info, t)) {
            const ChangeDirection dir = n.high == HighMode::Right
                                            ? ChangeDirection::ToLeft
                                            : ChangeDirection::ToRight;
            n.high = next_in_cycle(n.high);
            events |= kEventLaneExit;
            summary_.lane_exit_times[n.spec.id].push_back(t);
            const double sgn = dir == ChangeDirection::ToLeft ? 1.0 : -1.0;
            n.vy = sgn * std::sin(p.steer_mag) * n.v;
            n.v *= std::cos(p.steer_mag);
            n.steer = -sgn * p.steer_mag;
            rebuild_relative(n, snap);
        }

        // Regime classification after all resets.
        const Thresholds th = compute_thresholds(n.x, p, n.alpha);
        const LowMode next_low = classify_domain(n.x, th);
        if (next_low != n.low) {
            SwitchStat& st = summary_.switches[n.spec.id];
            ++st.count;
            auto& buckets = switch_buckets_[static_cast<std::size_t>(i)];
            const std::size_t sec = static_cast<std::size_t>(std::max(0.0, t));
            if (buckets.size() <= sec) buckets.resize(sec + 1, 0);
            ++buckets[sec];
            st.max_per_second = std::max(st.max_per_second, buckets[sec]);
            if (events == 0 && !allowed_state_transition(n.low, next_low))
                ++st.conformance_violations;
        }
        if (next_low == LowMode::Unsafe) ++summary_.unsafe_regime_steps;
        n.low = next_low;

        // Control. The unsafe regime has no law; full braking is the only
        // sensible continuation and the occurrence is already counted.
        double u;
        if (n.low == LowMode::Unsafe) {
            u = -p.accel_max;
        } else {
            u = control_accel({n.high, n.low}, n.x, p, sc_.flags.closing_law);
        }
        // Discrete realization of the finite-time floor: land exactly on the
        // target inside one step instead of dithering around it.
        if (n.low == LowMode::FreeDriving && !is_transfer(n.high)) {
            const double err = n.v_des - n.v;
            if (std::abs(err) <= p.floor_accel * dt) u = err / dt;
        }
        if (n.prev_u * u < 0.0) ++summary_.accel_sign_changes[n.spec.id];
        n.prev_u = u;
        n.u = u;

        // Sustained-braking onset.
        if (u < -0.2) {
            if (n.decel_run_start < 0.0) n.decel_run_start = t;
            if (t - n.decel_run_start >= 1.0 - 1e-9 && !summary_.decel_onset[n.spec.id])
                summary_.decel_onset[n.spec.id] = n.decel_run_start;
        } else {
            n.decel_run_start = -1.0;
        }

        monitor_equilibrium(n, th, t);

        if (trace) {
            TraceRecord rec;
            rec.t = t;
            rec.id = n.spec.id;
            rec.high = n.high;
            rec.low = n.low;
            rec.p = n.p;
            rec.v = n.v;
            rec.py = n.py;
            rec.vy = n.vy;
            rec.steer = n.steer;
            rec.u = n.u;
            rec.alpha = n.alpha;
            rec.leader = n.leader_id;
            rec.events = events;
            trace->push_back(rec);
        }
    }

    // Synchronous explicit-Euler integration from the step-start values.
    for (VehicleRuntime& n : fleet_) {
        const VehicleParams& p = n.spec.params;
        n.py_prev = n.py;
        n.p += n.v * dt;
        n.py += n.vy * dt;
        double v_next = n.v + n.u * std::cos(n.steer) * dt;
        n.vy += -n.u * std::sin(n.steer) * dt;
        if (v_next < 0.0) {
            v_next = 0.0;
            n.vy = 0.0;
        } else if (v_next > p.v_max) {
            v_next = p.v_max;
        }
        n.v = v_next;
    }
    ++step_index_;
}

std::pair<Trace, RunSummary> Engine::run() {
    const auto wall0 = std::chrono::steady_clock::now();
    const long long steps = std::llround(sc_.duration / sc_.dt);
    Trace trace;
    trace.reserve(
        static_cast<std::size_t>(steps / std::max<long long>(sample_every_, 1) + 2) *
        fleet_.size());

    for (long long k = 0; k <= steps; ++k) {
        const bool record = (k % sample_every_) == 0;
        step(record ? &trace : nullptr);
        if (aborted_) break;
    }

    const double horizon = static_cast<double>(steps) * sc_.dt;
    for (const VehicleRuntime& n : fleet_) {
        std::optional<double> conv;
        if (n.last_outside_equilibrium < 0.0) conv = 0.0;
        else if (n.last_outside_equilibrium < horizon - 1e-12)
            conv = n.last_outside_equilibrium + sc_.dt;
        summary_.convergence_time[n.spec.id] = conv;
    }
    summary_.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return {std::move(trace), summary_};
}

} // namespace mesoacc
