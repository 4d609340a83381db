#include "mesoacc/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "mesoacc/automaton.hpp"
#include "mesoacc/cluster.hpp"

namespace mesoacc {

namespace {

// splitmix64: portable, bit-stable across platforms.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

} // namespace

PartitionReport partition_check(long long count, const VehicleParams& p,
                                std::uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("partition_check: count must be > 0");
    Rng rng(seed);
    PartitionReport rep;
    rep.samples = count;
    for (long long i = 0; i < count; ++i) {
        RelativeState x;
        x.gap = 1000.0 * (1.0 - rng.next_unit());
        x.rel_speed = -p.v_max + 2.0 * p.v_max * rng.next_unit();
        x.lead_speed = p.v_max * rng.next_unit();
        const Thresholds th = compute_thresholds(x, p, 1.0);
        const DomainMatch m = classify_verbose(x, th);
        if (m.match_count == 1) {
            ++rep.matched_exactly_one;
        } else {
            ++rep.resolved_by_precedence;
            if (rep.offenders.size() < 16) rep.offenders.push_back(x);
        }
    }
    return rep;
}

bool kinematically_doomed(const RelativeState& start, const VehicleParams& p) {
    if (start.rel_speed >= 0.0) return false;
    // Best response is immediate full braking; the gap still erodes by the
    // closing speed until the leader stops, plus the relative-speed margin.
    const double erosion = (2.0 * start.lead_speed * (-start.rel_speed) +
                            start.rel_speed * start.rel_speed) /
                           (2.0 * p.accel_max);
    return start.gap - p.min_gap() < erosion;
}

namespace {

struct OracleState {
    double gap, rel, lead; // own speed = lead - rel
    double own() const { return lead - rel; }
};

LowMode oracle_mode(const OracleState& s, const VehicleParams& p, double alpha) {
    RelativeState x;
    x.gap = s.gap;
    x.rel_speed = s.rel;
    x.lead_speed = s.lead;
    return classify_domain(x, compute_thresholds(x, p, alpha));
}

double oracle_control(LowMode mode, const OracleState& s, const VehicleParams& p) {
    if (mode == LowMode::Unsafe) return -p.accel_max; // no law; brake fully
    RelativeState x;
    x.gap = s.gap;
    x.rel_speed = s.rel;
    x.lead_speed = s.lead;
    return control_accel({HighMode::Right, mode}, x, p);
}

OracleState advance(const OracleState& s, double h, double u, double d) {
    OracleState n;
    n.gap = s.gap + s.rel * h + 0.5 * (d - u) * h * h;
    n.rel = s.rel + (d - u) * h;
    n.lead = s.lead + d * h;
    return n;
}

// Minimum of the gap quadratic over [0, h].
double min_gap_over(const OracleState& s, double h, double u, double d) {
    double lo = std::min(s.gap, advance(s, h, u, d).gap);
    const double a = 0.5 * (d - u);
    if (a > 0.0) {
        const double t_star = -s.rel / (2.0 * a);
        if (t_star > 0.0 && t_star < h) lo = std::min(lo, advance(s, t_star, u, d).gap);
    }
    return lo;
}

} // namespace

double brake_trajectory_min_gap(const RelativeState& start, const VehicleParams& p,
                                double alpha) {
    OracleState s{start.gap, start.rel_speed, start.lead_speed};
    double min_gap = s.gap;
    const double dt = 0.005;
    double t = 0.0;
    const double t_max = 600.0;

    while (t < t_max) {
        if (s.lead <= 1e-12 && s.own() <= 1e-12) break; // both at rest
        if (min_gap < -50.0) break;                     // deep overlap; enough

        const LowMode mode = oracle_mode(s, p, alpha);
        double u = oracle_control(mode, s, p);
        const double d = s.lead > 1e-12 ? -p.accel_max : 0.0;
        if (s.own() <= 1e-12 && u < 0.0) u = 0.0; // cannot reverse

        double h = dt;
        if (d < 0.0) h = std::min(h, s.lead / p.accel_max);   // leader stop
        if (u < 0.0) h = std::min(h, s.own() / (-u));         // own stop
        h = std::max(h, 1e-9);

        // Bisect the first regime boundary inside the substep so switching
        // happens at the crossing, not at the grid.
        OracleState next = advance(s, h, u, d);
        if (oracle_mode(next, p, alpha) != mode) {
            double lo = 0.0, hi = h;
            for (int it = 0; it < 60 && hi - lo > 1e-13; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (oracle_mode(advance(s, mid, u, d), p, alpha) == mode) lo = mid;
                else hi = mid;
            }
            h = std::max(hi, 1e-12);
            next = advance(s, h, u, d);
        }

        min_gap = std::min(min_gap, min_gap_over(s, h, u, d));
        s = next;
        if (s.lead < 0.0) s.lead = 0.0;
        if (s.own() < 0.0) s.rel = s.lead; // clamp own speed at zero
        t += h;
    }
    return min_gap;
}

BrakeOracleResult worst_case_brake_oracle(const BrakeGrid& grid,
                                          const VehicleParams& p, double alpha) {
    BrakeOracleResult res;
    res.pass_margin = p.min_gap() - 1e-6;
    res.min_gap = std::numeric_limits<double>::infinity();
    res.grid_description =
        std::to_string(grid.n_gap) + "x" + std::to_string(grid.n_rel) + "x" +
        std::to_string(grid.n_lead) + " over gap in [emergency, " +
        std::to_string(grid.gap_max) + "], own speed in [0, v_max], leader speed in [0, v_max]";

    auto evaluate = [&](const RelativeState& x) {
        const double mg = brake_trajectory_min_gap(x, p, alpha);
        ++res.states_evaluated;
        if (mg > res.pass_margin) res.min_gap = std::min(res.min_gap, mg);
        if (std::abs(mg - p.min_gap()) <= 1e-3 && x.rel_speed <= 0.0)
            ++res.standstill_equalities;
        if (mg <= res.pass_margin) {
            BrakeViolation v;
            v.start = x;
            v.min_gap = mg;
            v.kinematically_doomed = kinematically_doomed(x, p);
            if (v.kinematically_doomed) ++res.doomed_violations;
            if (res.violations.size() < 4096) res.violations.push_back(v);
        }
        return mg;
    };

    for (int a = 0; a < grid.n_lead; ++a) {
        const double lead = p.v_max * static_cast<double>(a) /
                            static_cast<double>(grid.n_lead - 1);
        for (int b = 0; b < grid.n_rel; ++b) {
            // Own speed spans [0, v_max]; the relative speed follows so all
            // grid points are physically valid initial states.
            const double own = p.v_max * static_cast<double>(b) /
                               static_cast<double>(grid.n_rel - 1);
            RelativeState probe;
            probe.rel_speed = lead - own;
            probe.lead_speed = lead;
            probe.gap = 1.0;
            const double gap_lo =
                compute_thresholds(probe, p, alpha).emergency; // scale-free
            std::vector<double> gaps;
            for (int c = 0; c < grid.n_gap; ++c)
                gaps.push_back(gap_lo + (grid.gap_max - gap_lo) *
                                            static_cast<double>(c) /
                                            static_cast<double>(grid.n_gap - 1));
            double prev_spacing =
                gaps.size() > 1 ? gaps[1] - gaps[0] : 0.0;
            for (double g : gaps) {
                RelativeState x = probe;
                x.gap = g;
                const double mg = evaluate(x);
                // Refine locally around near-misses of the pass margin.
                if (mg > res.pass_margin && mg < p.min_gap() + 0.25 &&
                    prev_spacing > 0.0) {
                    for (int r = 1; r <= 4; ++r) {
                        RelativeState xr = x;
                        xr.gap = g + prev_spacing * static_cast<double>(r) / 5.0;
                        if (xr.gap <= grid.gap_max) {
                            evaluate(xr);
                            ++res.refined_states;
                        }
                    }
                }
            }
        }
    }
    res.passed = res.violations.empty();
    if (!std::isfinite(res.min_gap)) res.min_gap = 0.0;
    return res;
}

ConvergenceReport equilibrium_check(const Trace& trace, const Scenario& sc,
                                    const EquilibriumTolerance& tol) {
    ConvergenceReport rep;
    std::map<int, const VehicleSpec*> specs;
    for (const VehicleSpec& v : sc.vehicles) specs[v.id] = &v;

    std::map<int, double> last_outside;
    std::map<int, double> final_distance;
    double horizon = trace.empty() ? 0.0 : trace.back().t;

    std::size_t i = 0;
    while (i < trace.size()) {
        const double t = trace[i].t;
        std::map<int, const TraceRecord*> at;
        std::size_t j = i;
        while (j < trace.size() && trace[j].t == t) {
            at[trace[j].id] = &trace[j];
            ++j;
        }
        for (const auto& [id, rec] : at) {
            if (!specs.count(id)) continue;
            const VehicleSpec& spec = *specs[id];
            double v_des = spec.v_des0;
            for (const VDesChange& c : spec.schedule)
                if (c.t <= t + 1e-12) v_des = c.v_des;

            double dist_lat = std::max(0.0, std::abs(rec->vy) - tol.lat_speed_tol) +
                              std::abs(rec->steer);
            double dist_s1 = std::max(0.0, std::abs(rec->v - v_des) - tol.speed_tol);
            double dist_s2 = std::numeric_limits<double>::infinity();
            if (rec->leader != kFictitiousLeader && at.count(rec->leader)) {
                const TraceRecord& lead = *at.at(rec->leader);
                RelativeState x;
                x.gap = lead.p - rec->p;
                x.rel_speed = lead.v - rec->v;
                x.lead_speed = lead.v;
                VehicleParams pp = spec.params;
                pp.v_des = v_des;
                const Thresholds th = compute_thresholds(x, pp, rec->alpha);
                dist_s2 = std::max(0.0, std::abs(x.rel_speed) - tol.rel_speed_tol) +
                          std::max(0.0, (th.risky - tol.band_slack) - x.gap) +
                          std::max(0.0, x.gap - (th.safe + tol.band_slack));
            }
            const double dist = std::min(dist_s1, dist_s2) + dist_lat;
            if (dist > 0.0) last_outside[id] = t;
            final_distance[id] = dist;
        }
        i = j;
    }

    for (const auto& [id, spec] : specs) {
        (void)spec;
        std::optional<double> conv;
        if (!last_outside.count(id)) conv = 0.0;
        else if (last_outside[id] < horizon - 1e-12)
            conv = last_outside[id] + sc.sample_interval;
        rep.time[id] = conv;
        rep.terminal_distance[id] = final_distance.count(id) ? final_distance[id] : 0.0;
    }
    return rep;
}

SwitchReport switch_stats(const Trace& trace, const Scenario& sc) {
    const RunSummary s = summarize(trace, sc);
    SwitchReport rep;
    rep.per_vehicle = s.switches;
    for (const auto& [id, st] : s.switches) {
        (void)id;
        rep.max_per_second = std::max(rep.max_per_second, st.max_per_second);
        rep.conformance_violations += st.conformance_violations;
    }
    rep.unsafe_regime_rows = s.unsafe_regime_steps;
    return rep;
}

} // namespace mesoacc
