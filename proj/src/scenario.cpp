#include "mesoacc/scenario.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mesoacc/cluster.hpp"

namespace mesoacc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::invalid_argument(path + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown field");
}

double get_num(const json& obj, const std::string& key, const std::string& path,
               std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail(path + "." + key, "missing required number");
    }
    if (!obj[key].is_number()) fail(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path,
              bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) fail(path + "." + key, "expected a boolean");
    return obj[key].get<bool>();
}

void apply_params(VehicleParams& p, const json& obj, const std::string& path) {
    static const std::set<std::string> kKeys = {
        "length_m",        "buffer_m",       "accel_max_mps2", "brake_ratio",
        "react_coef",      "safe_coef",      "approach_coef",  "interact_coef",
        "interact_time_s", "v_max_mps",      "gain_free",      "gain_follow",
        "gain_closing",    "floor_accel_mps2", "follow_range_m", "steer_angle_rad",
        "idm_headway_s",   "idm_brake_mps2", "idm_gap_m",      "radio_range_m",
        "change_cost_m",   "window_s",       "flow_window_s",  "alpha_floor",
        "alpha_cap",       "flow_gain"};
    if (!obj.is_object()) fail(path, "expected an object");
    check_keys(obj, kKeys, path);
    p.length_m = get_num(obj, "length_m", path, p.length_m);
    p.buffer_m = get_num(obj, "buffer_m", path, p.buffer_m);
    p.accel_max = get_num(obj, "accel_max_mps2", path, p.accel_max);
    p.brake_ratio = get_num(obj, "brake_ratio", path, p.brake_ratio);
    p.react_coef = get_num(obj, "react_coef", path, p.react_coef);
    p.safe_coef = get_num(obj, "safe_coef", path, p.safe_coef);
    p.approach_coef = get_num(obj, "approach_coef", path, p.approach_coef);
    p.interact_coef = get_num(obj, "interact_coef", path, p.interact_coef);
    p.interact_time = get_num(obj, "interact_time_s", path, p.interact_time);
    p.v_max = get_num(obj, "v_max_mps", path, p.v_max);
    p.gain_free = get_num(obj, "gain_free", path, p.gain_free);
    p.gain_follow = get_num(obj, "gain_follow", path, p.gain_follow);
    p.gain_closing = get_num(obj, "gain_closing", path, p.gain_closing);
    p.floor_accel = get_num(obj, "floor_accel_mps2", path, p.floor_accel);
    p.follow_range = get_num(obj, "follow_range_m", path, p.follow_range);
    p.steer_mag = get_num(obj, "steer_angle_rad", path, p.steer_mag);
    p.idm_headway = get_num(obj, "idm_headway_s", path, p.idm_headway);
    p.idm_brake = get_num(obj, "idm_brake_mps2", path, p.idm_brake);
    p.idm_gap = get_num(obj, "idm_gap_m", path, p.idm_gap);
    p.radio_range = get_num(obj, "radio_range_m", path, p.radio_range);
    p.change_cost = get_num(obj, "change_cost_m", path, p.change_cost);
    p.window = get_num(obj, "window_s", path, p.window);
    p.flow_window = get_num(obj, "flow_window_s", path,
                            obj.contains("window_s") ? p.window : p.flow_window);
    p.alpha_floor = get_num(obj, "alpha_floor", path, p.alpha_floor);
    p.alpha_cap = get_num(obj, "alpha_cap", path, p.alpha_cap);
    p.flow_gain = get_num(obj, "flow_gain", path, p.flow_gain);
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

json params_to_json(const VehicleParams& p) {
    json o;
    o["length_m"] = p.length_m;
    o["buffer_m"] = p.buffer_m;
    o["accel_max_mps2"] = p.accel_max;
    o["brake_ratio"] = p.brake_ratio;
    o["react_coef"] = p.react_coef;
    o["safe_coef"] = p.safe_coef;
    o["approach_coef"] = p.approach_coef;
    o["interact_coef"] = p.interact_coef;
    o["interact_time_s"] = p.interact_time;
    o["v_max_mps"] = p.v_max;
    o["gain_free"] = p.gain_free;
    o["gain_follow"] = p.gain_follow;
    o["gain_closing"] = p.gain_closing;
    o["floor_accel_mps2"] = p.floor_accel;
    o["follow_range_m"] = p.follow_range;
    o["steer_angle_rad"] = p.steer_mag;
    o["idm_headway_s"] = p.idm_headway;
    o["idm_brake_mps2"] = p.idm_brake;
    o["idm_gap_m"] = p.idm_gap;
    o["radio_range_m"] = p.radio_range;
    o["change_cost_m"] = p.change_cost;
    o["window_s"] = p.window;
    o["flow_window_s"] = p.flow_window;
    o["alpha_floor"] = p.alpha_floor;
    o["alpha_cap"] = p.alpha_cap;
    o["flow_gain"] = p.flow_gain;
    return o;
}

} // namespace

Scenario load_scenario(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("scenario", "expected a JSON object");
    check_keys(root,
               {"schema_version", "name", "dt_s", "duration_s", "sample_interval_s",
                "flags", "geometry", "params", "vehicles"},
               "scenario");

    Scenario sc;
    if (!root.contains("schema_version") || !root["schema_version"].is_number_integer())
        fail("scenario.schema_version", "missing required integer");
    sc.schema_version = root["schema_version"].get<int>();
    if (sc.schema_version != 1) fail("scenario.schema_version", "unsupported version");
    sc.name = root.value("name", std::string{});
    sc.dt = get_num(root, "dt_s", "scenario", 0.01);
    sc.duration = get_num(root, "duration_s", "scenario");
    sc.sample_interval = get_num(root, "sample_interval_s", "scenario", 0.1);
    if (!(sc.dt > 0.0)) fail("scenario.dt_s", "must be > 0");
    if (!(sc.duration >= 0.0)) fail("scenario.duration_s", "must be >= 0");
    if (sc.sample_interval + 1e-12 < sc.dt)
        fail("scenario.sample_interval_s", "must be >= dt_s");

    if (root.contains("geometry")) {
        const json& g = root["geometry"];
        check_keys(g, {"y_right_m", "y_left_m", "lane_count"}, "geometry");
        sc.geometry.y_right = get_num(g, "y_right_m", "geometry", sc.geometry.y_right);
        sc.geometry.y_left = get_num(g, "y_left_m", "geometry", sc.geometry.y_left);
        if (g.contains("lane_count")) {
            if (!g["lane_count"].is_number_integer())
                fail("geometry.lane_count", "expected an integer");
            sc.geometry.lane_count = g["lane_count"].get<int>();
        }
        if (!(sc.geometry.y_right < sc.geometry.y_left))
            fail("geometry", "y_right_m must be below y_left_m");
        if (sc.geometry.lane_count != 1 && sc.geometry.lane_count != 2)
            fail("geometry.lane_count", "must be 1 or 2");
    }

    if (root.contains("params")) apply_params(sc.defaults, root["params"], "params");

    if (root.contains("flags")) {
        const json& f = root["flags"];
        check_keys(f,
                   {"mesoscopic", "closing_law", "fail_fast", "info_delay_steps",
                    "alpha_override", "meso_trigger_override"},
                   "flags");
        sc.flags.mesoscopic = get_bool(f, "mesoscopic", "flags", sc.flags.mesoscopic);
        sc.flags.fail_fast = get_bool(f, "fail_fast", "flags", sc.flags.fail_fast);
        if (f.contains("closing_law")) {
            const std::string v = f["closing_law"].get<std::string>();
            if (v == "sign_corrected") sc.flags.closing_law = ClosingLaw::SignCorrected;
            else if (v == "verbatim") sc.flags.closing_law = ClosingLaw::Verbatim;
            else fail("flags.closing_law", "expected sign_corrected or verbatim");
        }
        if (f.contains("info_delay_steps")) {
            if (!f["info_delay_steps"].is_number_integer())
                fail("flags.info_delay_steps", "expected an integer");
            sc.flags.info_delay_steps = f["info_delay_steps"].get<int>();
            if (sc.flags.info_delay_steps < 0)
                fail("flags.info_delay_steps", "must be >= 0");
        }
        if (f.contains("alpha_override"))
            sc.flags.alpha_override = get_num(f, "alpha_override", "flags");
        if (f.contains("meso_trigger_override"))
            sc.flags.meso_trigger_override =
                get_bool(f, "meso_trigger_override", "flags", false);
    }

    if (!root.contains("vehicles") || !root["vehicles"].is_array())
        fail("scenario.vehicles", "missing required array");
    int idx = 0;
    for (const json& v : root["vehicles"]) {
        const std::string path = "vehicles[" + std::to_string(idx++) + "]";
        check_keys(v,
                   {"id", "lane", "p0_m", "v0_mps", "py0_m", "vy0_mps", "steer0_rad",
                    "high_mode", "v_des_mps", "v_des_schedule", "params"},
                   path);
        VehicleSpec spec;
        if (!v.contains("id") || !v["id"].is_number_integer())
            fail(path + ".id", "missing required integer");
        spec.id = v["id"].get<int>();
        if (spec.id < 0) fail(path + ".id", "must be >= 0");
        const std::string lane = v.value("lane", std::string("r"));
        if (lane == "r") spec.lane = Lane::Right;
        else if (lane == "l") spec.lane = Lane::Left;
        else fail(path + ".lane", "expected r or l");
        spec.p0 = get_num(v, "p0_m", path);
        spec.v0 = get_num(v, "v0_mps", path);
        spec.py0 = get_num(v, "py0_m", path,
                           spec.lane == Lane::Right ? sc.geometry.y_right
                                                    : sc.geometry.y_left);
        spec.vy0 = get_num(v, "vy0_mps", path, 0.0);
        spec.steer0 = get_num(v, "steer0_rad", path, 0.0);
        spec.high0 = v.contains("high_mode")
                         ? high_mode_from_string(v["high_mode"].get<std::string>())
                         : (spec.lane == Lane::Right ? HighMode::Right : HighMode::Left);
        spec.v_des0 = get_num(v, "v_des_mps", path, spec.v0);
        spec.params = sc.defaults;
        if (v.contains("params")) apply_params(spec.params, v["params"], path + ".params");
        if (v.contains("v_des_schedule")) {
            if (!v["v_des_schedule"].is_array())
                fail(path + ".v_des_schedule", "expected an array");
            double prev_t = -std::numeric_limits<double>::infinity();
            for (const json& e : v["v_des_schedule"]) {
                check_keys(e, {"t_s", "v_des_mps"}, path + ".v_des_schedule[]");
                VDesChange ch;
                ch.t = get_num(e, "t_s", path + ".v_des_schedule[]");
                ch.v_des = get_num(e, "v_des_mps", path + ".v_des_schedule[]");
                if (!(ch.t > prev_t))
                    fail(path + ".v_des_schedule", "times must strictly increase");
                prev_t = ch.t;
                spec.schedule.push_back(ch);
            }
        }
        sc.vehicles.push_back(std::move(spec));
    }

    // Full structural validation (ordering, regimes) happens in the engine
    // constructor; run it here so load fails eagerly with the field path.
    Engine probe(sc);
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("scenario: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str());
}

std::string serialize(const Scenario& sc) {
    json root;
    root["schema_version"] = sc.schema_version;
    root["name"] = sc.name;
    root["dt_s"] = sc.dt;
    root["duration_s"] = sc.duration;
    root["sample_interval_s"] = sc.sample_interval;
    root["geometry"] = {{"y_right_m", sc.geometry.y_right},
                        {"y_left_m", sc.geometry.y_left},
                        {"lane_count", sc.geometry.lane_count}};
    json flags;
    flags["mesoscopic"] = sc.flags.mesoscopic;
    flags["closing_law"] = sc.flags.closing_law == ClosingLaw::SignCorrected
                               ? "sign_corrected"
                               : "verbatim";
    flags["fail_fast"] = sc.flags.fail_fast;
    flags["info_delay_steps"] = sc.flags.info_delay_steps;
    if (sc.flags.alpha_override) flags["alpha_override"] = *sc.flags.alpha_override;
    if (sc.flags.meso_trigger_override)
        flags["meso_trigger_override"] = *sc.flags.meso_trigger_override;
    root["flags"] = std::move(flags);
    root["params"] = params_to_json(sc.defaults);
    json vehicles = json::array();
    for (const VehicleSpec& v : sc.vehicles) {
        json o;
        o["id"] = v.id;
        o["lane"] = v.lane == Lane::Right ? "r" : "l";
        o["p0_m"] = v.p0;
        o["v0_mps"] = v.v0;
        o["py0_m"] = v.py0;
        o["vy0_mps"] = v.vy0;
        o["steer0_rad"] = v.steer0;
        o["high_mode"] = to_string(v.high0);
        o["v_des_mps"] = v.v_des0;
        if (!v.schedule.empty()) {
            json sched = json::array();
            for (const VDesChange& c : v.schedule)
                sched.push_back({{"t_s", c.t}, {"v_des_mps", c.v_des}});
            o["v_des_schedule"] = std::move(sched);
        }
        o["params"] = params_to_json(v.params);
        vehicles.push_back(std::move(o));
    }
    root["vehicles"] = std::move(vehicles);
    return root.dump(2) + "\n";
}

namespace {

const char kTraceHeader[] = "t,id,hmode,wmode,p,v,py,vy,phi,u,alphaT,leader,events";

std::string events_token(std::uint8_t bits) {
    std::string out;
    auto add = [&out](const char* tok) {
        if (!out.empty()) out += '+';
        out += tok;
    };
    if (bits & kEventCross) add("c");
    if (bits & kEventLaneExit) add("ex");
    if (bits & kEventNewLeader) add("nl");
    return out;
}

std::uint8_t events_from_token(const std::string& s) {
    std::uint8_t bits = 0;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find('+', pos);
        if (next == std::string::npos) next = s.size();
        const std::string tok = s.substr(pos, next - pos);
        if (tok == "c") bits |= kEventCross;
        else if (tok == "ex") bits |= kEventLaneExit;
        else if (tok == "nl") bits |= kEventNewLeader;
        else throw std::invalid_argument("trace: unknown event token " + tok);
        pos = next + 1;
    }
    return bits;
}

} // namespace

std::string trace_to_csv(const Trace& trace) {
    std::string out;
    out.reserve(trace.size() * 96 + 64);
    out += kTraceHeader;
    out += '\n';
    char buf[256];
    for (const TraceRecord& r : trace) {
        const int len = std::snprintf(
            buf, sizeof buf, "%.6f,%d,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%s\n",
            r.t, r.id, to_string(r.high), to_string(r.low), r.p, r.v, r.py, r.vy,
            r.steer, r.u, r.alpha, r.leader, events_token(r.events).c_str());
        out.append(buf, static_cast<std::size_t>(len));
    }
    return out;
}

std::size_t write_trace(const Trace& trace, std::ostream& out) {
    const std::string csv = trace_to_csv(trace);
    out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!out) throw std::runtime_error("trace: write failed");
    return csv.size();
}

std::size_t write_trace_file(const Trace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("trace: cannot open " + path);
    return write_trace(trace, out);
}

Trace read_trace_csv(const std::string& csv) {
    Trace trace;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader)
        throw std::invalid_argument("trace: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t pos = 0;
        while (true) {
            std::size_t next = line.find(',', pos);
            if (next == std::string::npos) {
                f.push_back(line.substr(pos));
                break;
            }
            f.push_back(line.substr(pos, next - pos));
            pos = next + 1;
        }
        if (f.size() != 13) throw std::invalid_argument("trace: bad row");
        TraceRecord r;
        r.t = std::stod(f[0]);
        r.id = std::stoi(f[1]);
        r.high = high_mode_from_string(f[2]);
        r.low = low_mode_from_string(f[3]);
        r.p = std::stod(f[4]);
        r.v = std::stod(f[5]);
        r.py = std::stod(f[6]);
        r.vy = std::stod(f[7]);
        r.steer = std::stod(f[8]);
        r.u = std::stod(f[9]);
        r.alpha = std::stod(f[10]);
        r.leader = std::stoi(f[11]);
        r.events = events_from_token(f[12]);
        trace.push_back(r);
    }
    return trace;
}

std::string summary_to_json(const RunSummary& s) {
    json o;
    o["collision_episodes"] = s.collision_episodes;
    json pairs = json::array();
    for (const auto& [a, b] : s.collision_pairs) pairs.push_back({a, b});
    o["collision_pairs"] = std::move(pairs);
    o["min_same_lane_gap_m"] = s.min_same_lane_gap;
    json gaps;
    for (const auto& [key, gap] : s.min_gap_by_pair)
        gaps[std::to_string(key.first) + "->" + std::to_string(key.second)] = gap;
    o["min_gap_by_pair_m"] = std::move(gaps);
    json conv;
    for (const auto& [id, t] : s.convergence_time)
        conv[std::to_string(id)] = t ? json(*t) : json(nullptr);
    o["convergence_time_s"] = std::move(conv);
    json sw;
    for (const auto& [id, st] : s.switches)
        sw[std::to_string(id)] = {{"count", st.count},
                                  {"max_per_second", st.max_per_second},
                                  {"conformance_violations", st.conformance_violations}};
    o["regime_switches"] = std::move(sw);
    o["unsafe_regime_steps"] = s.unsafe_regime_steps;
    o["min_leader_dwell_s"] =
        s.min_leader_dwell ? json(*s.min_leader_dwell) : json(nullptr);
    o["leader_dwell_flag"] = s.leader_dwell_flag;
    json lc;
    for (const auto& [id, c] : s.lane_changes_completed) lc[std::to_string(id)] = c;
    o["lane_changes_completed"] = std::move(lc);
    json exits;
    for (const auto& [id, ts] : s.lane_exit_times) exits[std::to_string(id)] = ts;
    o["lane_exit_times_s"] = std::move(exits);
    json onset;
    for (const auto& [id, t] : s.decel_onset)
        onset[std::to_string(id)] = t ? json(*t) : json(nullptr);
    o["decel_onset_s"] = std::move(onset);
    json signs;
    for (const auto& [id, c] : s.accel_sign_changes) signs[std::to_string(id)] = c;
    o["accel_sign_changes"] = std::move(signs);
    o["wall_time_s"] = s.wall_time_s;
    return o.dump(2) + "\n";
}

RunSummary summarize(const Trace& trace, const Scenario& sc) {
    RunSummary out;
    out.min_same_lane_gap = std::numeric_limits<double>::infinity();
    std::map<int, const VehicleSpec*> specs;
    for (const VehicleSpec& v : sc.vehicles) {
        specs[v.id] = &v;
        out.switches[v.id] = SwitchStat{};
        out.lane_changes_completed[v.id] = 0;
        out.accel_sign_changes[v.id] = 0;
        out.decel_onset[v.id] = std::nullopt;
        out.convergence_time[v.id] = std::nullopt;
    }

    struct PerVehicle {
        const TraceRecord* prev = nullptr;
        std::vector<long long> buckets;
        double decel_run_start = -1.0;
        double last_nl = -1.0;
        double last_outside = -1.0;
    };
    std::map<int, PerVehicle> pv;

    // Group rows by sample time; rows are ordered by (t, vehicle).
    std::size_t i = 0;
    double horizon = trace.empty() ? 0.0 : trace.back().t;
    while (i < trace.size()) {
        const double t = trace[i].t;
        std::size_t j = i;
        std::map<int, const TraceRecord*> at;
        while (j < trace.size() && trace[j].t == t) {
            at[trace[j].id] = &trace[j];
            ++j;
        }

        // Pairwise same-lane gaps at this sample.
        for (auto a = at.begin(); a != at.end(); ++a) {
            for (auto b = std::next(a); b != at.end(); ++b) {
                const TraceRecord& ra = *a->second;
                const TraceRecord& rb = *b->second;
                auto occupies = [&](const TraceRecord& r, Lane lane) {
                    if (lane_of(r.py, sc.geometry) == lane) return true;
                    return is_transfer(r.high) &&
                           std::abs(r.py - sc.geometry.y_sep()) <
                               sc.geometry.half_width();
                };
                const bool share =
                    (occupies(ra, Lane::Right) && occupies(rb, Lane::Right)) ||
                    (occupies(ra, Lane::Left) && occupies(rb, Lane::Left));
                if (!share) continue;
                const double gap = std::abs(ra.p - rb.p);
                const TraceRecord& behind = ra.p < rb.p ? ra : rb;
                const TraceRecord& ahead = ra.p < rb.p ? rb : ra;
                const auto key = std::make_pair(behind.id, ahead.id);
                auto it = out.min_gap_by_pair.find(key);
                if (it == out.min_gap_by_pair.end()) out.min_gap_by_pair[key] = gap;
                else it->second = std::min(it->second, gap);
                out.min_same_lane_gap = std::min(out.min_same_lane_gap, gap);
            }
        }

        for (const auto& [id, rec] : at) {
            PerVehicle& st = pv[id];
            const VehicleSpec* spec = specs.count(id) ? specs[id] : nullptr;

            if (rec->low == LowMode::Unsafe) ++out.unsafe_regime_steps;
            if (rec->events & kEventLaneExit) out.lane_exit_times[id].push_back(t);
            if ((rec->events & kEventCross) && !is_transfer(rec->high))
                ++out.lane_changes_completed[id];
            if (rec->events & kEventNewLeader) {
                if (st.last_nl >= 0.0) {
                    const double dwell = t - st.last_nl;
                    if (!out.min_leader_dwell || dwell < *out.min_leader_dwell)
                        out.min_leader_dwell = dwell;
                    if (dwell < 2.0 * sc.dt - 1e-12) out.leader_dwell_flag = true;
                }
                st.last_nl = t;
            }

            if (st.prev) {
                if (rec->low != st.prev->low) {
                    SwitchStat& sw = out.switches[id];
                    ++sw.count;
                    const std::size_t sec = static_cast<std::size_t>(std::max(0.0, t));
                    if (st.buckets.size() <= sec) st.buckets.resize(sec + 1, 0);
                    ++st.buckets[sec];
                    sw.max_per_second = std::max(sw.max_per_second, st.buckets[sec]);
                    if (rec->events == 0 &&
                        !allowed_state_transition(st.prev->low, rec->low))
                        ++sw.conformance_violations;
                }
                if (st.prev->u * rec->u < 0.0) ++out.accel_sign_changes[id];
            }

            if (rec->u < -0.2) {
                if (st.decel_run_start < 0.0) st.decel_run_start = t;
                if (t - st.decel_run_start >= 1.0 - 1e-9 && !out.decel_onset[id])
                    out.decel_onset[id] = st.decel_run_start;
            } else {
                st.decel_run_start = -1.0;
            }

            // Equilibrium membership from the sampled state.
            bool inside = false;
            if (spec && std::abs(rec->vy) <= 1e-6 && rec->steer == 0.0) {
                double v_des = spec->v_des0;
                for (const VDesChange& c : spec->schedule)
                    if (c.t <= t + 1e-12) v_des = c.v_des;
                if (std::abs(rec->v - v_des) <= 0.1) inside = true;
                else if (rec->leader != kFictitiousLeader && at.count(rec->leader)) {
                    const TraceRecord& lead = *at.at(rec->leader);
                    RelativeState x;
                    x.gap = lead.p - rec->p;
                    x.rel_speed = lead.v - rec->v;
                    x.lead_speed = lead.v;
                    VehicleParams pp = spec->params;
                    pp.v_des = v_des;
                    const Thresholds th = compute_thresholds(x, pp, rec->alpha);
                    if (std::abs(x.rel_speed) <= 0.1 && x.gap >= th.risky - 0.5 &&
                        x.gap <= th.safe + 0.5)
                        inside = true;
                }
            }
            if (!inside) st.last_outside = t;

            st.prev = rec;
        }

        // Collision episodes at sample cadence.
        i = j;
    }

    // Episode counting from per-sample gap state.
    {
        std::vector<std::pair<int, int>> active;
        std::size_t k = 0;
        while (k < trace.size()) {
            const double t = trace[k].t;
            std::map<int, const TraceRecord*> at;
            std::size_t j2 = k;
            while (j2 < trace.size() && trace[j2].t == t) {
                at[trace[j2].id] = &trace[j2];
                ++j2;
            }
            std::vector<std::pair<int, int>> now;
            for (auto a = at.begin(); a != at.end(); ++a) {
                for (auto b = std::next(a); b != at.end(); ++b) {
                    const TraceRecord& ra = *a->second;
                    const TraceRecord& rb = *b->second;
                    auto occupies = [&](const TraceRecord& r, Lane lane) {
                        if (lane_of(r.py, sc.geometry) == lane) return true;
                        return is_transfer(r.high) &&
                               std::abs(r.py - sc.geometry.y_sep()) <
                                   sc.geometry.half_width();
                    };
                    const bool share =
                        (occupies(ra, Lane::Right) && occupies(rb, Lane::Right)) ||
                        (occupies(ra, Lane::Left) && occupies(rb, Lane::Left));
                    if (!share) continue;
                    double s_gap = 5.0;
                    if (specs.count(ra.id) && specs.count(rb.id))
                        s_gap = std::max(specs[ra.id]->params.min_gap(),
                                         specs[rb.id]->params.min_gap());
                    if (std::abs(ra.p - rb.p) <= s_gap) {
                        const TraceRecord& behind = ra.p < rb.p ? ra : rb;
                        const TraceRecord& ahead = ra.p < rb.p ? rb : ra;
                        now.emplace_back(behind.id, ahead.id);
                    }
                }
            }
            std::sort(now.begin(), now.end());
            for (const auto& pr : now)
                if (!std::binary_search(active.begin(), active.end(), pr)) {
                    ++out.collision_episodes;
                    out.collision_pairs.push_back(pr);
                }
            active = std::move(now);
            k = j2;
        }
    }

    for (auto& [id, st] : pv) {
        std::optional<double> conv;
        if (st.last_outside < 0.0) conv = 0.0;
        else if (st.last_outside < horizon - 1e-12)
            conv = st.last_outside + sc.sample_interval;
        out.convergence_time[id] = conv;
    }
    return out;
}

} // namespace mesoacc
