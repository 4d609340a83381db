// Command-line harness: scenario runs, paired comparisons, and the
// verification suites.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mesoacc/analysis.hpp"
#include "mesoacc/cluster.hpp"
#include "mesoacc/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("MESOACC_OUT_DIR");
    return env ? std::string(env) : std::string(".");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
}

struct RunArtifacts {
    mesoacc::Trace trace;
    mesoacc::RunSummary summary;
};

RunArtifacts run_once(mesoacc::Scenario sc) {
    mesoacc::Engine engine(std::move(sc));
    auto [trace, summary] = engine.run();
    return {std::move(trace), std::move(summary)};
}

int cmd_run(const std::string& scenario_path, std::optional<bool> meso,
            std::optional<double> dt, const std::string& out_dir, bool fail_fast) {
    mesoacc::Scenario sc = mesoacc::load_scenario_file(scenario_path);
    if (meso) sc.flags.mesoscopic = *meso;
    if (dt) sc.dt = *dt;
    if (fail_fast) sc.flags.fail_fast = true;

    RunArtifacts art = run_once(sc);
    fs::create_directories(out_dir);
    const std::string stem = sc.name.empty() ? "run" : sc.name;
    const fs::path trace_path = fs::path(out_dir) / (stem + "_trace.csv");
    const fs::path summary_path = fs::path(out_dir) / (stem + "_summary.json");
    mesoacc::write_trace_file(art.trace, trace_path.string());
    write_text(summary_path, mesoacc::summary_to_json(art.summary));

    std::printf("run %s: %lld collision episode(s), min same-lane gap %.3f m, wall %.3f s\n",
                stem.c_str(), art.summary.collision_episodes,
                art.summary.min_same_lane_gap, art.summary.wall_time_s);
    std::printf("trace: %s\nsummary: %s\n", trace_path.string().c_str(),
                summary_path.string().c_str());
    return art.summary.collision_episodes == 0 ? 0 : 1;
}

int cmd_compare(const std::string& scenario_path, const std::string& out_dir) {
    mesoacc::Scenario sc = mesoacc::load_scenario_file(scenario_path);
    mesoacc::Scenario sc_meso = sc, sc_micro = sc;
    sc_meso.flags.mesoscopic = true;
    sc_micro.flags.mesoscopic = false;
    RunArtifacts meso = run_once(sc_meso);
    RunArtifacts micro = run_once(sc_micro);

    json out;
    out["scenario"] = sc.name;
    out["mesoscopic"] = json::parse(mesoacc::summary_to_json(meso.summary));
    out["microscopic"] = json::parse(mesoacc::summary_to_json(micro.summary));
    json deltas;
    for (const auto& [id, t_meso] : meso.summary.decel_onset) {
        const auto& t_micro = micro.summary.decel_onset.at(id);
        if (t_meso && t_micro)
            deltas[std::to_string(id)] = *t_meso - *t_micro;
        else
            deltas[std::to_string(id)] = nullptr;
    }
    out["decel_onset_delta_s"] = std::move(deltas);
    json osc;
    for (const auto& [id, n_meso] : meso.summary.accel_sign_changes)
        osc[std::to_string(id)] = {{"mesoscopic", n_meso},
                                   {"microscopic", micro.summary.accel_sign_changes.at(id)}};
    out["accel_sign_changes"] = std::move(osc);

    fs::create_directories(out_dir);
    const std::string stem = sc.name.empty() ? "compare" : sc.name + "_compare";
    const fs::path path = fs::path(out_dir) / (stem + ".json");
    write_text(path, out.dump(2) + "\n");
    std::printf("compare %s: meso collisions %lld, micro collisions %lld\n",
                sc.name.c_str(), meso.summary.collision_episodes,
                micro.summary.collision_episodes);
    for (const auto& [id, t_meso] : meso.summary.decel_onset) {
        const auto& t_micro = micro.summary.decel_onset.at(id);
        std::printf("  vehicle %d: onset meso %s / micro %s, sign changes %lld / %lld\n", id,
                    t_meso ? std::to_string(*t_meso).c_str() : "-",
                    t_micro ? std::to_string(*t_micro).c_str() : "-",
                    meso.summary.accel_sign_changes.at(id),
                    micro.summary.accel_sign_changes.at(id));
    }
    std::printf("report: %s\n", path.string().c_str());
    const bool ok = meso.summary.collision_episodes == 0 &&
                    micro.summary.collision_episodes == 0;
    return ok ? 0 : 1;
}

fs::path locate_scenario(const std::string& name) {
    const fs::path candidates[] = {
        fs::path(name),
        fs::path(MESOACC_SCENARIO_DIR) / name,
    };
    for (const fs::path& c : candidates)
        if (fs::exists(c)) return c;
    throw std::runtime_error("scenario not found: " + name);
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_dir) {
    mesoacc::VehicleParams params;
    json report;
    bool ok = true;

    if (suite == "partition" || suite == "all") {
        const auto rep = mesoacc::partition_check(1000000, params, seed);
        const bool pass = rep.resolved_by_precedence == 0 &&
                          rep.matched_exactly_one == rep.samples;
        report["partition"] = {{"samples", rep.samples},
                               {"matched_exactly_one", rep.matched_exactly_one},
                               {"resolved_by_precedence", rep.resolved_by_precedence},
                               {"pass", pass}};
        std::printf("[%s] partition: %lld/%lld states in exactly one domain\n",
                    pass ? "PASS" : "FAIL", rep.matched_exactly_one, rep.samples);
        ok = ok && pass;
    }
    if (suite == "brake" || suite == "all") {
        json sweeps = json::array();
        bool pass = true;
        for (double alpha : {0.2, 1.0, 2.2}) {
            const auto rep = mesoacc::worst_case_brake_oracle({}, params, alpha);
            pass = pass && rep.passed;
            sweeps.push_back({{"alpha", alpha},
                              {"states", rep.states_evaluated},
                              {"violations", static_cast<long long>(rep.violations.size())},
                              {"kinematically_doomed", rep.doomed_violations},
                              {"standstill_equalities", rep.standstill_equalities},
                              {"pass", rep.passed}});
            std::printf("[%s] brake sweep alpha=%.1f: %lld states, %zu violations "
                        "(%lld kinematically doomed)\n",
                        rep.passed ? "PASS" : "FAIL", alpha, rep.states_evaluated,
                        rep.violations.size(), rep.doomed_violations);
        }
        report["brake"] = std::move(sweeps);
        ok = ok && pass;
    }
    if (suite == "equilibrium" || suite == "switches" || suite == "all") {
        for (const char* name : {"table2.json", "table3.json"}) {
            mesoacc::Scenario sc = mesoacc::load_scenario_file(locate_scenario(name).string());
            sc.sample_interval = sc.dt; // full-rate rows for step-exact checks
            RunArtifacts art = run_once(sc);
            if (suite == "equilibrium" || suite == "all") {
                const auto rep = mesoacc::equilibrium_check(art.trace, sc);
                bool pass = true;
                json times;
                for (const auto& [id, t] : rep.time) {
                    pass = pass && t.has_value();
                    times[std::to_string(id)] = t ? json(*t) : json(nullptr);
                }
                report["equilibrium"][sc.name] = {{"time_s", times}, {"pass", pass}};
                std::printf("[%s] equilibrium %s\n", pass ? "PASS" : "FAIL",
                            sc.name.c_str());
                ok = ok && pass;
            }
            if (suite == "switches" || suite == "all") {
                const auto rep = mesoacc::switch_stats(art.trace, sc);
                const bool pass = rep.max_per_second <= 20 &&
                                  rep.conformance_violations == 0 &&
                                  rep.unsafe_regime_rows == 0;
                report["switches"][sc.name] = {
                    {"max_per_second", rep.max_per_second},
                    {"conformance_violations", rep.conformance_violations},
                    {"unsafe_rows", rep.unsafe_regime_rows},
                    {"pass", pass}};
                std::printf("[%s] switches %s: max %lld/s, %lld conformance violation(s)\n",
                            pass ? "PASS" : "FAIL", sc.name.c_str(), rep.max_per_second,
                            rep.conformance_violations);
                ok = ok && pass;
            }
        }
    }

    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / ("verify_" + suite + ".json");
    write_text(path, report.dump(2) + "\n");
    std::printf("report: %s\n", path.string().c_str());
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-lane adaptive cruise control simulator and verifier"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = default_out_dir();
    bool flag_meso = false, flag_micro = false, fail_fast = false;
    std::optional<double> dt;

    CLI::App* run = app.add_subcommand("run", "Simulate one scenario");
    run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    run->add_flag("--meso", flag_meso, "Force the flow-adaptive variant");
    run->add_flag("--micro", flag_micro, "Force the purely local variant");
    run->add_option("--dt", dt, "Override the integration step (s)");
    run->add_option("--out", out_dir, "Output directory");
    run->add_flag("--fail-fast", fail_fast, "Stop at the first collision");

    std::string suite = "all";
    std::uint64_t seed = 20260810ull;
    CLI::App* verify = app.add_subcommand("verify", "Run the verification suites");
    verify->add_option("--suite", suite, "partition|brake|equilibrium|switches|all")
        ->check(CLI::IsMember({"partition", "brake", "equilibrium", "switches", "all"}));
    verify->add_option("--seed", seed, "Sampling seed");
    verify->add_option("--out", out_dir, "Output directory");

    std::string cmp_path;
    CLI::App* compare = app.add_subcommand(
        "compare", "Run both variants of a scenario and diff the outcomes");
    compare->add_option("scenario", cmp_path, "Scenario JSON file")->required();
    compare->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            if (flag_meso && flag_micro) {
                std::fprintf(stderr, "error: --meso and --micro are exclusive\n");
                return 2;
            }
            std::optional<bool> meso;
            if (flag_meso) meso = true;
            if (flag_micro) meso = false;
            return cmd_run(locate_scenario(scenario_path).string(), meso, dt, out_dir,
                           fail_fast);
        }
        if (verify->parsed()) return cmd_verify(suite, seed, out_dir);
        if (compare->parsed())
            return cmd_compare(locate_scenario(cmp_path).string(), out_dir);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
