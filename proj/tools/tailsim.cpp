// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

// tailsim: trace generation, replay, policy comparison and oracle checks.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tailcache/sim.hpp"

using namespace tailcache;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kParse, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kParse, path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::kPrecondition, "cannot write " + path);
    out << j.dump(2) << '\n';
}

CachingMode parse_mode(const std::string& s) {
    if (s == "optional") return CachingMode::kOptional;
    if (s == "forced") return CachingMode::kForced;
    throw Error(ErrorKind::kInvalidConfig, "unknown caching mode '" + s + "'");
}

struct GenerateArgs {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_events;
    std::string out;
};

int run_generate(const GenerateArgs& a) {
    json j = a.config.empty() ? json::object() : read_json(a.config);
    if (!a.preset.empty()) j["preset"] = a.preset;
    SyntheticParams params = synthetic_params_from_json(j);
    if (a.seed) params.seed = *a.seed;
    if (a.max_events) params.max_events = *a.max_events;
    const Trace trace = generate_synthetic(params);
    save_trace(a.out, trace);
    std::cout << "wrote " << trace.events.size() << " turns from " << trace.conversation_count()
              << " conversations to " << a.out << '\n';
    return 0;
}

struct ReplayArgs {
    std::string config;
    std::string trace;
    std::string family;
    std::optional<Blocks> capacity;
    std::optional<double> xi_ms;
    std::optional<Blocks> q_hat;
    std::optional<double> alpha;
    std::optional<Blocks> block_size;
    std::string mode;
    std::string out_dir;
};

int run_replay(const ReplayArgs& a) {
    json j = a.config.empty() ? json::object() : read_json(a.config);
    if (!a.trace.empty()) j["trace"] = a.trace;
    if (!a.family.empty()) j["policy"]["family"] = a.family;
    if (a.capacity) j["capacity"] = *a.capacity;
    if (a.xi_ms) j["xi_ms"] = *a.xi_ms;
    if (a.q_hat) j["policy"]["q_hat_blocks"] = *a.q_hat;
    if (a.alpha) j["latency_model"]["alpha_ms_per_block"] = *a.alpha;
    if (a.block_size) j["latency_model"]["block_size"] = *a.block_size;
    if (!a.mode.empty()) j["policy"]["caching_mode"] = a.mode;
    if (!a.out_dir.empty()) j["output_dir"] = a.out_dir;

    LatencyModel model;
    Blocks capacity = 0;
    double xi_ms = 0.0;
    std::vector<double> slos{200.0};
    std::string trace_path, out_dir;
    PolicyConfig policy;
    try {
        trace_path = j.at("trace").get<std::string>();
        capacity = j.at("capacity").get<Blocks>();
        xi_ms = j.value("xi_ms", 0.0);
        if (j.contains("latency_model")) {
            model.alpha_ms_per_block = j["latency_model"].value("alpha_ms_per_block", model.alpha_ms_per_block);
            model.block_size = j["latency_model"].value("block_size", model.block_size);
        }
        if (j.contains("slos_ms")) slos = j["slos_ms"].get<std::vector<double>>();
        out_dir = j.value("output_dir", std::string("out"));
        policy = policy_config_from_json(j.value("policy", json{{"family", "lru"}}));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad replay config: ") + e.what());
    }
    model.validate();
    policy.xi_blocks = model.xi_blocks(xi_ms);

    LoadOptions load;
    load.block_size = model.block_size;
    if (j.contains("max_turns")) load.max_turns = j["max_turns"].get<std::size_t>();
    const Trace trace = load_conversations(trace_path, load);
    ReplayOptions opts;
    opts.xi_ms = xi_ms;
    opts.slos_ms = slos;
    const auto result = replay(trace, policy, capacity, model, opts);

    std::filesystem::create_directories(out_dir);
    const auto records_path = (std::filesystem::path(out_dir) / "records.csv").string();
    std::ofstream records(records_path, std::ios::binary);
    if (!records) throw Error(ErrorKind::kPrecondition, "cannot write " + records_path);
    write_records_csv(records, result);
    json report = to_json(result.report);
    report["policy"] = to_json(resolve_policy(policy, trace));
    report["capacity"] = capacity;
    write_json((std::filesystem::path(out_dir) / "report.json").string(), report);
    std::cout << to_string(policy.family) << " C=" << capacity << " xi=" << xi_ms << "ms: TEL "
              << result.report.tel_ms << " ms, P90 " << result.report.p90 << " ms, P99 " << result.report.p99
              << " ms\n";
    return 0;
}

struct CompareArgs {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool no_charts = false;
};

int run_compare(const CompareArgs& a) {
    json j = read_json(a.config);
    if (!a.out_dir.empty()) j["output_dir"] = a.out_dir;
    if (a.seed) j["seed"] = *a.seed;
    if (a.no_charts) j["charts"] = false;
    const RunConfig config = run_config_from_json(j);
    const auto table = compare(config);
    for (const auto& path : write_comparison(table, config)) std::cout << "wrote " << path << '\n';
    return 0;
}

struct OracleArgs {
    std::size_t count = 200;
    std::uint64_t seed = 0;
    std::string mode = "both";
    OracleBounds bounds;
    std::string out;
};

int run_oracle_check(const OracleArgs& a) {
    std::vector<CachingMode> modes;
    if (a.mode == "both") {
        modes = {CachingMode::kOptional, CachingMode::kForced};
    } else {
        modes = {parse_mode(a.mode)};
    }
    json reports = json::array();
    bool ok = true;
    for (CachingMode mode : modes) {
        const auto report = oracle_check(a.count, a.bounds, a.seed, mode);
        std::cout << to_string(mode) << ": " << report.count << " instances, " << report.mismatches.size()
                  << " mismatches\n";
        ok = ok && report.ok();
        reports.push_back(to_json(report));
    }
    if (!a.out.empty()) write_json(a.out, reports);
    return ok ? 0 : 1;
}

struct McArgs {
    std::string config;
    std::optional<std::size_t> runs;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int run_mc_test(const McArgs& a) {
    McConfig config = mc_config_from_json(read_json(a.config));
    if (a.runs) config.runs = *a.runs;
    if (a.seed) config.seed = *a.seed;
    const auto report = monte_carlo_policy_test(config);
    for (const auto& c : report.comparisons) {
        std::printf("%s vs %s: mean diff %.3f blocks, 95%% CI [%.3f, %.3f] %s\n", report.target.c_str(),
                    c.comparator.c_str(), c.mean_difference, c.ci_low, c.ci_high, c.passed ? "ok" : "FAILED");
    }
    if (!a.out.empty()) write_json(a.out, to_json(report));
    return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tail-latency-aware KV cache eviction simulator"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate a synthetic multi-turn trace");
    g->add_option("--config", gen.config, "SyntheticParams JSON file");
    g->add_option("--preset", gen.preset, "sharegpt or wildchat");
    g->add_option("--seed", gen.seed);
    g->add_option("--max-events", gen.max_events);
    g->add_option("--out", gen.out, "Output trace (JSON lines)")->required();

    ReplayArgs rep;
    auto* r = app.add_subcommand("replay", "Replay one policy on a trace");
    r->add_option("--config", rep.config, "Replay JSON file");
    r->add_option("--trace", rep.trace);
    r->add_option("--policy", rep.family, "Policy family");
    r->add_option("--capacity", rep.capacity, "Cache capacity in blocks");
    r->add_option("--xi-ms", rep.xi_ms, "Tail threshold in ms");
    r->add_option("--q-hat", rep.q_hat, "Next-prompt estimate in blocks");
    r->add_option("--alpha", rep.alpha, "Prefill ms per block");
    r->add_option("--block-size", rep.block_size, "Tokens per block");
    r->add_option("--caching-mode", rep.mode, "optional or forced");
    r->add_option("--out-dir", rep.out_dir);

    CompareArgs cmp;
    auto* c = app.add_subcommand("compare", "Sweep policies, capacities and thresholds");
    c->add_option("--config", cmp.config, "RunConfig JSON file")->required();
    c->add_option("--out-dir", cmp.out_dir);
    c->add_option("--seed", cmp.seed);
    c->add_flag("--no-charts", cmp.no_charts);

    OracleArgs orc;
    auto* o = app.add_subcommand("oracle-check", "Check tail-optimized Belady against the exhaustive optimum");
    o->add_option("--count", orc.count);
    o->add_option("--seed", orc.seed);
    o->add_option("--mode", orc.mode, "optional, forced or both");
    o->add_option("--max-conversations", orc.bounds.max_conversations);
    o->add_option("--max-steps", orc.bounds.max_steps);
    o->add_option("--max-capacity", orc.bounds.max_capacity);
    o->add_option("--max-turn-blocks", orc.bounds.max_turn_blocks);
    o->add_option("--max-xi", orc.bounds.max_xi_blocks);
    o->add_option("--out", orc.out, "Report JSON file");

    McArgs mc;
    auto* m = app.add_subcommand("mc-test", "Paired Monte-Carlo TEL comparison");
    m->add_option("--config", mc.config, "Monte-Carlo JSON file")->required();
    m->add_option("--runs", mc.runs);
    m->add_option("--seed", mc.seed);
    m->add_option("--out", mc.out, "Report JSON file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*g) return run_generate(gen);
        if (*r) return run_replay(rep);
        if (*c) return run_compare(cmp);
        if (*o) return run_oracle_check(orc);
        if (*m) return run_mc_test(mc);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
