// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "tailcache/random.hpp"

namespace tailcache {

using nlohmann::json;

namespace {

std::string fmt(const char* format, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, value);
    return buf;
}

std::string num(double value) { return fmt("%.4f", value); }

std::string xi_label(double xi_ms) { return fmt("%g", xi_ms); }

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::kPrecondition, "cannot write " + path.string());
    return out;
}

bool needs_foresight(PolicyFamily family) {
    return family == PolicyFamily::kTailBelady || family == PolicyFamily::kLengthAwareTlru;
}

}  // namespace

std::vector<Foresight> precompute_foresight(const Trace& trace) {
    std::vector<Foresight> out(trace.events.size());
    std::unordered_map<ConversationId, Foresight> next;
    for (std::size_t k = trace.events.size(); k-- > 0;) {
        const auto& e = trace.events[k];
        auto it = next.find(e.conversation_id);
        if (it != next.end()) out[k] = it->second;
        next[e.conversation_id] = Foresight{e.timestamp, e.prompt_blocks};
    }
    return out;
}

PolicyConfig resolve_policy(PolicyConfig policy, const Trace& trace) {
    if (!policy.q_hat_blocks && !trace.events.empty()) {
        policy.q_hat_blocks = static_cast<Blocks>(std::llround(trace.mean_prompt_blocks()));
    }
    if (policy.family == PolicyFamily::kEtlru && !policy.prompt_dist && !trace.events.empty()) {
        policy.prompt_dist = fit_prompt_distribution(trace);
    }
    return policy;
}

ReplayResult replay(const Trace& trace, const PolicyConfig& policy, Blocks capacity, const LatencyModel& model,
                    const ReplayOptions& options) {
    model.validate();
    if (const auto report = validate_trace(trace); !report.ok()) {
        throw Error(ErrorKind::kValidation, "invalid trace: " + report.summary());
    }
    const PolicyConfig resolved = resolve_policy(policy, trace);
    resolved.validate();
    if ((resolved.family == PolicyFamily::kEndAwareTlru || resolved.family == PolicyFamily::kLengthAwareTlru) &&
        !trace.has_last_turn_flags) {
        throw Error(ErrorKind::kClairvoyance,
                    std::string(to_string(resolved.family)) + " needs is_last_turn flags in the trace");
    }
    const bool clairvoyant = needs_foresight(resolved.family);
    const auto foresight = clairvoyant ? precompute_foresight(trace) : std::vector<Foresight>{};

    CacheState state(capacity);
    ReplayResult result;
    result.records.reserve(trace.events.size());
    result.served.reserve(trace.events.size());
    for (std::size_t k = 0; k < trace.events.size(); ++k) {
        const auto& event = trace.events[k];
        try {
            auto served = apply_arrival(state, event, resolved,
                                        clairvoyant ? std::optional<Foresight>(foresight[k]) : std::nullopt);
            if (options.check_invariants) state.check_invariants();
            RequestRecord r;
            r.conversation_id = served.conversation_id;
            r.timestamp = served.timestamp;
            r.uncached_blocks = served.uncached_blocks;
            r.cached_blocks_used = served.cached_blocks_used;
            r.ttft_ms = ttft(served.uncached_blocks, model);
            result.records.push_back(r);
            result.served.push_back(std::move(served));
        } catch (const Error& err) {
            throw Error(err.kind(), "event " + std::to_string(k) + ": " + err.what());
        }
    }
    const double xi_ms =
        options.xi_ms ? *options.xi_ms : static_cast<double>(resolved.xi_blocks) * model.alpha_ms_per_block;
    result.report = summarize(result.records, model, xi_ms, options.slos_ms);
    return result;
}

void write_records_csv(std::ostream& out, const ReplayResult& result) {
    out << "index,conversation_id,timestamp,job_blocks,cached_blocks,uncached_blocks,ttft_ms,evictions\n";
    for (std::size_t k = 0; k < result.records.size(); ++k) {
        const auto& r = result.records[k];
        const auto& s = result.served[k];
        out << k << ',' << r.conversation_id << ',' << fmt("%.6f", r.timestamp) << ',' << s.job_blocks << ','
            << r.cached_blocks_used << ',' << r.uncached_blocks << ',' << num(r.ttft_ms) << ',';
        bool first = true;
        for (const auto& e : s.eviction.evictions) {
            if (!first) out << ';';
            out << e.conversation_id << ':' << e.blocks << ':' << to_string(e.phase);
            first = false;
        }
        out << '\n';
    }
}

void RunConfig::validate() const {
    if (policies.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one policy is required");
    if (capacities.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one capacity is required");
    if (xi_ms.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one threshold is required");
    if (trace_path.has_value() == synthetic.has_value()) {
        throw Error(ErrorKind::kInvalidConfig, "give exactly one of trace or synthetic");
    }
    model.validate();
    for (Blocks c : capacities) {
        if (c <= 0) throw Error(ErrorKind::kInvalidConfig, "capacities must be positive");
    }
    for (double x : xi_ms) {
        if (!(x >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "thresholds must be non-negative");
    }
    bool has_baseline = false;
    for (std::size_t i = 0; i < policies.size(); ++i) {
        has_baseline = has_baseline || policies[i].name == baseline;
        for (std::size_t j = 0; j < i; ++j) {
            if (policies[j].name == policies[i].name) {
                throw Error(ErrorKind::kInvalidConfig, "duplicate policy name '" + policies[i].name + "'");
            }
        }
    }
    if (!has_baseline) throw Error(ErrorKind::kInvalidConfig, "baseline '" + baseline + "' is not among the policies");
}

Trace RunConfig::load_trace() const {
    if (trace_path) {
        LoadOptions opts = load;
        opts.block_size = model.block_size;
        return load_conversations(*trace_path, opts);
    }
    SyntheticParams params = *synthetic;
    params.seed = seed;
    return generate_synthetic(params);
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    try {
        if (j.contains("trace")) c.trace_path = j["trace"].get<std::string>();
        if (j.contains("max_turns")) c.load.max_turns = j["max_turns"].get<std::size_t>();
        if (j.contains("synthetic")) c.synthetic = synthetic_params_from_json(j["synthetic"]);
        for (const auto& p : j.at("policies")) {
            NamedPolicy np;
            np.config = policy_config_from_json(p);
            np.name = p.value("name", std::string(to_string(np.config.family)));
            c.policies.push_back(std::move(np));
        }
        c.capacities = j.at("capacities").get<std::vector<Blocks>>();
        c.xi_ms = j.at("xi_ms").get<std::vector<double>>();
        if (j.contains("latency_model")) {
            const auto& m = j["latency_model"];
            c.model.alpha_ms_per_block = m.value("alpha_ms_per_block", c.model.alpha_ms_per_block);
            c.model.block_size = m.value("block_size", c.model.block_size);
        }
        if (j.contains("slos_ms")) c.slos_ms = j["slos_ms"].get<std::vector<double>>();
        c.output_dir = j.value("output_dir", c.output_dir);
        c.seed = j.value("seed", c.seed);
        c.baseline = j.value("baseline", c.baseline);
        c.write_charts = j.value("charts", c.write_charts);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad run config: ") + e.what());
    }
    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json policies = json::array();
    for (const auto& p : c.policies) {
        json pj = to_json(p.config);
        pj["name"] = p.name;
        policies.push_back(pj);
    }
    json j{{"policies", policies},
           {"capacities", c.capacities},
           {"xi_ms", c.xi_ms},
           {"latency_model", {{"alpha_ms_per_block", c.model.alpha_ms_per_block}, {"block_size", c.model.block_size}}},
           {"slos_ms", c.slos_ms},
           {"output_dir", c.output_dir},
           {"seed", c.seed},
           {"baseline", c.baseline},
           {"charts", c.write_charts}};
    if (c.trace_path) j["trace"] = *c.trace_path;
    if (c.load.max_turns) j["max_turns"] = *c.load.max_turns;
    if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
    return j;
}

const char* to_string(Metric metric) {
    switch (metric) {
        case Metric::kTel: return "tel";
        case Metric::kP50: return "p50";
        case Metric::kP90: return "p90";
        case Metric::kP95: return "p95";
        case Metric::kP99: return "p99";
        case Metric::kMean: return "mean";
    }
    return "?";
}

double metric_value(const MetricsReport& report, Metric metric) {
    switch (metric) {
        case Metric::kTel: return report.tel_ms;
        case Metric::kP50: return report.p50;
        case Metric::kP90: return report.p90;
        case Metric::kP95: return report.p95;
        case Metric::kP99: return report.p99;
        case Metric::kMean: return report.mean;
    }
    return 0.0;
}

const MetricsReport& ComparisonTable::at(const std::string& policy, Blocks capacity, double xi) const {
    auto it = cells.find(CellKey{policy, capacity, xi});
    if (it == cells.end()) {
        throw Error(ErrorKind::kPrecondition,
                    "no cell (" + policy + ", " + std::to_string(capacity) + ", " + xi_label(xi) + ")");
    }
    return it->second;
}

std::optional<double> ComparisonTable::improvement(const std::string& policy, Blocks capacity, double xi,
                                                   Metric metric) const {
    const double base = metric_value(at(baseline, capacity, xi), metric);
    const double variant = metric_value(at(policy, capacity, xi), metric);
    if (base <= 0.0) return std::nullopt;
    return relative_improvement(base, variant);
}

ComparisonTable compare(const RunConfig& config) {
    config.validate();
    return compare(config, config.load_trace());
}

ComparisonTable compare(const RunConfig& config, const Trace& trace) {
    config.validate();
    ComparisonTable table;
    table.baseline = config.baseline;
    table.capacities = config.capacities;
    table.xi_ms = config.xi_ms;
    table.slos_ms = config.slos_ms;
    for (const auto& p : config.policies) table.policies.push_back(p.name);
    for (const auto& p : config.policies) {
        for (Blocks capacity : config.capacities) {
            for (double xi : config.xi_ms) {
                try {
                    PolicyConfig pc = p.config;
                    pc.xi_blocks = config.model.xi_blocks(xi);
                    ReplayOptions opts;
                    opts.xi_ms = xi;
                    opts.slos_ms = config.slos_ms;
                    table.cells[CellKey{p.name, capacity, xi}] = replay(trace, pc, capacity, config.model, opts).report;
                } catch (const Error& err) {
                    throw Error(err.kind(), "cell (policy=" + p.name + ", capacity=" + std::to_string(capacity) +
                                                ", xi_ms=" + xi_label(xi) + "): " + err.what());
                }
            }
        }
    }
    return table;
}

void write_table_csv(std::ostream& out, const ComparisonTable& table) {
    out << "policy,capacity,xi_ms,xi_blocks,n,tel_blocks,tel_ms,p50,p90,p95,p99,mean";
    for (double s : table.slos_ms) out << ",slo" << xi_label(s) << "_count,slo" << xi_label(s) << "_rate";
    out << '\n';
    for (const auto& policy : table.policies) {
        for (Blocks capacity : table.capacities) {
            for (double xi : table.xi_ms) {
                const auto& r = table.at(policy, capacity, xi);
                out << policy << ',' << capacity << ',' << xi_label(xi) << ',' << r.xi_blocks << ',' << r.count << ','
                    << r.tel_blocks << ',' << num(r.tel_ms) << ',' << num(r.p50) << ',' << num(r.p90) << ','
                    << num(r.p95) << ',' << num(r.p99) << ',' << num(r.mean);
                for (const auto& s : r.slos) out << ',' << s.count << ',' << fmt("%.6f", s.rate);
                out << '\n';
            }
        }
    }
}

namespace {
constexpr Metric kImprovementMetrics[] = {Metric::kTel, Metric::kP50, Metric::kP90,
                                          Metric::kP95, Metric::kP99, Metric::kMean};
}

void write_improvement_csv(std::ostream& out, const ComparisonTable& table) {
    out << "policy,baseline,capacity,xi_ms";
    for (Metric m : kImprovementMetrics) out << ',' << to_string(m) << "_pct";
    out << '\n';
    for (const auto& policy : table.policies) {
        if (policy == table.baseline) continue;
        for (Blocks capacity : table.capacities) {
            for (double xi : table.xi_ms) {
                out << policy << ',' << table.baseline << ',' << capacity << ',' << xi_label(xi);
                for (Metric m : kImprovementMetrics) {
                    const auto v = table.improvement(policy, capacity, xi, m);
                    out << ',' << (v ? fmt("%.1f", *v) : std::string("n/a"));
                }
                out << '\n';
            }
        }
    }
}

json to_json(const ComparisonTable& table) {
    json cells = json::array();
    for (const auto& [key, report] : table.cells) {
        json c{{"policy", key.policy}, {"capacity", key.capacity}, {"xi_ms", key.xi_ms}, {"report", to_json(report)}};
        if (key.policy != table.baseline) {
            json imp = json::object();
            for (Metric m : kImprovementMetrics) {
                const auto v = table.improvement(key.policy, key.capacity, key.xi_ms, m);
                imp[to_string(m)] = v ? json(std::round(*v * 10.0) / 10.0) : json(nullptr);
            }
            c["improvement_pct"] = imp;
        }
        cells.push_back(c);
    }
    return {{"baseline", table.baseline},
            {"policies", table.policies},
            {"capacities", table.capacities},
            {"xi_ms", table.xi_ms},
            {"cells", cells}};
}

std::vector<std::string> write_comparison(const ComparisonTable& table, const RunConfig& config) {
    namespace fs = std::filesystem;
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    std::vector<std::string> written;
    {
        auto out = open_output(dir / "table.csv");
        write_table_csv(out, table);
        written.push_back((dir / "table.csv").string());
    }
    {
        auto out = open_output(dir / "improvement.csv");
        write_improvement_csv(out, table);
        written.push_back((dir / "improvement.csv").string());
    }
    {
        auto out = open_output(dir / "table.json");
        out << to_json(table).dump(2) << '\n';
        written.push_back((dir / "table.json").string());
    }
    if (config.write_charts) {
        for (double xi : table.xi_ms) {
            const auto path = dir / ("capacity_xi" + xi_label(xi) + ".svg");
            auto out = open_output(path);
            out << render_capacity_chart(table, xi);
            written.push_back(path.string());
        }
    }
    return written;
}

OracleCheckReport oracle_check(std::size_t count, const OracleBounds& bounds, std::uint64_t seed, CachingMode mode) {
    bounds.validate();
    OracleCheckReport report;
    report.count = count;
    report.mode = mode;
    report.seed = seed;
    const LatencyModel model;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        const auto instance = random_instance(rng, bounds, mode);
        if (instance.xi_blocks == 0) ++report.xi_zero_instances;
        const auto optimum = solve_hindsight_tel(instance);
        for (std::size_t s : optimum.states_explored) report.max_states_explored = std::max(report.max_states_explored, s);

        PolicyConfig belady;
        belady.family = PolicyFamily::kTailBelady;
        belady.xi_blocks = instance.xi_blocks;
        belady.caching_mode = mode;
        const auto result = replay(instance_to_trace(instance), belady, instance.capacity, model);
        const Blocks replay_tel = tel_blocks(result.records, instance.xi_blocks);
        if (replay_tel != optimum.tel_blocks) {
            report.mismatches.push_back(OracleMismatch{i, instance, replay_tel, optimum.tel_blocks});
        }
    }
    return report;
}

json to_json(const OracleCheckReport& report) {
    json mismatches = json::array();
    for (const auto& m : report.mismatches) {
        mismatches.push_back({{"index", m.index},
                              {"replay_tel_blocks", m.replay_tel},
                              {"optimal_tel_blocks", m.optimal_tel},
                              {"instance", to_json(m.instance)}});
    }
    return {{"count", report.count},
            {"caching_mode", to_string(report.mode)},
            {"seed", report.seed},
            {"xi_zero_instances", report.xi_zero_instances},
            {"max_states_explored", report.max_states_explored},
            {"mismatch_count", report.mismatches.size()},
            {"mismatches", mismatches}};
}

bool McReport::ok() const {
    return std::all_of(comparisons.begin(), comparisons.end(), [](const McComparison& c) { return c.passed; });
}

McReport monte_carlo_policy_test(const McConfig& config) {
    if (config.runs < 2) throw Error(ErrorKind::kInvalidConfig, "at least two runs are needed for a standard error");
    config.workload.validate();
    auto prepare = [&](PolicyConfig p) {
        p.xi_blocks = config.xi_blocks;
        if (p.family == PolicyFamily::kEtlru) {
            if (!p.prompt_dist) p.prompt_dist = config.workload.prompt_length_dist;
            p.death_rate = config.workload.death_rate;
            p.nominal_turn_rate = config.workload.turn_rate;
            p.nominal_turn_rates = config.workload.turn_rate_overrides;
        }
        if (!p.q_hat_blocks) p.q_hat_blocks = static_cast<Blocks>(std::llround(config.workload.prompt_length_dist.mean()));
        return p;
    };
    const PolicyConfig target = prepare(config.target.config);
    std::vector<PolicyConfig> comparators;
    for (const auto& c : config.comparators) comparators.push_back(prepare(c.config));

    const LatencyModel model;
    std::vector<double> target_tel(config.runs);
    std::vector<std::vector<double>> comparator_tel(comparators.size(), std::vector<double>(config.runs));
    auto run_tel = [&](const Trace& trace, const PolicyConfig& p) {
        ReplayOptions opts;
        opts.xi_ms = static_cast<double>(config.xi_blocks);
        opts.slos_ms.clear();
        return static_cast<double>(replay(trace, p, config.capacity, model, opts).report.tel_blocks);
    };
    for (std::size_t r = 0; r < config.runs; ++r) {
        SyntheticParams params = config.workload;
        params.seed = derive_seed(config.seed, r);
        const Trace trace = generate_synthetic(params);
        target_tel[r] = run_tel(trace, target);
        for (std::size_t c = 0; c < comparators.size(); ++c) comparator_tel[c][r] = run_tel(trace, comparators[c]);
    }

    McReport report;
    report.runs = config.runs;
    report.capacity = config.capacity;
    report.xi_blocks = config.xi_blocks;
    report.target = config.target.name;
    const double n = static_cast<double>(config.runs);
    for (std::size_t c = 0; c < comparators.size(); ++c) {
        McComparison cmp;
        cmp.comparator = config.comparators[c].name;
        double sum_t = 0.0, sum_c = 0.0, sum_d = 0.0;
        for (std::size_t r = 0; r < config.runs; ++r) {
            const double d = target_tel[r] - comparator_tel[c][r];
            sum_t += target_tel[r];
            sum_c += comparator_tel[c][r];
            sum_d += d;
            if (d < 0.0) ++cmp.target_better;
            if (d == 0.0) ++cmp.ties;
        }
        cmp.target_mean_tel = sum_t / n;
        cmp.comparator_mean_tel = sum_c / n;
        cmp.mean_difference = sum_d / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < config.runs; ++r) {
            const double d = target_tel[r] - comparator_tel[c][r] - cmp.mean_difference;
            ss += d * d;
        }
        cmp.standard_error = std::sqrt(ss / (n - 1.0) / n);
        cmp.ci_low = cmp.mean_difference - 1.96 * cmp.standard_error;
        cmp.ci_high = cmp.mean_difference + 1.96 * cmp.standard_error;
        cmp.passed = cmp.ci_high <= 0.0;
        report.comparisons.push_back(cmp);
    }
    return report;
}

McConfig mc_config_from_json(const json& j) {
    McConfig c;
    auto named = [](const json& p) {
        NamedPolicy np;
        np.config = policy_config_from_json(p);
        np.name = p.value("name", std::string(to_string(np.config.family)));
        return np;
    };
    try {
        if (j.contains("workload")) c.workload = synthetic_params_from_json(j["workload"]);
        c.target = named(j.at("target"));
        for (const auto& p : j.at("comparators")) c.comparators.push_back(named(p));
        c.capacity = j.at("capacity").get<Blocks>();
        c.xi_blocks = j.value("xi_blocks", c.xi_blocks);
        c.runs = j.value("runs", c.runs);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad mc-test config: ") + e.what());
    }
    if (c.capacity <= 0) throw Error(ErrorKind::kInvalidConfig, "capacity must be positive");
    return c;
}

json to_json(const McReport& report) {
    json comparisons = json::array();
    for (const auto& c : report.comparisons) {
        comparisons.push_back({{"comparator", c.comparator},
                               {"target_mean_tel_blocks", c.target_mean_tel},
                               {"comparator_mean_tel_blocks", c.comparator_mean_tel},
                               {"mean_difference", c.mean_difference},
                               {"standard_error", c.standard_error},
                               {"ci95", {c.ci_low, c.ci_high}},
                               {"target_better_runs", c.target_better},
                               {"tied_runs", c.ties},
                               {"passed", c.passed}});
    }
    return {{"runs", report.runs},
            {"capacity", report.capacity},
            {"xi_blocks", report.xi_blocks},
            {"target", report.target},
            {"passed", report.ok()},
            {"comparisons", comparisons}};
}

}  // namespace tailcache
