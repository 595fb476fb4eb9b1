// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "tailcache/metrics.hpp"
#include "tailcache/oracle.hpp"
#include "tailcache/policy.hpp"
#include "tailcache/trace.hpp"
#include "tailcache/workload.hpp"

namespace tailcache {

/// Foresight for the arriving conversation after each event, in event order. Computed in one
/// backward pass; only clairvoyant families ever see it.
std::vector<Foresight> precompute_foresight(const Trace& trace);

/// Fills workload-dependent defaults: Q-hat = rounded mean prompt, ET-LRU prompt distribution =
/// empirical prompt lengths of the trace.
PolicyConfig resolve_policy(PolicyConfig policy, const Trace& trace);

struct ReplayOptions {
    // Threshold used for the report; unset means policy.xi_blocks * alpha.
    std::optional<double> xi_ms;
    std::vector<double> slos_ms{200.0};
    // Runs CacheState::check_invariants after every event.
    bool check_invariants = false;
};

struct ReplayResult {
    std::vector<RequestRecord> records;
    std::vector<ServedRecord> served;
    MetricsReport report;
};

/// Serves every event in order. Errors carry the offending event index.
ReplayResult replay(const Trace& trace, const PolicyConfig& policy, Blocks capacity, const LatencyModel& model,
                    const ReplayOptions& options = {});

/// Per-request CSV: index, conversation, timestamp, job, cached, uncached, ttft, evictions.
void write_records_csv(std::ostream& out, const ReplayResult& result);

struct NamedPolicy {
    std::string name;
    PolicyConfig config;
};

struct RunConfig {
    std::optional<std::string> trace_path;
    LoadOptions load;
    std::optional<SyntheticParams> synthetic;
    std::vector<NamedPolicy> policies;
    std::vector<Blocks> capacities;
    std::vector<double> xi_ms;
    LatencyModel model;
    std::vector<double> slos_ms{200.0};
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::string baseline = "lru";
    bool write_charts = true;

    /// Throws Error(kInvalidConfig).
    void validate() const;
    /// Loads the trace file or generates the synthetic trace (seeded by `seed`).
    Trace load_trace() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

struct CellKey {
    std::string policy;
    Blocks capacity;
    double xi_ms;
    auto operator<=>(const CellKey&) const = default;
};

enum class Metric { kTel, kP50, kP90, kP95, kP99, kMean };
const char* to_string(Metric metric);
double metric_value(const MetricsReport& report, Metric metric);

struct ComparisonTable {
    std::string baseline;
    std::vector<std::string> policies;
    std::vector<Blocks> capacities;
    std::vector<double> xi_ms;
    std::vector<double> slos_ms;
    std::map<CellKey, MetricsReport> cells;

    const MetricsReport& at(const std::string& policy, Blocks capacity, double xi_ms) const;
    /// Improvement of `policy` over the baseline in percent; nullopt when the baseline value is 0.
    std::optional<double> improvement(const std::string& policy, Blocks capacity, double xi_ms,
                                      Metric metric) const;
};

/// Replays every (policy, capacity, xi) cell on one trace. A failing cell aborts with its
/// coordinates.
ComparisonTable compare(const RunConfig& config);
ComparisonTable compare(const RunConfig& config, const Trace& trace);

void write_table_csv(std::ostream& out, const ComparisonTable& table);
/// Percentages with one decimal; "n/a" when the baseline value is 0.
void write_improvement_csv(std::ostream& out, const ComparisonTable& table);
nlohmann::json to_json(const ComparisonTable& table);
/// Latency-vs-capacity chart (P90, P95, P99 panels, one line per policy) for one threshold.
std::string render_capacity_chart(const ComparisonTable& table, double xi_ms);
/// Writes table.csv, improvement.csv, table.json and, if enabled, one SVG per threshold.
std::vector<std::string> write_comparison(const ComparisonTable& table, const RunConfig& config);

struct OracleMismatch {
    std::size_t index = 0;
    HindsightInstance instance;
    Blocks replay_tel = 0;
    Blocks optimal_tel = 0;
};

struct OracleCheckReport {
    std::size_t count = 0;
    CachingMode mode = CachingMode::kOptional;
    std::uint64_t seed = 0;
    std::size_t xi_zero_instances = 0;
    std::size_t max_states_explored = 0;
    std::vector<OracleMismatch> mismatches;
    bool ok() const { return mismatches.empty(); }
};

/// Tail-optimized Belady replay versus the exhaustive optimum on `count` random instances
/// (instance i uses seed stream i). Forced mode only draws feasible instances.
OracleCheckReport oracle_check(std::size_t count, const OracleBounds& bounds, std::uint64_t seed,
                               CachingMode mode);
nlohmann::json to_json(const OracleCheckReport& report);

struct McConfig {
    SyntheticParams workload;
    NamedPolicy target;
    std::vector<NamedPolicy> comparators;
    Blocks capacity = 1;
    Blocks xi_blocks = 0;
    std::size_t runs = 1000;
    std::uint64_t seed = 0;
};

struct McComparison {
    std::string comparator;
    double target_mean_tel = 0.0;
    double comparator_mean_tel = 0.0;
    double mean_difference = 0.0;  // target - comparator
    double standard_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t target_better = 0;
    std::size_t ties = 0;
    // Upper end of the 95% interval is at most zero.
    bool passed = false;
};

struct McReport {
    std::size_t runs = 0;
    Blocks capacity = 0;
    Blocks xi_blocks = 0;
    std::string target;
    std::vector<McComparison> comparisons;
    bool ok() const;
};

/// Paired comparison: run r generates one synthetic trace (seed stream r) and replays every
/// policy on it with alpha = 1, so TEL is in blocks.
McReport monte_carlo_policy_test(const McConfig& config);
McConfig mc_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const McReport& report);

}  // namespace tailcache
