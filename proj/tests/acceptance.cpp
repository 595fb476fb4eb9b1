// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "tailcache/metrics.hpp"
#include "tailcache/oracle.hpp"
#include "tailcache/policy.hpp"
#include "tailcache/sim.hpp"
#include "tailcache/workload.hpp"

using namespace tailcache;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

struct Outcome {
    bool pass = true;
    std::string detail;
};

void run(int number, const char* title, double limit_s, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = elapsed < limit_s;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s %2d %s: %s [%.2fs / limit %.0fs%s]\n", pass ? "PASS" : "FAIL", number, title, out.detail.c_str(),
                elapsed, limit_s, in_time ? "" : ", too slow");
    std::fflush(stdout);
}

std::string fmt(const char* format, double a = 0, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

std::string eviction_sequence(const std::vector<ServedRecord>& served, bool with_phase) {
    std::ostringstream out;
    for (std::size_t k = 0; k < served.size(); ++k) {
        for (const auto& e : served[k].eviction.evictions) {
            out << k << ':' << e.conversation_id << ':' << e.blocks;
            if (with_phase) out << ':' << to_string(e.phase);
            out << ';';
        }
    }
    return out.str();
}

Outcome two_conversation_example() {
    Trace t;
    t.events = {TurnEvent{0, 1.0, 100, 0, false}, TurnEvent{1, 2.0, 100, 0, true}, TurnEvent{0, 3.0, 100, 0, true}};
    PolicyConfig lru;
    PolicyConfig tlru;
    tlru.family = PolicyFamily::kTlru;
    tlru.xi_blocks = 150;
    tlru.q_hat_blocks = 100;
    auto max_uncached = [&](const PolicyConfig& c) {
        Blocks m = 0;
        for (const auto& r : replay(t, c, 100, LatencyModel{}).records) m = std::max(m, r.uncached_blocks);
        return m;
    };
    const Blocks a = max_uncached(lru), b = max_uncached(tlru);
    const double imp = relative_improvement(static_cast<double>(a), static_cast<double>(b));
    return {a == 200 && b == 150 && imp == 25.0, fmt("LRU max %.0f, T-LRU max %.0f, improvement %.1f%%", a, b, imp)};
}

Outcome sizing() {
    const auto per_token = kv_bytes_per_token(32, 32, 128, 2);
    const auto total = 10000 * per_token;
    const double gb = bytes_to_gb(total);
    const bool ok = per_token == 524288 && total == 5242880000LL && std::abs(gb - 4.8828) <= 1e-4;
    return {ok, fmt("%.0f bytes/token, %.0f bytes, %.6f GB", static_cast<double>(per_token), static_cast<double>(total), gb)};
}

Outcome belady_optimality() {
    const std::size_t count = 1000;
    const auto opt = oracle_check(count, OracleBounds{}, 2026, CachingMode::kOptional);
    const auto forced = oracle_check(count, OracleBounds{}, 2026, CachingMode::kForced);
    return {opt.ok() && forced.ok() && opt.count == count && forced.count == count,
            fmt("%.0f instances per mode, mismatches optional %.0f, forced %.0f", count,
                static_cast<double>(opt.mismatches.size()), static_cast<double>(forced.mismatches.size()))};
}

Outcome lru_reduction() {
    std::size_t traces = 0, identical_tlru = 0, identical_etlru = 0, total_evictions = 0;
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        auto p = seed % 2 == 0 ? sharegpt_preset() : wildchat_preset();
        p.seed = seed;
        p.max_events = 500;
        const auto trace = generate_synthetic(p);
        const Blocks capacity = seed % 2 == 0 ? 300 + 100 * static_cast<Blocks>(seed % 7) : 3000 + 1000 * static_cast<Blocks>(seed % 5);
        PolicyConfig lru;
        PolicyConfig tlru;
        tlru.family = PolicyFamily::kTlru;
        tlru.xi_blocks = 0;
        tlru.q_hat_blocks = 0;
        PolicyConfig etlru;
        etlru.family = PolicyFamily::kEtlru;
        etlru.xi_blocks = 0;
        etlru.prompt_dist = PromptLengthDistribution::point_mass(100);
        etlru.death_rate = p.death_rate;
        etlru.nominal_turn_rate = p.turn_rate;
        const auto base = replay(trace, lru, capacity, LatencyModel{});
        const auto a = replay(trace, tlru, capacity, LatencyModel{});
        const auto b = replay(trace, etlru, capacity, LatencyModel{});
        ++traces;
        if (eviction_sequence(a.served, true) == eviction_sequence(base.served, true)) ++identical_tlru;
        if (eviction_sequence(b.served, false) == eviction_sequence(base.served, false)) ++identical_etlru;
        for (const auto& s : base.served) total_evictions += s.eviction.evictions.size();
    }
    return {identical_tlru == traces && identical_etlru == traces && total_evictions > 0,
            fmt("%.0f traces, T-LRU identical %.0f, ET-LRU identical %.0f, %.0f evictions compared",
                static_cast<double>(traces), static_cast<double>(identical_tlru), static_cast<double>(identical_etlru),
                static_cast<double>(total_evictions))};
}

// One-step expected excess evaluated directly from the model.
double one_step_cost(const CacheState& s, const std::vector<Blocks>& y, double now, const PolicyConfig& cfg) {
    double total = 0.0;
    for (ConversationId i = 0; i < y.size(); ++i) {
        const auto& e = s.entry(i);
        const double lambda = cfg.nominal_rate_for(i) * std::exp(-cfg.death_rate * (now - e.last_turn_timestamp));
        double expected = 0.0;
        for (const auto& p : cfg.prompt_dist->support()) {
            const Blocks excess = e.history_blocks + p.blocks - y[i] - cfg.xi_blocks;
            if (excess > 0) expected += p.probability * static_cast<double>(excess);
        }
        total += lambda * expected;
    }
    return total;
}

Outcome greedy_optimality() {
    Rng rng(515);
    std::size_t cases = 0, optimal = 0;
    double worst_gap = 0.0;
    while (cases < 500) {
        const Blocks capacity = rng.uniform_int(1, 6);
        const auto n = static_cast<ConversationId>(rng.uniform_int(1, 4));
        const Blocks q1 = rng.uniform_int(0, 4);
        const Blocks q2 = q1 + rng.uniform_int(1, 5);
        const double p1 = static_cast<double>(rng.uniform_int(1, 9)) / 10.0;
        PolicyConfig cfg;
        cfg.family = PolicyFamily::kEtlru;
        cfg.xi_blocks = rng.uniform_int(0, 6);
        cfg.prompt_dist = PromptLengthDistribution::from_values({q1, q2}, {p1, 1.0 - p1});
        cfg.death_rate = 0.1 + rng.uniform();
        CacheState s(capacity);
        Blocks total = 0;
        for (ConversationId i = 0; i < n; ++i) {
            cfg.nominal_turn_rates.push_back(0.2 + 2.0 * rng.uniform());
            auto& e = s.touch(i);
            e.history_blocks = rng.uniform_int(1, 6);
            e.last_turn_timestamp = static_cast<double>(rng.uniform_int(0, 10));
            e.seen = true;
            const Blocks cached = rng.uniform_int(0, e.history_blocks);
            s.set_cached(i, cached);
            total += cached;
        }
        if (total <= capacity) continue;
        ++cases;
        const double now = 10.0;
        // Exhaustive minimum over every allocation y <= x with sum y <= C.
        std::vector<Blocks> y(n, 0);
        double best = std::numeric_limits<double>::infinity();
        std::function<void(ConversationId, Blocks)> rec = [&](ConversationId i, Blocks used) {
            if (i == n) {
                best = std::min(best, one_step_cost(s, y, now, cfg));
                return;
            }
            for (Blocks v = 0; v <= s.entry(i).cached_blocks && used + v <= capacity; ++v) {
                y[i] = v;
                rec(i + 1, used + v);
            }
            y[i] = 0;
        };
        rec(0, 0);
        etlru_evict(s, now, s.overflow(), cfg);
        std::vector<Blocks> got;
        for (ConversationId i = 0; i < n; ++i) got.push_back(s.entry(i).cached_blocks);
        const double gap = one_step_cost(s, got, now, cfg) - best;
        worst_gap = std::max(worst_gap, gap);
        if (gap <= 1e-9 && s.total_cached() <= capacity) ++optimal;
    }
    return {optimal == cases, fmt("%.0f/%.0f micro-cases optimal, worst gap %.3g", static_cast<double>(optimal),
                                  static_cast<double>(cases), worst_gap)};
}

Outcome counterfactual() {
    Rng rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = rng.uniform_int(1, 6);
        std::vector<Blocks> values;
        std::vector<double> weights;
        Blocks v = rng.uniform_int(0, 5);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            values.push_back(v);
            v += rng.uniform_int(1, 8);
            weights.push_back(static_cast<double>(rng.uniform_int(1, 16)));
            sum += weights.back();
        }
        for (auto& w : weights) w /= sum;
        const auto q = PromptLengthDistribution::from_values(values, weights);
        const Blocks L = rng.uniform_int(0, 40), xi = rng.uniform_int(0, 40), x = rng.uniform_int(1, 60);
        const double lhs = q.prob_at_least(x + xi - L);
        const double rhs = q.expected_positive_part(L - xi - (x - 1)) - q.expected_positive_part(L - xi - x);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return {worst <= 1e-12, fmt("1000 tuples, max |difference| %.3g (tolerance 1e-12)", worst)};
}

McReport mc_scenario(const PromptLengthDistribution& prompts) {
    McConfig mc;
    mc.workload = sharegpt_preset();
    mc.workload.max_events = 300;
    mc.workload.prompt_length_dist = prompts;
    mc.workload.response_length_dist = PromptLengthDistribution::from_values({50, 100}, {0.5, 0.5});
    PolicyConfig etlru;
    etlru.family = PolicyFamily::kEtlru;
    PolicyConfig lru;
    PolicyConfig threshold;
    threshold.family = PolicyFamily::kThresholdLru;
    mc.target = {"etlru", etlru};
    mc.comparators = {{"lru", lru}, {"threshold_lru", threshold}};
    mc.capacity = 400;
    mc.xi_blocks = 150;
    mc.runs = 1000;
    mc.seed = 11;
    return monte_carlo_policy_test(mc);
}

Outcome mc_direction() {
    const auto a = mc_scenario(PromptLengthDistribution::point_mass(100));
    const auto b = mc_scenario(PromptLengthDistribution::from_values({20, 180}, {0.5, 0.5}));
    std::string detail;
    bool ok = true;
    for (const auto* rep : {&a, &b}) {
        detail += rep == &a ? "deterministic Q:" : "; two-point Q:";
        for (const auto& c : rep->comparisons) {
            ok = ok && c.passed && c.mean_difference <= 0.0;
            detail += " vs " + c.comparator + fmt(" diff %.1f CI [%.1f, %.1f]", c.mean_difference, c.ci_low, c.ci_high);
        }
        ok = ok && rep->runs >= 1000;
    }
    return {ok, detail + " (1000 paired seeds each)"};
}

Outcome tail_pattern() {
    const Blocks capacity = 20000;
    int wins = 0, far_wins = 0;
    double sum_imp = 0.0, sum_far = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto p = wildchat_preset();
        p.seed = seed;
        p.max_events = 2000;
        const auto trace = generate_synthetic(p);
        const auto lru = replay(trace, PolicyConfig{}, capacity, LatencyModel{});
        RunConfig rc;
        rc.synthetic = p;
        rc.seed = seed;
        PolicyConfig tlru;
        tlru.family = PolicyFamily::kTlru;
        rc.policies = {{"lru", PolicyConfig{}}, {"tlru", tlru}};
        rc.capacities = {capacity};
        const double near_tail = lru.report.p90;
        const double far = 3.0 * lru.report.p99;
        rc.xi_ms = {near_tail, far};
        rc.write_charts = false;
        const auto table = compare(rc, trace);
        const auto imp = table.improvement("tlru", capacity, near_tail, Metric::kP90);
        if (imp && *imp > 0.0) ++wins;
        sum_imp += imp.value_or(0.0);
        const auto far_imp = table.improvement("tlru", capacity, far, Metric::kP90);
        if (far_imp && *far_imp > 0.0) ++far_wins;
        sum_far += far_imp.value_or(0.0);
    }
    return {wins >= 16, fmt("xi_s = LRU P90: T-LRU P90 better in %.0f/20 seeds (mean %+.1f%%); "
                            "xi_s = 3x LRU P99 (not asserted): %.0f/20, mean %+.1f%%",
                            wins, sum_imp / 20.0, far_wins, sum_far / 20.0)};
}

Outcome monotonicity() {
    Rng rng(909);
    std::size_t instances = 0, violations = 0;
    for (CachingMode mode : {CachingMode::kOptional, CachingMode::kForced}) {
        for (int trial = 0; trial < 150; ++trial) {
            auto inst = random_instance(rng, OracleBounds{}, mode);
            ++instances;
            const Blocks c0 = inst.capacity, xi0 = inst.xi_blocks;
            Blocks prev = std::numeric_limits<Blocks>::max();
            for (Blocks c = c0; c <= 8; ++c) {
                inst.capacity = c;
                const Blocks v = solve_hindsight_tel(inst).tel_blocks;
                if (v > prev) ++violations;
                prev = v;
            }
            inst.capacity = c0;
            prev = std::numeric_limits<Blocks>::max();
            for (Blocks xi = 0; xi <= 4; ++xi) {
                inst.xi_blocks = xi;
                const Blocks v = solve_hindsight_tel(inst).tel_blocks;
                if (v > prev) ++violations;
                prev = v;
            }
            inst.xi_blocks = xi0;
        }
    }
    std::size_t record_sets = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<RequestRecord> records(static_cast<std::size_t>(rng.uniform_int(0, 50)));
        for (auto& r : records) r.ttft_ms = rng.uniform() * 1000.0;
        double prev = std::numeric_limits<double>::infinity();
        for (double xi = 0.0; xi <= 1100.0; xi += 12.5) {
            const double v = tel(records, xi);
            if (v > prev) ++violations;
            prev = v;
        }
        ++record_sets;
    }
    return {violations == 0, fmt("%.0f oracle instances, %.0f record sets, %.0f violations",
                                 static_cast<double>(instances), static_cast<double>(record_sets),
                                 static_cast<double>(violations))};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    RunConfig rc;
    auto p = wildchat_preset();
    p.max_events = 1000;
    rc.synthetic = p;
    rc.seed = 17;
    PolicyConfig tlru;
    tlru.family = PolicyFamily::kTlru;
    PolicyConfig etlru;
    etlru.family = PolicyFamily::kEtlru;
    rc.policies = {{"lru", PolicyConfig{}}, {"tlru", tlru}, {"etlru", etlru}};
    rc.capacities = {5000, 10000};
    rc.xi_ms = {300.0, 600.0};
    const auto root = std::filesystem::temp_directory_path() / "tailcache_acceptance";
    std::filesystem::remove_all(root);
    std::size_t files = 0;
    bool same = true;
    std::vector<std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        rc.output_dir = (root / ("run" + std::to_string(pass))).string();
        const auto written = write_comparison(compare(rc), rc);
        if (pass == 0) {
            first = written;
            continue;
        }
        for (std::size_t i = 0; i < written.size(); ++i) {
            if (written[i].size() < 4 || written[i].substr(written[i].size() - 4) != ".csv") continue;
            ++files;
            same = same && slurp(written[i]) == slurp(first[i]) && !slurp(written[i]).empty();
        }
    }
    return {same && files == 2,
            fmt("%.0f CSV files compared across two runs, ", static_cast<double>(files)) +
                (same ? "byte-identical" : "different")};
}

}  // namespace

int main() {
    run(1, "Two-conversation example", 1, two_conversation_example);
    run(2, "KV sizing", 1, sizing);
    run(3, "Belady equals exhaustive optimum", 300, belady_optimality);
    run(4, "LRU reduction identities", 60, lru_reduction);
    run(5, "ET-LRU greedy optimality", 60, greedy_optimality);
    run(6, "Counterfactual identity", 10, counterfactual);
    run(7, "Monte-Carlo TEL direction", 600, mc_direction);
    run(8, "Tail pattern on modeled latency", 300, tail_pattern);
    run(9, "Monotonicity suite", 60, monotonicity);
    run(10, "Compare determinism", 60, determinism);
    std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
