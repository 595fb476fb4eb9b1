// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "tailcache/sim.hpp"

namespace tailcache {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::kDomain;
}

Trace small_trace(std::uint64_t seed, std::size_t events = 400) {
    auto p = sharegpt_preset();
    p.seed = seed;
    p.max_events = events;
    return generate_synthetic(p);
}

PolicyConfig family(PolicyFamily f, Blocks xi = 0) {
    PolicyConfig c;
    c.family = f;
    c.xi_blocks = xi;
    return c;
}

RunConfig two_policy_config() {
    RunConfig rc;
    auto p = sharegpt_preset();
    p.max_events = 300;
    rc.synthetic = p;
    rc.policies = {{"lru", family(PolicyFamily::kLru)}, {"tlru", family(PolicyFamily::kTlru)}};
    rc.capacities = {600};
    rc.xi_ms = {150.0};
    rc.seed = 5;
    rc.write_charts = false;
    return rc;
}

TEST(PrecomputeForesight, PointsAtNextTurn) {
    Trace t;
    t.events = {TurnEvent{0, 1.0, 3, 1, false}, TurnEvent{1, 2.0, 4, 0, true}, TurnEvent{0, 5.0, 7, 0, true}};
    const auto f = precompute_foresight(t);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_DOUBLE_EQ(f[0].next_arrival, 5.0);
    EXPECT_EQ(*f[0].next_prompt_blocks, 7);
    EXPECT_TRUE(std::isinf(f[1].next_arrival));
    EXPECT_FALSE(f[2].next_prompt_blocks.has_value());
}

TEST(ResolvePolicy, FillsWorkloadDefaults) {
    Trace t;
    t.events = {TurnEvent{0, 1.0, 3, 0, false}, TurnEvent{1, 2.0, 4, 0, false}};
    const auto r = resolve_policy(family(PolicyFamily::kEtlru), t);
    EXPECT_EQ(r.q_hat(), 4);  // 3.5 rounds half away from zero
    ASSERT_TRUE(r.prompt_dist.has_value());
    EXPECT_DOUBLE_EQ(r.prompt_dist->mean(), 3.5);
    auto fixed = family(PolicyFamily::kTlru);
    fixed.q_hat_blocks = 9;
    EXPECT_EQ(resolve_policy(fixed, t).q_hat(), 9);
}

TEST(Replay, DeterministicAndConserving) {
    const auto t = small_trace(3);
    for (auto f : {PolicyFamily::kLru, PolicyFamily::kTlru, PolicyFamily::kEtlru, PolicyFamily::kTailBelady}) {
        ReplayOptions opts;
        opts.check_invariants = true;
        const auto a = replay(t, family(f, 120), 700, LatencyModel{}, opts);
        const auto b = replay(t, family(f, 120), 700, LatencyModel{}, opts);
        std::ostringstream ca, cb;
        write_records_csv(ca, a);
        write_records_csv(cb, b);
        EXPECT_EQ(ca.str(), cb.str());
        ASSERT_EQ(a.records.size(), t.events.size());
        ConversationLedger ledger;
        for (std::size_t k = 0; k < a.records.size(); ++k) {
            const auto& e = t.events[k];
            EXPECT_EQ(a.records[k].cached_blocks_used + a.records[k].uncached_blocks,
                      job_size(ledger, e.conversation_id, e.prompt_blocks));
            ledger.record(e);
        }
    }
}

TEST(Replay, HugeCacheOnlyMissesPrompts) {
    const auto t = small_trace(8);
    const auto r = replay(t, family(PolicyFamily::kLru), 1'000'000, LatencyModel{});
    for (std::size_t k = 0; k < t.events.size(); ++k) {
        EXPECT_EQ(r.records[k].uncached_blocks, t.events[k].prompt_blocks);
    }
}

TEST(Replay, TtftFollowsAlpha) {
    const auto t = small_trace(8, 100);
    const auto r = replay(t, family(PolicyFamily::kLru), 300, LatencyModel{0.25, 16});
    for (const auto& rec : r.records) EXPECT_DOUBLE_EQ(rec.ttft_ms, 0.25 * static_cast<double>(rec.uncached_blocks));
    EXPECT_DOUBLE_EQ(r.report.xi_ms, 0.0);
}

TEST(Replay, ErrorsNameTheEvent) {
    Trace t;
    t.events = {TurnEvent{0, 0.0, 3, 0, false}, TurnEvent{0, 1.0, 3, 4, false}};
    auto c = family(PolicyFamily::kLru);
    c.caching_mode = CachingMode::kForced;
    try {
        replay(t, c, 8, LatencyModel{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kCapacityInfeasible);
        EXPECT_NE(std::string(e.what()).find("event 1"), std::string::npos) << e.what();
    }
}

TEST(Compare, TwoPoliciesOneImprovementRow) {
    const auto rc = two_policy_config();
    const auto table = compare(rc);
    EXPECT_EQ(table.cells.size(), 2u);
    EXPECT_EQ(table.improvement("lru", 600, 150.0, Metric::kP90), 0.0);
    std::ostringstream imp;
    write_improvement_csv(imp, table);
    std::size_t lines = 0;
    std::string line;
    std::istringstream in(imp.str());
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 2u);  // header plus the one non-baseline row
    const auto& cell = table.at("tlru", 600, 150.0);
    EXPECT_EQ(cell.xi_blocks, 150);
    EXPECT_EQ(kind_of([&] { table.at("mru", 600, 150.0); }), ErrorKind::kPrecondition);
}

TEST(Compare, OutputsAreByteIdentical) {
    const auto a = compare(two_policy_config());
    const auto b = compare(two_policy_config());
    std::ostringstream ta, tb, ia, ib;
    write_table_csv(ta, a);
    write_table_csv(tb, b);
    write_improvement_csv(ia, a);
    write_improvement_csv(ib, b);
    EXPECT_EQ(ta.str(), tb.str());
    EXPECT_EQ(ia.str(), ib.str());
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Compare, WritesFilesAndCharts) {
    auto rc = two_policy_config();
    rc.capacities = {900, 300, 600};
    rc.write_charts = true;
    rc.output_dir = (std::filesystem::temp_directory_path() / "tailcache_sim_test").string();
    std::filesystem::remove_all(rc.output_dir);
    const auto files = write_comparison(compare(rc), rc);
    EXPECT_EQ(files.size(), 4u);
    for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
    std::ifstream svg(files.back());
    const std::string body((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
    EXPECT_NE(body.find("<polyline"), std::string::npos);
    EXPECT_NE(body.find(">p99<"), std::string::npos);
}

TEST(Compare, ZeroBaselineGivesNa) {
    auto rc = two_policy_config();
    rc.xi_ms = {100000.0};
    const auto table = compare(rc);
    EXPECT_FALSE(table.improvement("tlru", 600, 100000.0, Metric::kTel).has_value());
    std::ostringstream imp;
    write_improvement_csv(imp, table);
    EXPECT_NE(imp.str().find("n/a"), std::string::npos);
}

TEST(RunConfig, JsonAndValidation) {
    const auto j = nlohmann::json::parse(R"({
        "synthetic": {"preset": "sharegpt", "max_events": 50},
        "policies": [{"name": "lru", "family": "lru"}, {"name": "t", "family": "tlru", "q_hat_blocks": 80}],
        "capacities": [100, 200], "xi_ms": [50], "latency_model": {"alpha_ms_per_block": 2.0, "block_size": 16},
        "slos_ms": [100, 200], "seed": 3, "baseline": "lru", "charts": false})");
    const auto rc = run_config_from_json(j);
    EXPECT_EQ(rc.policies.size(), 2u);
    EXPECT_EQ(*rc.policies[1].config.q_hat_blocks, 80);
    EXPECT_DOUBLE_EQ(rc.model.alpha_ms_per_block, 2.0);
    EXPECT_FALSE(rc.write_charts);
    EXPECT_EQ(run_config_from_json(to_json(rc)).capacities, rc.capacities);
    auto bad = j;
    bad["baseline"] = "nope";
    EXPECT_EQ(kind_of([&] { run_config_from_json(bad); }), ErrorKind::kInvalidConfig);
    bad = j;
    bad["capacities"] = nlohmann::json::array();
    EXPECT_EQ(kind_of([&] { run_config_from_json(bad); }), ErrorKind::kInvalidConfig);
}

TEST(OracleCheck, NoMismatches) {
    for (CachingMode mode : {CachingMode::kOptional, CachingMode::kForced}) {
        const auto rep = oracle_check(300, OracleBounds{}, 21, mode);
        EXPECT_TRUE(rep.ok());
        EXPECT_EQ(rep.count, 300u);
        EXPECT_GT(rep.xi_zero_instances, 0u);
    }
}

McConfig small_mc() {
    McConfig mc;
    mc.workload = sharegpt_preset();
    mc.workload.max_events = 150;
    mc.target = {"tlru", family(PolicyFamily::kTlru)};
    mc.capacity = 300;
    mc.xi_blocks = 150;
    mc.runs = 40;
    mc.seed = 2;
    return mc;
}

TEST(MonteCarlo, SelfComparisonIsExactTie) {
    auto mc = small_mc();
    mc.comparators = {{"tlru_again", family(PolicyFamily::kTlru)}};
    const auto rep = monte_carlo_policy_test(mc);
    ASSERT_EQ(rep.comparisons.size(), 1u);
    EXPECT_DOUBLE_EQ(rep.comparisons[0].mean_difference, 0.0);
    EXPECT_EQ(rep.comparisons[0].ties, 40u);
    EXPECT_TRUE(rep.ok());
}

TEST(MonteCarlo, HugeThresholdMeansZeroTel) {
    auto mc = small_mc();
    mc.xi_blocks = 1'000'000;
    mc.comparators = {{"lru", family(PolicyFamily::kLru)}};
    const auto rep = monte_carlo_policy_test(mc);
    EXPECT_DOUBLE_EQ(rep.comparisons[0].target_mean_tel, 0.0);
    EXPECT_DOUBLE_EQ(rep.comparisons[0].comparator_mean_tel, 0.0);
}

TEST(MonteCarlo, DeterministicAndJson) {
    auto mc = small_mc();
    mc.comparators = {{"lru", family(PolicyFamily::kLru)}};
    EXPECT_EQ(to_json(monte_carlo_policy_test(mc)).dump(), to_json(monte_carlo_policy_test(mc)).dump());
    const auto j = nlohmann::json::parse(R"({"workload": {"preset": "sharegpt", "max_events": 20},
        "target": {"name": "e", "family": "etlru"}, "comparators": [{"name": "lru", "family": "lru"}],
        "capacity": 50, "xi_blocks": 10, "runs": 3, "seed": 1})");
    const auto parsed = mc_config_from_json(j);
    EXPECT_EQ(parsed.runs, 3u);
    EXPECT_EQ(parsed.target.config.family, PolicyFamily::kEtlru);
}

}  // namespace
}  // namespace tailcache
