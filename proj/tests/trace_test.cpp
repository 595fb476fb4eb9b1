// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>

#include "tailcache/random.hpp"
#include "tailcache/trace.hpp"

namespace tailcache {
namespace {

TurnEvent turn(ConversationId id, double ts, Blocks q, Blocks a = 0, bool last = false) {
    return TurnEvent{id, ts, q, a, last};
}

TEST(TokensToBlocks, CeilingArithmetic) {
    EXPECT_EQ(tokens_to_blocks(257, 128), 3);
    EXPECT_EQ(tokens_to_blocks(0, 128), 0);
    EXPECT_EQ(tokens_to_blocks(128, 128), 1);
    EXPECT_EQ(tokens_to_blocks(1, 128), 1);
}

TEST(TokensToBlocks, RejectsNonPositiveBlockSize) {
    try {
        tokens_to_blocks(10, 0);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    }
}

TEST(TokensToBlocks, MonotoneAndExactOnMultiples) {
    for (Blocks b : {1, 2, 16, 128}) {
        Blocks prev = 0;
        for (std::int64_t n = 0; n < 600; ++n) {
            const Blocks v = tokens_to_blocks(n, b);
            EXPECT_GE(v, prev);
            prev = v;
        }
        for (std::int64_t n = 0; n < 50; ++n) EXPECT_EQ(tokens_to_blocks(n * b, b), n);
    }
}

TEST(JobSize, Examples) {
    ConversationLedger ledger;
    ledger.record(turn(0, 0.0, 3, 4));
    EXPECT_EQ(job_size(ledger, 0, 2), 9);
    EXPECT_EQ(job_size(ledger, 1, 100), 100);

    ConversationLedger fig1;
    fig1.record(turn(0, 1.0, 100));
    EXPECT_EQ(job_size(fig1, 0, 100), 200);
}

TEST(ConversationLedger, MatchesIndependentPrefixSums) {
    Rng rng(42);
    std::vector<TurnEvent> events;
    double ts = 0.0;
    for (int k = 0; k < 500; ++k) {
        ts += 0.5;
        events.push_back(turn(static_cast<ConversationId>(rng.uniform_int(0, 9)), ts, rng.uniform_int(1, 50),
                              rng.uniform_int(0, 50)));
    }
    ConversationLedger ledger;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const auto id = events[k].conversation_id;
        Blocks expected = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (events[j].conversation_id == id) expected += events[j].prompt_blocks + events[j].response_blocks;
        }
        const Blocks before = ledger.history_blocks(id);
        EXPECT_EQ(before, expected);
        ledger.record(events[k]);
        EXPECT_GE(ledger.history_blocks(id), before);
    }
    EXPECT_EQ(ledger.entry(events.back().conversation_id).last_turn_timestamp, events.back().timestamp);
}

TEST(ValidateTrace, WellFormed) {
    Trace t;
    t.events = {turn(0, 1.0, 5), turn(1, 2.0, 3), turn(0, 3.0, 2, 0, true)};
    EXPECT_TRUE(validate_trace(t).ok());
}

TEST(ValidateTrace, EqualTimestampsWithinConversation) {
    Trace t;
    t.events = {turn(0, 1.0, 5), turn(0, 1.0, 5)};
    const auto report = validate_trace(t);
    EXPECT_EQ(report.issues.size(), 1u);
    EXPECT_EQ(report.count(TraceIssueKind::kNonIncreasingWithinConversation), 1u);
    EXPECT_EQ(report.issues[0].event_index, 1u);
}

TEST(ValidateTrace, ZeroPrompt) {
    Trace t;
    t.events = {turn(0, 1.0, 5), turn(1, 2.0, 0)};
    const auto report = validate_trace(t);
    EXPECT_EQ(report.issues.size(), 1u);
    EXPECT_EQ(report.count(TraceIssueKind::kZeroPrompt), 1u);
}

TEST(ValidateTrace, ReportsEveryIssue) {
    Trace t;
    t.events = {turn(0, 2.0, 5), turn(2, 1.0, 5), turn(0, 3.0, -1, 0, true), turn(0, 4.0, 1)};
    const auto report = validate_trace(t);
    EXPECT_EQ(report.count(TraceIssueKind::kUnsorted), 1u);
    EXPECT_EQ(report.count(TraceIssueKind::kNonDenseIds), 1u);
    EXPECT_EQ(report.count(TraceIssueKind::kNegativeValue), 1u);
    EXPECT_EQ(report.count(TraceIssueKind::kTurnAfterLast), 1u);
    EXPECT_FALSE(report.summary().empty());
}

TEST(ValidateTrace, TiesAcrossConversationsOrderedById) {
    Trace ok;
    ok.events = {turn(0, 1.0, 1), turn(1, 1.0, 1)};
    EXPECT_TRUE(validate_trace(ok).ok());
    Trace bad;
    bad.events = {turn(1, 1.0, 1), turn(0, 1.0, 1)};
    EXPECT_FALSE(validate_trace(bad).ok());
}

TEST(Trace, DerivedQuantities) {
    Trace t;
    t.events = {turn(0, 1.0, 2), turn(1, 2.0, 4), turn(0, 3.0, 6)};
    EXPECT_EQ(t.horizon(), 3u);
    EXPECT_EQ(t.conversation_count(), 2u);
    EXPECT_DOUBLE_EQ(t.mean_prompt_blocks(), 4.0);
}

}  // namespace
}  // namespace tailcache
