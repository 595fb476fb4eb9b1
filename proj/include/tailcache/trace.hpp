// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailcache/error.hpp"

namespace tailcache {

using ConversationId = std::uint32_t;
using Blocks = std::int64_t;

/// One request of a conversation: a new user prompt on top of the conversation history.
struct TurnEvent {
    ConversationId conversation_id = 0;
    double timestamp = 0.0;  // seconds
    Blocks prompt_blocks = 0;
    Blocks response_blocks = 0;
    // Ground truth; only clairvoyant policies may read it.
    bool is_last_turn = false;

    bool operator==(const TurnEvent&) const = default;
};

/// Time-ordered list of turns. Events are sorted by (timestamp, conversation_id) and
/// conversation ids are dense in first-arrival order.
struct Trace {
    std::vector<TurnEvent> events;
    Blocks block_size = 1;  // tokens per block
    // False when the source carried no end-of-conversation flags.
    bool has_last_turn_flags = true;

    std::size_t horizon() const { return events.size(); }
    std::size_t conversation_count() const;
    double mean_prompt_blocks() const;
};

Blocks tokens_to_blocks(std::int64_t tokens, Blocks block_size);

/// Running per-conversation totals while replaying a trace.
class ConversationLedger {
public:
    struct Entry {
        Blocks history_blocks = 0;
        std::uint32_t turn_count = 0;
        double last_turn_timestamp = 0.0;
    };

    void record(const TurnEvent& event);
    const Entry& entry(ConversationId id) const;
    Blocks history_blocks(ConversationId id) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<Entry> entries_;
};

/// Blocks the request must have computed or cached: history plus the new prompt.
Blocks job_size(const ConversationLedger& ledger, ConversationId id, Blocks prompt_blocks);

enum class TraceIssueKind {
    kUnsorted,
    kNonIncreasingWithinConversation,
    kZeroPrompt,
    kNegativeValue,
    kNonDenseIds,
    kTurnAfterLast,
};

const char* to_string(TraceIssueKind kind);

struct TraceIssue {
    TraceIssueKind kind;
    std::size_t event_index;
    std::string detail;
};

struct ValidationReport {
    std::vector<TraceIssue> issues;

    bool ok() const { return issues.empty(); }
    std::size_t count(TraceIssueKind kind) const;
    std::string summary() const;
};

ValidationReport validate_trace(const Trace& trace);

}  // namespace tailcache
