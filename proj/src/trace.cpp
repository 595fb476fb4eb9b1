// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/trace.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

namespace tailcache {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kInvalidConfig: return "invalid configuration";
        case ErrorKind::kParse: return "parse error";
        case ErrorKind::kValidation: return "validation error";
        case ErrorKind::kCapacityInfeasible: return "capacity infeasible";
        case ErrorKind::kClairvoyance: return "clairvoyance error";
        case ErrorKind::kTooLarge: return "instance too large";
        case ErrorKind::kPrecondition: return "precondition violated";
        case ErrorKind::kDomain: return "domain error";
    }
    return "error";
}

std::size_t Trace::conversation_count() const {
    std::size_t n = 0;
    for (const auto& e : events) {
        n = std::max<std::size_t>(n, static_cast<std::size_t>(e.conversation_id) + 1);
    }
    return n;
}

double Trace::mean_prompt_blocks() const {
    if (events.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& e : events) sum += static_cast<double>(e.prompt_blocks);
    return sum / static_cast<double>(events.size());
}

Blocks tokens_to_blocks(std::int64_t tokens, Blocks block_size) {
    if (block_size <= 0) {
        throw Error(ErrorKind::kInvalidConfig, "block_size must be positive");
    }
    if (tokens < 0) {
        throw Error(ErrorKind::kDomain, "token count must be non-negative");
    }
    return (tokens + block_size - 1) / block_size;
}

void ConversationLedger::record(const TurnEvent& event) {
    if (event.conversation_id >= entries_.size()) {
        entries_.resize(static_cast<std::size_t>(event.conversation_id) + 1);
    }
    auto& e = entries_[event.conversation_id];
    e.history_blocks += event.prompt_blocks + event.response_blocks;
    e.turn_count += 1;
    e.last_turn_timestamp = event.timestamp;
}

const ConversationLedger::Entry& ConversationLedger::entry(ConversationId id) const {
    static const Entry kEmpty{};
    return id < entries_.size() ? entries_[id] : kEmpty;
}

Blocks ConversationLedger::history_blocks(ConversationId id) const {
    return entry(id).history_blocks;
}

Blocks job_size(const ConversationLedger& ledger, ConversationId id, Blocks prompt_blocks) {
    return ledger.history_blocks(id) + prompt_blocks;
}

const char* to_string(TraceIssueKind kind) {
    switch (kind) {
        case TraceIssueKind::kUnsorted: return "unsorted";
        case TraceIssueKind::kNonIncreasingWithinConversation: return "non-increasing-within-conversation";
        case TraceIssueKind::kZeroPrompt: return "zero-prompt";
        case TraceIssueKind::kNegativeValue: return "negative-value";
        case TraceIssueKind::kNonDenseIds: return "non-dense-ids";
        case TraceIssueKind::kTurnAfterLast: return "turn-after-last";
    }
    return "unknown";
}

std::size_t ValidationReport::count(TraceIssueKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [kind](const TraceIssue& i) { return i.kind == kind; }));
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (const auto& issue : issues) {
        os << "event " << issue.event_index << ": " << to_string(issue.kind);
        if (!issue.detail.empty()) os << " (" << issue.detail << ")";
        os << '\n';
    }
    return os.str();
}

ValidationReport validate_trace(const Trace& trace) {
    ValidationReport report;
    auto add = [&report](TraceIssueKind kind, std::size_t index, std::string detail) {
        report.issues.push_back(TraceIssue{kind, index, std::move(detail)});
    };

    struct Seen {
        double last_timestamp;
        bool ended;
    };
    std::unordered_map<ConversationId, Seen> seen;
    ConversationId next_new_id = 0;

    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const auto& e = trace.events[i];
        if (e.prompt_blocks == 0) add(TraceIssueKind::kZeroPrompt, i, "");
        if (e.prompt_blocks < 0 || e.response_blocks < 0 || e.timestamp < 0.0) {
            add(TraceIssueKind::kNegativeValue, i, "");
        }
        if (i > 0) {
            const auto& prev = trace.events[i - 1];
            if (e.timestamp < prev.timestamp ||
                (e.timestamp == prev.timestamp && e.conversation_id < prev.conversation_id)) {
                add(TraceIssueKind::kUnsorted, i, "precedes event " + std::to_string(i - 1));
            }
        }
        auto it = seen.find(e.conversation_id);
        if (it == seen.end()) {
            if (e.conversation_id != next_new_id) {
                add(TraceIssueKind::kNonDenseIds, i,
                    "expected new id " + std::to_string(next_new_id) + ", got " + std::to_string(e.conversation_id));
            }
            next_new_id = std::max(next_new_id, e.conversation_id + 1);
            seen.emplace(e.conversation_id, Seen{e.timestamp, e.is_last_turn});
            continue;
        }
        if (e.timestamp <= it->second.last_timestamp) {
            add(TraceIssueKind::kNonIncreasingWithinConversation, i,
                "conversation " + std::to_string(e.conversation_id));
        }
        if (it->second.ended) {
            add(TraceIssueKind::kTurnAfterLast, i, "conversation " + std::to_string(e.conversation_id));
        }
        it->second = Seen{e.timestamp, e.is_last_turn};
    }
    return report;
}

}  // namespace tailcache
