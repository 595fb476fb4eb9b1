// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcache/trace.hpp"
#include "tailcache/workload.hpp"

namespace tailcache {

enum class PolicyFamily {
    kLru,
    kThresholdLru,
    kTlru,
    kEtlru,
    kEndAwareTlru,
    kLengthAwareTlru,
    kTailBelady,
};

enum class CachingMode { kOptional, kForced };

const char* to_string(PolicyFamily family);
PolicyFamily policy_family_from_string(const std::string& name);
const char* to_string(CachingMode mode);

/// Families that read ground truth from the trace (future arrivals, prompt lengths, ends).
bool is_clairvoyant(PolicyFamily family);
bool is_tlru_variant(PolicyFamily family);

struct PolicyConfig {
    PolicyFamily family = PolicyFamily::kLru;
    Blocks xi_blocks = 0;
    // Unset means "use the workload's mean prompt length".
    std::optional<Blocks> q_hat_blocks;
    Blocks cache_threshold_blocks = 1024;
    double death_rate = 1.0;
    double nominal_turn_rate = 1.0;
    // Per-conversation nominal turn rates; conversations past the end use nominal_turn_rate.
    std::vector<double> nominal_turn_rates;
    std::optional<PromptLengthDistribution> prompt_dist;
    CachingMode caching_mode = CachingMode::kOptional;

    double nominal_rate_for(ConversationId id) const {
        return id < nominal_turn_rates.size() ? nominal_turn_rates[id] : nominal_turn_rate;
    }
    Blocks q_hat() const;
    /// Throws Error(kInvalidConfig) when a family-specific parameter is missing or out of range.
    void validate() const;
};

nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

/// What a clairvoyant replay knows about a conversation's next turn.
struct Foresight {
    double next_arrival = std::numeric_limits<double>::infinity();  // +inf: never returns
    std::optional<Blocks> next_prompt_blocks;
};

/// Per-conversation cache bookkeeping. Blocks within a conversation are fungible counts.
class CacheState {
public:
    struct Entry {
        Blocks cached_blocks = 0;
        Blocks history_blocks = 0;
        double last_turn_timestamp = 0.0;
        // Cached blocks flagged as evictable ahead of every LRU-ordered block.
        Blocks free_marked_blocks = 0;
        bool seen = false;
        // End-aware variants: false once the conversation's final turn has been served.
        bool returns = true;
        std::optional<Foresight> foresight;
    };

    explicit CacheState(Blocks capacity);

    Blocks capacity() const { return capacity_; }
    Blocks total_cached() const { return total_cached_; }
    Blocks overflow() const { return total_cached_ > capacity_ ? total_cached_ - capacity_ : 0; }
    std::size_t size() const { return entries_.size(); }

    const Entry& entry(ConversationId id) const;
    Entry& touch(ConversationId id);  // creates the entry on first arrival

    void set_cached(ConversationId id, Blocks blocks);
    void evict(ConversationId id, Blocks blocks);

    /// Checks capacity, cached <= history and free <= cached. Throws Error(kPrecondition).
    void check_invariants() const;

private:
    Blocks capacity_;
    Blocks total_cached_ = 0;
    std::vector<Entry> entries_;
};

enum class EvictionPhase { kTelSafeTrim, kLruFallback, kBelady, kRanked, kEndOfConversation };

const char* to_string(EvictionPhase phase);

struct Eviction {
    ConversationId conversation_id;
    Blocks blocks;
    EvictionPhase phase;

    bool operator==(const Eviction&) const = default;
};

/// Evictions in the order they were applied; consecutive evictions of one conversation in one
/// phase are merged.
struct EvictionDecision {
    std::vector<Eviction> evictions;

    Blocks total() const;
    void add(ConversationId id, Blocks blocks, EvictionPhase phase);
    void append(const EvictionDecision& other);
};

/// Result of serving one request.
struct ServedRecord {
    ConversationId conversation_id = 0;
    double timestamp = 0.0;
    Blocks job_blocks = 0;
    Blocks cached_blocks_used = 0;
    Blocks uncached_blocks = 0;
    EvictionDecision eviction;
};

/// TEL-safe budget (L + next_prompt - xi)^+.
Blocks tel_safe_budget(Blocks history_blocks, Blocks next_prompt_blocks, Blocks xi_blocks);

/// Serves `event` against `state` and applies the policy's cache update and evictions.
/// Clairvoyant families need `foresight` for the arriving conversation.
ServedRecord apply_arrival(CacheState& state, const TurnEvent& event, const PolicyConfig& config,
                           const std::optional<Foresight>& foresight = std::nullopt);

// The eviction routines below mutate `state` and return what they removed. `protect` names a
// conversation that must keep its blocks (the arriving one under forced caching).

/// Free-marked blocks first (infinitely old), then whole conversations by (oldest
/// last turn, lowest id).
EvictionDecision lru_evict(CacheState& state, Blocks overflow, std::optional<ConversationId> protect = std::nullopt);

/// Marks blocks above each conversation's TEL-safe budget as free, evicts free blocks from the
/// oldest conversations first, then falls back to lru_evict for whatever overflow remains.
EvictionDecision tlru_trim(CacheState& state, const PolicyConfig& config,
                           std::optional<ConversationId> protect = std::nullopt);

struct RankedConversation {
    ConversationId conversation_id;
    double score;
};

/// Belief-weighted eviction cost lambda_i(now) * P(L_i + Q - xi >= X_i), ascending, ties by
/// (oldest last turn, lowest id). Conversations with nothing cached are omitted.
std::vector<RankedConversation> etlru_rank(const CacheState& state, double now, const PolicyConfig& config);

/// One block at a time from the minimum-score conversation, rescoring after each removal.
EvictionDecision etlru_evict(CacheState& state, double now, Blocks overflow, const PolicyConfig& config,
                             std::optional<ConversationId> protect = std::nullopt);

/// Caps conversations at their exact TEL-safe budgets, then evicts from the conversation whose
/// next arrival is latest. Needs foresight on every cached conversation.
EvictionDecision belady_evict(CacheState& state, const PolicyConfig& config, Blocks overflow,
                              std::optional<ConversationId> protect = std::nullopt);

/// End-aware and length-aware bookkeeping for the arriving conversation, applied after the
/// history update and before eviction. Under optional caching a finished conversation drops
/// its whole cache immediately; under forced caching it only becomes fully free.
EvictionDecision variant_adjust(CacheState& state, const TurnEvent& event, const PolicyConfig& config,
                    const std::optional<Foresight>& foresight);

}  // namespace tailcache
