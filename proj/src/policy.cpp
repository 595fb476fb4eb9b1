// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

namespace tailcache {

using nlohmann::json;

namespace {

struct FamilyName {
    PolicyFamily family;
    const char* name;
};

constexpr FamilyName kFamilyNames[] = {
    {PolicyFamily::kLru, "lru"},
    {PolicyFamily::kThresholdLru, "threshold_lru"},
    {PolicyFamily::kTlru, "tlru"},
    {PolicyFamily::kEtlru, "etlru"},
    {PolicyFamily::kEndAwareTlru, "end_aware_tlru"},
    {PolicyFamily::kLengthAwareTlru, "length_aware_tlru"},
    {PolicyFamily::kTailBelady, "tail_belady"},
};

// Eviction order of ordinary LRU: oldest last turn first, then lowest id.
std::vector<ConversationId> recency_order(const CacheState& state, std::optional<ConversationId> protect) {
    std::vector<ConversationId> order;
    for (ConversationId id = 0; id < state.size(); ++id) {
        if (protect && *protect == id) continue;
        if (state.entry(id).cached_blocks > 0) order.push_back(id);
    }
    std::sort(order.begin(), order.end(), [&state](ConversationId a, ConversationId b) {
        const double ta = state.entry(a).last_turn_timestamp;
        const double tb = state.entry(b).last_turn_timestamp;
        return ta != tb ? ta < tb : a < b;
    });
    return order;
}

// Evicts marked blocks in recency order; returns the overflow still outstanding.
Blocks evict_free_marked(CacheState& state, Blocks overflow, std::optional<ConversationId> protect,
                         EvictionDecision& decision) {
    for (ConversationId id : recency_order(state, protect)) {
        if (overflow == 0) break;
        const Blocks take = std::min(state.entry(id).free_marked_blocks, overflow);
        if (take == 0) continue;
        state.evict(id, take);
        decision.add(id, take, EvictionPhase::kTelSafeTrim);
        overflow -= take;
    }
    return overflow;
}

// Next-prompt estimate used for a conversation's budget; nullopt means budget 0 (never returns).
std::optional<Blocks> budget_prompt(const CacheState::Entry& e, const PolicyConfig& config) {
    switch (config.family) {
        case PolicyFamily::kTlru:
            return config.q_hat();
        case PolicyFamily::kEndAwareTlru:
            if (!e.returns) return std::nullopt;
            return config.q_hat();
        case PolicyFamily::kLengthAwareTlru:
        case PolicyFamily::kTailBelady:
            if (!e.foresight) {
                throw Error(ErrorKind::kClairvoyance, "conversation has no foresight entry");
            }
            if (!e.returns || !std::isfinite(e.foresight->next_arrival) || !e.foresight->next_prompt_blocks) {
                return std::nullopt;
            }
            return *e.foresight->next_prompt_blocks;
        default:
            throw Error(ErrorKind::kInvalidConfig, std::string("family ") + to_string(config.family) +
                                                       " has no TEL-safe budget");
    }
}

void mark_free_blocks(CacheState& state, const PolicyConfig& config, std::optional<ConversationId> protect) {
    for (ConversationId id = 0; id < state.size(); ++id) {
        auto& e = state.touch(id);
        if ((protect && *protect == id) || e.cached_blocks == 0) {
            e.free_marked_blocks = 0;
            continue;
        }
        const auto next = budget_prompt(e, config);
        const Blocks budget = next ? tel_safe_budget(e.history_blocks, *next, config.xi_blocks) : 0;
        e.free_marked_blocks = std::max<Blocks>(e.cached_blocks - budget, 0);
    }
}

}  // namespace

const char* to_string(PolicyFamily family) {
    for (const auto& f : kFamilyNames) {
        if (f.family == family) return f.name;
    }
    return "unknown";
}

PolicyFamily policy_family_from_string(const std::string& name) {
    for (const auto& f : kFamilyNames) {
        if (name == f.name) return f.family;
    }
    throw Error(ErrorKind::kInvalidConfig, "unknown policy family '" + name + "'");
}

const char* to_string(CachingMode mode) {
    return mode == CachingMode::kForced ? "forced" : "optional";
}

const char* to_string(EvictionPhase phase) {
    switch (phase) {
        case EvictionPhase::kTelSafeTrim: return "TEL_SAFE_TRIM";
        case EvictionPhase::kLruFallback: return "LRU_FALLBACK";
        case EvictionPhase::kBelady: return "BELADY";
        case EvictionPhase::kRanked: return "RANKED";
        case EvictionPhase::kEndOfConversation: return "END_OF_CONVERSATION";
    }
    return "UNKNOWN";
}

bool is_clairvoyant(PolicyFamily family) {
    return family == PolicyFamily::kEndAwareTlru || family == PolicyFamily::kLengthAwareTlru ||
           family == PolicyFamily::kTailBelady;
}

bool is_tlru_variant(PolicyFamily family) {
    return family == PolicyFamily::kTlru || family == PolicyFamily::kEndAwareTlru ||
           family == PolicyFamily::kLengthAwareTlru;
}

Blocks PolicyConfig::q_hat() const {
    if (!q_hat_blocks) {
        throw Error(ErrorKind::kInvalidConfig, "q_hat_blocks is required for " + std::string(to_string(family)));
    }
    return *q_hat_blocks;
}

void PolicyConfig::validate() const {
    if (xi_blocks < 0) throw Error(ErrorKind::kInvalidConfig, "xi_blocks must be non-negative");
    if (q_hat_blocks && *q_hat_blocks < 0) throw Error(ErrorKind::kInvalidConfig, "q_hat_blocks must be non-negative");
    switch (family) {
        case PolicyFamily::kThresholdLru:
            if (cache_threshold_blocks < 0) {
                throw Error(ErrorKind::kInvalidConfig, "cache_threshold_blocks must be non-negative");
            }
            if (caching_mode == CachingMode::kForced) {
                throw Error(ErrorKind::kInvalidConfig, "threshold_lru admission requires optional caching");
            }
            break;
        case PolicyFamily::kTlru:
        case PolicyFamily::kEndAwareTlru:
            q_hat();
            break;
        case PolicyFamily::kEtlru:
            if (!(death_rate > 0.0)) throw Error(ErrorKind::kInvalidConfig, "death_rate must be positive");
            if (!(nominal_turn_rate > 0.0)) throw Error(ErrorKind::kInvalidConfig, "nominal_turn_rate must be positive");
            for (double r : nominal_turn_rates) {
                if (!(r > 0.0)) throw Error(ErrorKind::kInvalidConfig, "nominal turn rates must be positive");
            }
            if (!prompt_dist) throw Error(ErrorKind::kInvalidConfig, "etlru requires prompt_dist");
            break;
        default:
            break;
    }
}

json to_json(const PolicyConfig& c) {
    json j{{"family", to_string(c.family)},
           {"xi_blocks", c.xi_blocks},
           {"cache_threshold_blocks", c.cache_threshold_blocks},
           {"death_rate", c.death_rate},
           {"nominal_turn_rate", c.nominal_turn_rate},
           {"nominal_turn_rates", c.nominal_turn_rates},
           {"caching_mode", to_string(c.caching_mode)}};
    j["q_hat_blocks"] = c.q_hat_blocks ? json(*c.q_hat_blocks) : json(nullptr);
    j["prompt_dist"] = c.prompt_dist ? to_json(*c.prompt_dist) : json(nullptr);
    return j;
}

PolicyConfig policy_config_from_json(const json& j) {
    PolicyConfig c;
    try {
        c.family = policy_family_from_string(j.at("family").get<std::string>());
        if (j.contains("xi_blocks")) c.xi_blocks = j["xi_blocks"].get<Blocks>();
        if (j.contains("q_hat_blocks") && !j["q_hat_blocks"].is_null()) c.q_hat_blocks = j["q_hat_blocks"].get<Blocks>();
        if (j.contains("cache_threshold_blocks")) c.cache_threshold_blocks = j["cache_threshold_blocks"].get<Blocks>();
        if (j.contains("death_rate")) c.death_rate = j["death_rate"].get<double>();
        if (j.contains("nominal_turn_rate")) c.nominal_turn_rate = j["nominal_turn_rate"].get<double>();
        if (j.contains("nominal_turn_rates")) c.nominal_turn_rates = j["nominal_turn_rates"].get<std::vector<double>>();
        if (j.contains("prompt_dist") && !j["prompt_dist"].is_null()) c.prompt_dist = distribution_from_json(j["prompt_dist"]);
        if (j.contains("caching_mode")) {
            const auto mode = j["caching_mode"].get<std::string>();
            if (mode == "optional") {
                c.caching_mode = CachingMode::kOptional;
            } else if (mode == "forced") {
                c.caching_mode = CachingMode::kForced;
            } else {
                throw Error(ErrorKind::kInvalidConfig, "unknown caching_mode '" + mode + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad policy config: ") + e.what());
    }
    return c;
}

CacheState::CacheState(Blocks capacity) : capacity_(capacity) {
    if (capacity <= 0) throw Error(ErrorKind::kInvalidConfig, "cache capacity must be positive");
}

const CacheState::Entry& CacheState::entry(ConversationId id) const {
    static const Entry kEmpty{};
    return id < entries_.size() ? entries_[id] : kEmpty;
}

CacheState::Entry& CacheState::touch(ConversationId id) {
    if (id >= entries_.size()) entries_.resize(static_cast<std::size_t>(id) + 1);
    return entries_[id];
}

void CacheState::set_cached(ConversationId id, Blocks blocks) {
    auto& e = touch(id);
    total_cached_ += blocks - e.cached_blocks;
    e.cached_blocks = blocks;
    e.free_marked_blocks = std::min(e.free_marked_blocks, blocks);
}

void CacheState::evict(ConversationId id, Blocks blocks) {
    auto& e = touch(id);
    if (blocks < 0 || blocks > e.cached_blocks) {
        throw Error(ErrorKind::kPrecondition, "evicting more blocks than conversation " + std::to_string(id) + " holds");
    }
    e.cached_blocks -= blocks;
    total_cached_ -= blocks;
    // Free-marked blocks sit at the tail of the history and leave first.
    e.free_marked_blocks = std::max<Blocks>(e.free_marked_blocks - blocks, 0);
}

void CacheState::check_invariants() const {
    Blocks total = 0;
    for (std::size_t id = 0; id < entries_.size(); ++id) {
        const auto& e = entries_[id];
        if (e.cached_blocks < 0 || e.cached_blocks > e.history_blocks) {
            throw Error(ErrorKind::kPrecondition, "conversation " + std::to_string(id) + " caches more than its history");
        }
        if (e.free_marked_blocks < 0 || e.free_marked_blocks > e.cached_blocks) {
            throw Error(ErrorKind::kPrecondition, "conversation " + std::to_string(id) + " has too many free blocks");
        }
        total += e.cached_blocks;
    }
    if (total != total_cached_) throw Error(ErrorKind::kPrecondition, "cached block total out of sync");
    if (total > capacity_) throw Error(ErrorKind::kPrecondition, "cache exceeds capacity");
}

Blocks EvictionDecision::total() const {
    return std::accumulate(evictions.begin(), evictions.end(), Blocks{0},
                           [](Blocks acc, const Eviction& e) { return acc + e.blocks; });
}

void EvictionDecision::add(ConversationId id, Blocks blocks, EvictionPhase phase) {
    if (blocks <= 0) return;
    if (!evictions.empty() && evictions.back().conversation_id == id && evictions.back().phase == phase) {
        evictions.back().blocks += blocks;
        return;
    }
    evictions.push_back(Eviction{id, blocks, phase});
}

void EvictionDecision::append(const EvictionDecision& other) {
    for (const auto& e : other.evictions) add(e.conversation_id, e.blocks, e.phase);
}

Blocks tel_safe_budget(Blocks history_blocks, Blocks next_prompt_blocks, Blocks xi_blocks) {
    return std::max<Blocks>(history_blocks + next_prompt_blocks - xi_blocks, 0);
}

EvictionDecision lru_evict(CacheState& state, Blocks overflow, std::optional<ConversationId> protect) {
    EvictionDecision decision;
    overflow = evict_free_marked(state, overflow, protect, decision);
    for (ConversationId id : recency_order(state, protect)) {
        if (overflow == 0) break;
        const Blocks take = std::min(state.entry(id).cached_blocks, overflow);
        state.evict(id, take);
        decision.add(id, take, EvictionPhase::kLruFallback);
        overflow -= take;
    }
    return decision;
}

EvictionDecision tlru_trim(CacheState& state, const PolicyConfig& config, std::optional<ConversationId> protect) {
    mark_free_blocks(state, config, protect);
    EvictionDecision decision;
    const Blocks remaining = evict_free_marked(state, state.overflow(), protect, decision);
    if (remaining > 0) decision.append(lru_evict(state, remaining, protect));
    return decision;
}

namespace {

struct RankKey {
    double score;
    double last_turn;
    ConversationId id;

    bool operator<(const RankKey& o) const {
        return std::tie(score, last_turn, id) < std::tie(o.score, o.last_turn, o.id);
    }
    bool operator>(const RankKey& o) const { return o < *this; }
};

RankKey rank_key(const CacheState& state, ConversationId id, double now, const PolicyConfig& config) {
    const auto& e = state.entry(id);
    const double belief = config.nominal_rate_for(id) * belief_survival(config.death_rate, now - e.last_turn_timestamp);
    // P(L + Q - xi >= X) = P(Q >= X + xi - L)
    const double p = config.prompt_dist->prob_at_least(e.cached_blocks + config.xi_blocks - e.history_blocks);
    return RankKey{belief * p, e.last_turn_timestamp, id};
}

void require_prompt_dist(const PolicyConfig& config) {
    if (!config.prompt_dist) throw Error(ErrorKind::kInvalidConfig, "etlru requires prompt_dist");
}

}  // namespace

std::vector<RankedConversation> etlru_rank(const CacheState& state, double now, const PolicyConfig& config) {
    require_prompt_dist(config);
    std::vector<RankKey> keys;
    for (ConversationId id = 0; id < state.size(); ++id) {
        if (state.entry(id).cached_blocks > 0) keys.push_back(rank_key(state, id, now, config));
    }
    std::sort(keys.begin(), keys.end());
    std::vector<RankedConversation> ranked;
    ranked.reserve(keys.size());
    for (const auto& k : keys) ranked.push_back({k.id, k.score});
    return ranked;
}

EvictionDecision etlru_evict(CacheState& state, double now, Blocks overflow, const PolicyConfig& config,
                             std::optional<ConversationId> protect) {
    require_prompt_dist(config);
    std::priority_queue<RankKey, std::vector<RankKey>, std::greater<>> heap;
    for (ConversationId id = 0; id < state.size(); ++id) {
        if (protect && *protect == id) continue;
        if (state.entry(id).cached_blocks > 0) heap.push(rank_key(state, id, now, config));
    }
    EvictionDecision decision;
    for (Blocks evicted = 0; evicted < overflow && !heap.empty(); ++evicted) {
        const ConversationId id = heap.top().id;
        heap.pop();
        state.evict(id, 1);
        decision.add(id, 1, EvictionPhase::kRanked);
        if (state.entry(id).cached_blocks > 0) heap.push(rank_key(state, id, now, config));
    }
    return decision;
}

EvictionDecision belady_evict(CacheState& state, const PolicyConfig& config, Blocks overflow,
                              std::optional<ConversationId> protect) {
    for (ConversationId id = 0; id < state.size(); ++id) {
        if (state.entry(id).cached_blocks > 0 && !state.entry(id).foresight) {
            throw Error(ErrorKind::kClairvoyance, "no next-arrival entry for conversation " + std::to_string(id));
        }
    }
    PolicyConfig exact = config;
    exact.family = PolicyFamily::kTailBelady;
    mark_free_blocks(state, exact, protect);

    EvictionDecision decision;
    overflow = evict_free_marked(state, overflow, protect, decision);

    std::vector<ConversationId> order;
    for (ConversationId id = 0; id < state.size(); ++id) {
        if (protect && *protect == id) continue;
        if (state.entry(id).cached_blocks > 0) order.push_back(id);
    }
    std::sort(order.begin(), order.end(), [&state](ConversationId a, ConversationId b) {
        const double na = state.entry(a).foresight->next_arrival;
        const double nb = state.entry(b).foresight->next_arrival;
        return na != nb ? na > nb : a < b;
    });
    for (ConversationId id : order) {
        if (overflow == 0) break;
        const Blocks take = std::min(state.entry(id).cached_blocks, overflow);
        state.evict(id, take);
        decision.add(id, take, EvictionPhase::kBelady);
        overflow -= take;
    }
    return decision;
}

EvictionDecision variant_adjust(CacheState& state, const TurnEvent& event, const PolicyConfig& config,
                                const std::optional<Foresight>& foresight) {
    EvictionDecision decision;
    if (config.family != PolicyFamily::kEndAwareTlru && config.family != PolicyFamily::kLengthAwareTlru) {
        return decision;
    }
    auto& e = state.touch(event.conversation_id);
    if (config.family == PolicyFamily::kLengthAwareTlru) {
        if (!foresight) throw Error(ErrorKind::kClairvoyance, "length-aware policy needs the next prompt length");
        e.foresight = foresight;
    }
    if (event.is_last_turn) {
        e.returns = false;
        if (config.caching_mode == CachingMode::kOptional) {
            decision.add(event.conversation_id, e.cached_blocks, EvictionPhase::kEndOfConversation);
            state.set_cached(event.conversation_id, 0);
        }
    }
    return decision;
}

ServedRecord apply_arrival(CacheState& state, const TurnEvent& event, const PolicyConfig& config,
                           const std::optional<Foresight>& foresight) {
    config.validate();
    if ((config.family == PolicyFamily::kTailBelady || config.family == PolicyFamily::kLengthAwareTlru) &&
        !foresight) {
        throw Error(ErrorKind::kClairvoyance, std::string(to_string(config.family)) + " needs foresight");
    }
    const ConversationId id = event.conversation_id;
    auto& e = state.touch(id);

    ServedRecord record;
    record.conversation_id = id;
    record.timestamp = event.timestamp;
    record.job_blocks = e.history_blocks + event.prompt_blocks;
    record.cached_blocks_used = e.cached_blocks;
    record.uncached_blocks = record.job_blocks - record.cached_blocks_used;

    e.history_blocks += event.prompt_blocks + event.response_blocks;
    e.last_turn_timestamp = event.timestamp;
    e.seen = true;
    e.returns = true;
    e.free_marked_blocks = 0;
    if (foresight) e.foresight = foresight;
    const Blocks history = e.history_blocks;

    if (config.caching_mode == CachingMode::kForced) {
        if (history > state.capacity()) {
            throw Error(ErrorKind::kCapacityInfeasible,
                        "conversation " + std::to_string(id) + " history of " + std::to_string(history) +
                            " blocks exceeds capacity " + std::to_string(state.capacity()));
        }
        state.set_cached(id, history);
    } else if (config.family == PolicyFamily::kThresholdLru) {
        state.set_cached(id, history >= config.cache_threshold_blocks ? history : 0);
    } else {
        state.set_cached(id, history);
    }

    record.eviction = variant_adjust(state, event, config, foresight);

    const std::optional<ConversationId> protect =
        config.caching_mode == CachingMode::kForced ? std::optional<ConversationId>(id) : std::nullopt;
    if (const Blocks overflow = state.overflow(); overflow > 0) {
        switch (config.family) {
            case PolicyFamily::kLru:
            case PolicyFamily::kThresholdLru:
                record.eviction.append(lru_evict(state, overflow, protect));
                break;
            case PolicyFamily::kTlru:
            case PolicyFamily::kEndAwareTlru:
            case PolicyFamily::kLengthAwareTlru:
                record.eviction.append(tlru_trim(state, config, protect));
                break;
            case PolicyFamily::kEtlru:
                record.eviction.append(etlru_evict(state, event.timestamp, overflow, config, protect));
                break;
            case PolicyFamily::kTailBelady:
                record.eviction.append(belady_evict(state, config, overflow, protect));
                break;
        }
    }
    if (state.overflow() > 0) {
        throw Error(ErrorKind::kCapacityInfeasible, "could not free enough blocks for conversation " + std::to_string(id));
    }
    return record;
}

}  // namespace tailcache
