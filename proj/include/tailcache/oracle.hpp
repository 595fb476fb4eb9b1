// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "tailcache/policy.hpp"
#include "tailcache/random.hpp"
#include "tailcache/trace.hpp"

namespace tailcache {

struct ScheduledTurn {
    std::size_t step = 0;
    Blocks prompt_blocks = 0;
    Blocks response_blocks = 0;
};

/// A deterministic micro-trace for the exact hindsight solver. `conversations[i]` lists
/// conversation i's turns in step order; steps are globally distinct.
struct HindsightInstance {
    std::vector<std::vector<ScheduledTurn>> conversations;
    Blocks capacity = 1;
    Blocks xi_blocks = 0;
    CachingMode mode = CachingMode::kOptional;

    struct Arrival {
        std::size_t step;
        std::size_t conversation;
        Blocks prompt_blocks;
        Blocks response_blocks;
        Blocks history_before;  // L before this turn
        Blocks job_blocks() const { return history_before + prompt_blocks; }
    };

    /// Throws Error(kValidation) on tied steps, negative sizes or negative capacity.
    void validate() const;
    /// All turns in step order with running histories.
    std::vector<Arrival> arrivals() const;
    /// TEL-safe budget (L + q - xi)^+ of each arrival, in arrival order.
    std::vector<Blocks> budgets() const;
    /// Forced caching is feasible iff no history after any arrival exceeds capacity.
    bool forced_feasible() const;
};

/// x[k][i]: blocks of conversation i cached just before the k-th arrival (arrival order).
using CacheSchedule = std::vector<std::vector<Blocks>>;

struct HindsightSolution {
    CacheSchedule schedule;
    Blocks tel_blocks = 0;
    // Distinct cache vectors evaluated before each arrival.
    std::vector<std::size_t> states_explored;
};

struct OracleBounds {
    std::size_t max_conversations = 3;
    std::size_t max_steps = 6;
    Blocks max_capacity = 8;
    Blocks max_turn_blocks = 4;
    Blocks max_xi_blocks = 4;

    /// Throws Error(kTooLarge) if these bounds exceed what the solver accepts.
    void validate() const;
};

/// Exact minimum of sum over arrivals of (L + q - x - xi)^+ over all feasible integer
/// schedules, by dynamic programming over cache vectors.
HindsightSolution solve_hindsight_tel(const HindsightInstance& instance);

/// Throws Error(kPrecondition) if the schedule breaks capacity, history, growth-on-arrival or
/// forced-caching constraints.
void check_schedule(const HindsightInstance& instance, const CacheSchedule& schedule);
Blocks evaluate_schedule(const HindsightInstance& instance, const CacheSchedule& schedule);

/// Clamps every arrival's cache to its TEL-safe budget; true iff the clamped schedule stays
/// feasible with the same TEL.
bool verify_budget_cap(const HindsightSolution& solution, const HindsightInstance& instance);

/// Sum of cache hits over arrivals. Requires a budget-capped schedule (Error(kPrecondition)).
Blocks hit_equivalence_value(const HindsightInstance& instance, const CacheSchedule& schedule);
/// Sum of budgets; TEL = tel_constant - hits on every budget-capped schedule.
Blocks tel_constant(const HindsightInstance& instance);

/// Trace with timestamp = step, conversation ids re-indexed by first arrival, block size 1.
Trace instance_to_trace(const HindsightInstance& instance);

/// Uniform random instance within `bounds`; prompts are at least one block.
HindsightInstance random_instance(Rng& rng, const OracleBounds& bounds, CachingMode mode);

nlohmann::json to_json(const HindsightInstance& instance);
HindsightInstance hindsight_instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HindsightSolution& solution);

}  // namespace tailcache
