// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/oracle.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>

namespace tailcache {

using nlohmann::json;

namespace {

// Hard limits of the exhaustive solver.
constexpr OracleBounds kSolverLimits{};

}  // namespace

void HindsightInstance::validate() const {
    if (capacity < 0) throw Error(ErrorKind::kValidation, "capacity must be non-negative");
    if (xi_blocks < 0) throw Error(ErrorKind::kValidation, "xi must be non-negative");
    std::map<std::size_t, std::size_t> owner;
    for (std::size_t i = 0; i < conversations.size(); ++i) {
        std::size_t prev_step = 0;
        bool first = true;
        for (const auto& t : conversations[i]) {
            if (t.prompt_blocks < 0 || t.response_blocks < 0) {
                throw Error(ErrorKind::kValidation, "turn sizes must be non-negative");
            }
            if (!first && t.step <= prev_step) {
                throw Error(ErrorKind::kValidation, "conversation " + std::to_string(i) + " steps not increasing");
            }
            if (!owner.emplace(t.step, i).second) {
                throw Error(ErrorKind::kValidation, "tied arrivals at step " + std::to_string(t.step));
            }
            prev_step = t.step;
            first = false;
        }
    }
}

std::vector<HindsightInstance::Arrival> HindsightInstance::arrivals() const {
    std::vector<Arrival> out;
    for (std::size_t i = 0; i < conversations.size(); ++i) {
        for (const auto& t : conversations[i]) out.push_back(Arrival{t.step, i, t.prompt_blocks, t.response_blocks, 0});
    }
    std::sort(out.begin(), out.end(), [](const Arrival& a, const Arrival& b) { return a.step < b.step; });
    std::vector<Blocks> history(conversations.size(), 0);
    for (auto& a : out) {
        a.history_before = history[a.conversation];
        history[a.conversation] += a.prompt_blocks + a.response_blocks;
    }
    return out;
}

std::vector<Blocks> HindsightInstance::budgets() const {
    std::vector<Blocks> out;
    for (const auto& a : arrivals()) out.push_back(std::max<Blocks>(a.job_blocks() - xi_blocks, 0));
    return out;
}

bool HindsightInstance::forced_feasible() const {
    for (const auto& a : arrivals()) {
        if (a.job_blocks() + a.response_blocks > capacity) return false;
    }
    return true;
}

void OracleBounds::validate() const {
    if (max_conversations > kSolverLimits.max_conversations || max_steps > kSolverLimits.max_steps ||
        max_capacity > kSolverLimits.max_capacity || max_turn_blocks > kSolverLimits.max_turn_blocks) {
        throw Error(ErrorKind::kTooLarge, "bounds exceed solver limits (3 conversations, 6 steps, C 8, sizes 4)");
    }
    if (max_conversations == 0 || max_steps == 0 || max_capacity < 1 || max_turn_blocks < 1 || max_xi_blocks < 0) {
        throw Error(ErrorKind::kInvalidConfig, "bounds must allow at least one turn");
    }
}

HindsightSolution solve_hindsight_tel(const HindsightInstance& instance) {
    instance.validate();
    const auto arr = instance.arrivals();
    const std::size_t n = instance.conversations.size();
    const std::size_t k_total = arr.size();
    // Capacity beyond the sum of final histories can never be used.
    Blocks total_history = 0;
    for (const auto& a : arr) total_history += a.prompt_blocks + a.response_blocks;
    const Blocks capacity = std::min(instance.capacity, total_history);
    if (n > kSolverLimits.max_conversations || k_total > kSolverLimits.max_steps ||
        capacity > kSolverLimits.max_capacity) {
        throw Error(ErrorKind::kTooLarge, "instance exceeds exhaustive-search bounds");
    }
    for (const auto& a : arr) {
        if (a.prompt_blocks > kSolverLimits.max_turn_blocks || a.response_blocks > kSolverLimits.max_turn_blocks) {
            throw Error(ErrorKind::kTooLarge, "turn size exceeds exhaustive-search bounds");
        }
    }
    const bool forced = instance.mode == CachingMode::kForced;
    if (forced && !instance.forced_feasible()) {
        throw Error(ErrorKind::kCapacityInfeasible, "forced caching needs every history to fit in the cache");
    }

    const std::size_t base = static_cast<std::size_t>(capacity) + 1;
    std::size_t state_count = 1;
    for (std::size_t i = 0; i < n; ++i) state_count *= base;

    auto encode = [&](const std::vector<Blocks>& x) {
        std::size_t code = 0;
        for (std::size_t i = n; i-- > 0;) code = code * base + static_cast<std::size_t>(x[i]);
        return code;
    };
    auto decode = [&](std::size_t code) {
        std::vector<Blocks> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<Blocks>(code % base);
            code /= base;
        }
        return x;
    };

    constexpr Blocks kUnset = -1;
    std::vector<std::vector<Blocks>> cost(k_total, std::vector<Blocks>(state_count, kUnset));
    std::vector<std::vector<std::size_t>> choice(k_total, std::vector<std::size_t>(state_count, 0));
    HindsightSolution solution;
    solution.states_explored.assign(k_total, 0);

    std::function<Blocks(std::size_t, std::size_t)> best = [&](std::size_t k, std::size_t code) -> Blocks {
        if (k == k_total) return 0;
        if (cost[k][code] != kUnset) return cost[k][code];
        ++solution.states_explored[k];

        const auto x = decode(code);
        const auto& a = arr[k];
        const Blocks uncached = std::max<Blocks>(a.job_blocks() - x[a.conversation] - instance.xi_blocks, 0);
        if (k + 1 == k_total) {
            choice[k][code] = code;
            return cost[k][code] = uncached;
        }

        const Blocks history_after = a.job_blocks() + a.response_blocks;
        std::vector<Blocks> lo(n, 0);
        std::vector<Blocks> hi(x);
        hi[a.conversation] = std::min(history_after, capacity);
        if (forced) lo[a.conversation] = hi[a.conversation] = history_after;

        Blocks best_future = std::numeric_limits<Blocks>::max();
        std::size_t best_code = 0;
        std::vector<Blocks> y(lo);
        // Odometer over the box [lo, hi], skipping vectors over capacity.
        while (true) {
            Blocks sum = 0;
            for (Blocks v : y) sum += v;
            if (sum <= capacity) {
                const std::size_t next = encode(y);
                const Blocks future = best(k + 1, next);
                if (future < best_future) {
                    best_future = future;
                    best_code = next;
                }
            }
            std::size_t d = 0;
            while (d < n && y[d] == hi[d]) {
                y[d] = lo[d];
                ++d;
            }
            if (d == n) break;
            ++y[d];
        }
        choice[k][code] = best_code;
        return cost[k][code] = uncached + best_future;
    };

    if (k_total == 0) return solution;
    solution.tel_blocks = best(0, 0);
    std::size_t code = 0;
    for (std::size_t k = 0; k < k_total; ++k) {
        solution.schedule.push_back(decode(code));
        code = choice[k][code];
    }
    return solution;
}

void check_schedule(const HindsightInstance& instance, const CacheSchedule& schedule) {
    const auto arr = instance.arrivals();
    const std::size_t n = instance.conversations.size();
    auto fail = [](std::size_t k, const std::string& what) {
        throw Error(ErrorKind::kPrecondition, "schedule row " + std::to_string(k) + ": " + what);
    };
    if (schedule.size() != arr.size()) fail(0, "expected one row per arrival");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        const auto& row = schedule[k];
        if (row.size() != n) fail(k, "expected one entry per conversation");
        Blocks sum = 0;
        for (Blocks v : row) {
            if (v < 0) fail(k, "negative cache size");
            sum += v;
        }
        if (sum > instance.capacity) fail(k, "capacity exceeded");
        if (k == 0) {
            if (sum != 0) fail(k, "cache must start empty");
            continue;
        }
        const auto& prev = schedule[k - 1];
        const auto& a = arr[k - 1];
        const Blocks history_after = a.job_blocks() + a.response_blocks;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == a.conversation) {
                if (row[i] > history_after) fail(k, "caches more than the conversation history");
                if (instance.mode == CachingMode::kForced && row[i] != history_after) {
                    fail(k, "forced caching requires the whole history");
                }
            } else if (row[i] > prev[i]) {
                fail(k, "cache grew without an arrival");
            }
        }
    }
}

Blocks evaluate_schedule(const HindsightInstance& instance, const CacheSchedule& schedule) {
    const auto arr = instance.arrivals();
    if (schedule.size() != arr.size()) throw Error(ErrorKind::kPrecondition, "schedule has wrong number of rows");
    Blocks total = 0;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const auto& a = arr[k];
        total += std::max<Blocks>(a.job_blocks() - schedule[k].at(a.conversation) - instance.xi_blocks, 0);
    }
    return total;
}

bool verify_budget_cap(const HindsightSolution& solution, const HindsightInstance& instance) {
    check_schedule(instance, solution.schedule);
    const Blocks value = evaluate_schedule(instance, solution.schedule);
    if (value != solution.tel_blocks) {
        throw Error(ErrorKind::kPrecondition, "stored TEL does not match the schedule");
    }
    const auto arr = instance.arrivals();
    const auto budget = instance.budgets();
    CacheSchedule clamped = solution.schedule;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        auto& x = clamped[k][arr[k].conversation];
        x = std::min(x, budget[k]);
    }
    try {
        check_schedule(instance, clamped);
    } catch (const Error&) {
        return false;
    }
    return evaluate_schedule(instance, clamped) == value;
}

Blocks hit_equivalence_value(const HindsightInstance& instance, const CacheSchedule& schedule) {
    const auto arr = instance.arrivals();
    const auto budget = instance.budgets();
    if (schedule.size() != arr.size()) throw Error(ErrorKind::kPrecondition, "schedule has wrong number of rows");
    Blocks hits = 0;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const Blocks x = schedule[k].at(arr[k].conversation);
        if (x > budget[k]) {
            throw Error(ErrorKind::kPrecondition, "arrival " + std::to_string(k) + " exceeds its TEL-safe budget");
        }
        hits += x;
    }
    return hits;
}

Blocks tel_constant(const HindsightInstance& instance) {
    Blocks total = 0;
    for (Blocks b : instance.budgets()) total += b;
    return total;
}

Trace instance_to_trace(const HindsightInstance& instance) {
    instance.validate();
    Trace trace;
    trace.block_size = 1;
    trace.has_last_turn_flags = true;
    const auto arr = instance.arrivals();
    std::vector<std::optional<ConversationId>> ids(instance.conversations.size());
    ConversationId next = 0;
    for (const auto& a : arr) {
        if (!ids[a.conversation]) ids[a.conversation] = next++;
        TurnEvent e;
        e.conversation_id = *ids[a.conversation];
        e.timestamp = static_cast<double>(a.step);
        e.prompt_blocks = a.prompt_blocks;
        e.response_blocks = a.response_blocks;
        e.is_last_turn = instance.conversations[a.conversation].back().step == a.step;
        trace.events.push_back(e);
    }
    return trace;
}

HindsightInstance random_instance(Rng& rng, const OracleBounds& bounds, CachingMode mode) {
    bounds.validate();
    while (true) {
        HindsightInstance inst;
        inst.mode = mode;
        inst.capacity = rng.uniform_int(1, bounds.max_capacity);
        inst.xi_blocks = rng.uniform_int(0, bounds.max_xi_blocks);
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(bounds.max_conversations)));
        const auto steps = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(bounds.max_steps)));
        // Label conversations by first appearance so none is empty.
        std::vector<std::size_t> label(n, n);
        std::size_t used = 0;
        for (std::size_t step = 1; step <= steps; ++step) {
            const auto raw = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            if (label[raw] == n) {
                label[raw] = used++;
                inst.conversations.emplace_back();
            }
            ScheduledTurn t;
            t.step = step;
            t.prompt_blocks = rng.uniform_int(1, bounds.max_turn_blocks);
            t.response_blocks = rng.uniform_int(0, bounds.max_turn_blocks);
            inst.conversations[label[raw]].push_back(t);
        }
        if (mode == CachingMode::kOptional || inst.forced_feasible()) return inst;
    }
}

json to_json(const HindsightInstance& instance) {
    json convs = json::array();
    for (const auto& c : instance.conversations) {
        json turns = json::array();
        for (const auto& t : c) turns.push_back({{"step", t.step}, {"q", t.prompt_blocks}, {"a", t.response_blocks}});
        convs.push_back(turns);
    }
    return {{"capacity", instance.capacity},
            {"xi_blocks", instance.xi_blocks},
            {"caching_mode", to_string(instance.mode)},
            {"conversations", convs}};
}

HindsightInstance hindsight_instance_from_json(const json& j) {
    HindsightInstance inst;
    try {
        inst.capacity = j.at("capacity").get<Blocks>();
        inst.xi_blocks = j.value("xi_blocks", Blocks{0});
        const auto mode = j.value("caching_mode", std::string("optional"));
        if (mode != "optional" && mode != "forced") throw Error(ErrorKind::kInvalidConfig, "unknown caching_mode");
        inst.mode = mode == "forced" ? CachingMode::kForced : CachingMode::kOptional;
        for (const auto& c : j.at("conversations")) {
            auto& turns = inst.conversations.emplace_back();
            for (const auto& t : c) {
                turns.push_back(ScheduledTurn{t.at("step").get<std::size_t>(), t.at("q").get<Blocks>(),
                                              t.value("a", Blocks{0})});
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kParse, std::string("bad hindsight instance: ") + e.what());
    }
    inst.validate();
    return inst;
}

json to_json(const HindsightSolution& solution) {
    return {{"tel_blocks", solution.tel_blocks},
            {"schedule", solution.schedule},
            {"states_explored", solution.states_explored}};
}

}  // namespace tailcache
