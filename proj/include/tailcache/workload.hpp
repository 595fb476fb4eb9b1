// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tailcache/random.hpp"
#include "tailcache/trace.hpp"

namespace tailcache {

/// Discrete distribution over block counts (prompt or response lengths).
class PromptLengthDistribution {
public:
    enum class Provenance { kExplicit, kEmpiricalFromTrace };

    struct Point {
        Blocks blocks;
        double probability;
    };

    PromptLengthDistribution() = default;

    /// Validates: non-empty, distinct non-negative values, probabilities in [0,1] summing to 1
    /// within 1e-9. Points are sorted by value.
    PromptLengthDistribution(std::vector<Point> support, Provenance provenance = Provenance::kExplicit);

    static PromptLengthDistribution point_mass(Blocks blocks);
    static PromptLengthDistribution from_values(const std::vector<Blocks>& values, const std::vector<double>& probs);

    const std::vector<Point>& support() const { return support_; }
    Provenance provenance() const { return provenance_; }
    bool empty() const { return support_.empty(); }

    Blocks min_value() const { return support_.front().blocks; }
    Blocks max_value() const { return support_.back().blocks; }
    double mean() const;

    /// P(Q >= k).
    double prob_at_least(Blocks k) const;
    /// E[(Q + offset)^+].
    double expected_positive_part(Blocks offset) const;

    Blocks sample(Rng& rng) const;

private:
    std::vector<Point> support_;
    Provenance provenance_ = Provenance::kExplicit;
};

PromptLengthDistribution fit_prompt_distribution(const Trace& trace);

/// Belief that a conversation silent for `elapsed` seconds is still alive: exp(-death_rate * elapsed).
double belief_survival(double death_rate, double elapsed);

struct SyntheticParams {
    double conversation_birth_rate = 1.0;  // per second
    double turn_rate = 3.0;                // per second, per live conversation
    // Per-conversation overrides by birth index; conversations past the end use turn_rate.
    std::vector<double> turn_rate_overrides;
    double death_rate = 1.2;  // per second
    PromptLengthDistribution prompt_length_dist = PromptLengthDistribution::point_mass(100);
    PromptLengthDistribution response_length_dist = PromptLengthDistribution::point_mass(0);
    std::size_t max_events = 2000;
    std::uint64_t seed = 0;

    double turn_rate_for(std::size_t conversation) const {
        return conversation < turn_rate_overrides.size() ? turn_rate_overrides[conversation] : turn_rate;
    }
    /// Expected turns per conversation, 1 + turn_rate / death_rate (first turn at birth).
    double expected_turns() const { return 1.0 + turn_rate / death_rate; }
    void validate() const;
};

/// Death rate that gives `mean_turns` expected turns per conversation at the given turn rate.
double death_rate_for_mean_turns(double turn_rate, double mean_turns);

/// Exponential birth/lifetime/turn clocks; ShareGPT-style synthetic timestamps
/// (birth rate 1/s, turn rate 3/s, 3.5 turns on average, prompt mean 100 blocks).
SyntheticParams sharegpt_preset();
/// Many concurrent conversations with heavy-tailed prompts averaging 200 blocks.
SyntheticParams wildchat_preset();

/// Birth clock draws come from stream 0; conversation k's lifetime, turn clock and lengths
/// come from stream k + 1, so each conversation is reproducible on its own.
Trace generate_synthetic(const SyntheticParams& params);

struct LoadOptions {
    Blocks block_size = 1;
    std::optional<std::size_t> max_turns;
};

/// Parses newline-delimited JSON turns ({conversation_id, timestamp, prompt_tokens,
/// response_tokens, is_last_turn}), sorts, re-indexes ids by first arrival, applies the turn
/// cap and validates. Throws Error(kParse) with a line number or Error(kValidation).
Trace parse_conversations(std::istream& in, const LoadOptions& options);
Trace load_conversations(const std::string& path, const LoadOptions& options);

void write_trace(std::ostream& out, const Trace& trace);
void save_trace(const std::string& path, const Trace& trace);

nlohmann::json to_json(const PromptLengthDistribution& dist);
/// Accepts {values, probs} or {"empirical_from": <trace path>}.
PromptLengthDistribution distribution_from_json(const nlohmann::json& j, Blocks block_size = 1);

nlohmann::json to_json(const SyntheticParams& params);
/// Missing keys fall back to `base`.
SyntheticParams synthetic_params_from_json(const nlohmann::json& j, const SyntheticParams& base = {});

}  // namespace tailcache
