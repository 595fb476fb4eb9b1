// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace tailcache {

using nlohmann::json;

PromptLengthDistribution::PromptLengthDistribution(std::vector<Point> support, Provenance provenance)
    : support_(std::move(support)), provenance_(provenance) {
    if (support_.empty()) {
        throw Error(ErrorKind::kInvalidConfig, "distribution support is empty");
    }
    std::sort(support_.begin(), support_.end(), [](const Point& a, const Point& b) { return a.blocks < b.blocks; });
    double total = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        const auto& p = support_[i];
        if (p.blocks < 0) throw Error(ErrorKind::kInvalidConfig, "distribution value is negative");
        if (!(p.probability >= 0.0 && p.probability <= 1.0)) {
            throw Error(ErrorKind::kInvalidConfig, "distribution probability outside [0,1]");
        }
        if (i > 0 && support_[i - 1].blocks == p.blocks) {
            throw Error(ErrorKind::kInvalidConfig, "duplicate distribution value " + std::to_string(p.blocks));
        }
        total += p.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::kInvalidConfig, "distribution probabilities sum to " + std::to_string(total));
    }
}

PromptLengthDistribution PromptLengthDistribution::point_mass(Blocks blocks) {
    return PromptLengthDistribution({{blocks, 1.0}});
}

PromptLengthDistribution PromptLengthDistribution::from_values(const std::vector<Blocks>& values,
                                                               const std::vector<double>& probs) {
    if (values.size() != probs.size()) {
        throw Error(ErrorKind::kInvalidConfig, "values and probs differ in length");
    }
    std::vector<Point> points;
    points.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) points.push_back({values[i], probs[i]});
    return PromptLengthDistribution(std::move(points));
}

double PromptLengthDistribution::mean() const {
    double m = 0.0;
    for (const auto& p : support_) m += p.probability * static_cast<double>(p.blocks);
    return m;
}

double PromptLengthDistribution::prob_at_least(Blocks k) const {
    double total = 0.0;
    for (auto it = support_.rbegin(); it != support_.rend() && it->blocks >= k; ++it) total += it->probability;
    return total;
}

double PromptLengthDistribution::expected_positive_part(Blocks offset) const {
    double total = 0.0;
    for (const auto& p : support_) {
        const Blocks v = p.blocks + offset;
        if (v > 0) total += p.probability * static_cast<double>(v);
    }
    return total;
}

Blocks PromptLengthDistribution::sample(Rng& rng) const {
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (const auto& p : support_) {
        cumulative += p.probability;
        if (u < cumulative) return p.blocks;
    }
    return support_.back().blocks;
}

PromptLengthDistribution fit_prompt_distribution(const Trace& trace) {
    if (trace.events.empty()) {
        throw Error(ErrorKind::kPrecondition, "cannot fit a prompt distribution to an empty trace");
    }
    std::map<Blocks, std::size_t> counts;
    for (const auto& e : trace.events) ++counts[e.prompt_blocks];
    const auto n = static_cast<double>(trace.events.size());
    std::vector<PromptLengthDistribution::Point> points;
    for (const auto& [value, count] : counts) points.push_back({value, static_cast<double>(count) / n});
    return PromptLengthDistribution(std::move(points), PromptLengthDistribution::Provenance::kEmpiricalFromTrace);
}

double belief_survival(double death_rate, double elapsed) {
    if (elapsed < 0.0) throw Error(ErrorKind::kDomain, "elapsed time is negative");
    if (!(death_rate > 0.0)) throw Error(ErrorKind::kDomain, "death rate must be positive");
    return std::exp(-death_rate * elapsed);
}

void SyntheticParams::validate() const {
    if (!(conversation_birth_rate > 0.0) || !(turn_rate > 0.0) || !(death_rate > 0.0)) {
        throw Error(ErrorKind::kInvalidConfig, "all rates must be positive");
    }
    for (double r : turn_rate_overrides) {
        if (!(r > 0.0)) throw Error(ErrorKind::kInvalidConfig, "turn rate override must be positive");
    }
    if (prompt_length_dist.empty() || response_length_dist.empty()) {
        throw Error(ErrorKind::kInvalidConfig, "length distributions are required");
    }
    if (prompt_length_dist.min_value() < 1) {
        throw Error(ErrorKind::kInvalidConfig, "prompt length support must be >= 1 block");
    }
    if (max_events == 0) throw Error(ErrorKind::kInvalidConfig, "max_events must be positive");
}

double death_rate_for_mean_turns(double turn_rate, double mean_turns) {
    if (!(mean_turns > 1.0)) throw Error(ErrorKind::kInvalidConfig, "mean turns must exceed 1");
    return turn_rate / (mean_turns - 1.0);
}

SyntheticParams sharegpt_preset() {
    SyntheticParams p;
    p.conversation_birth_rate = 1.0;
    p.turn_rate = 3.0;
    p.death_rate = death_rate_for_mean_turns(p.turn_rate, 3.5);
    // Right-skewed prompts, mean 100 blocks.
    p.prompt_length_dist = PromptLengthDistribution::from_values(
        {10, 30, 60, 100, 150, 200, 390}, {0.15, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05});
    p.response_length_dist = PromptLengthDistribution::from_values(
        {50, 150, 300, 500}, {0.25, 0.35, 0.3, 0.1});
    p.max_events = 2000;
    return p;
}

SyntheticParams wildchat_preset() {
    SyntheticParams p;
    p.conversation_birth_rate = 1.0;
    p.turn_rate = 1.0 / 30.0;
    p.death_rate = death_rate_for_mean_turns(p.turn_rate, 3.5);
    // Heavy tail: most prompts short, a few very long pastes. Mean 200 blocks.
    p.prompt_length_dist = PromptLengthDistribution::from_values(
        {20, 50, 100, 200, 400, 625, 1400}, {0.2, 0.25, 0.2, 0.15, 0.1, 0.06, 0.04});
    p.response_length_dist = PromptLengthDistribution::from_values(
        {100, 250, 500, 800}, {0.3, 0.35, 0.25, 0.1});
    p.max_events = 2000;
    return p;
}

Trace generate_synthetic(const SyntheticParams& params) {
    params.validate();

    Trace trace;
    trace.block_size = 1;
    trace.has_last_turn_flags = true;

    // Largest of the `max_events` earliest timestamps seen so far.
    std::priority_queue<double> earliest;
    std::vector<TurnEvent> events;

    Rng birth_rng(derive_seed(params.seed, 0));
    double birth = 0.0;
    for (std::uint64_t k = 0;; ++k) {
        birth += birth_rng.exponential(params.conversation_birth_rate);
        if (earliest.size() == params.max_events && birth > earliest.top()) break;

        Rng rng(derive_seed(params.seed, k + 1));
        const double death = birth + rng.exponential(params.death_rate);
        const double rate = params.turn_rate_for(k);
        const auto id = static_cast<ConversationId>(k);

        double t = birth;
        while (true) {
            TurnEvent e;
            e.conversation_id = id;
            e.timestamp = t;
            e.prompt_blocks = params.prompt_length_dist.sample(rng);
            e.response_blocks = params.response_length_dist.sample(rng);
            if (earliest.size() < params.max_events) {
                earliest.push(t);
            } else if (t < earliest.top()) {
                earliest.pop();
                earliest.push(t);
            } else {
                // Later turns of this conversation are later still.
                break;
            }
            events.push_back(e);
            t += rng.exponential(rate);
            if (t >= death) break;
        }
    }

    std::sort(events.begin(), events.end(), [](const TurnEvent& a, const TurnEvent& b) {
        return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.conversation_id < b.conversation_id;
    });
    if (events.size() > params.max_events) events.resize(params.max_events);

    std::unordered_map<ConversationId, std::size_t> last_index;
    for (std::size_t i = 0; i < events.size(); ++i) last_index[events[i].conversation_id] = i;
    for (const auto& [id, index] : last_index) events[index].is_last_turn = true;

    trace.events = std::move(events);
    return trace;
}

namespace {

struct RawTurn {
    std::string key;  // original conversation id, as text
    bool key_is_number;
    std::int64_t key_number;
    double timestamp;
    std::int64_t prompt_tokens;
    std::int64_t response_tokens;
    bool is_last_turn;
    bool has_flag;
};

bool raw_key_less(const RawTurn& a, const RawTurn& b) {
    if (a.key_is_number != b.key_is_number) return a.key_is_number;
    if (a.key_is_number) return a.key_number < b.key_number;
    return a.key < b.key;
}

std::int64_t require_count(const json& obj, const char* key, std::size_t line) {
    if (!obj.contains(key) || !obj[key].is_number_integer() || obj[key].get<std::int64_t>() < 0) {
        throw Error(ErrorKind::kParse,
                    "line " + std::to_string(line) + ": '" + key + "' must be a non-negative integer");
    }
    return obj[key].get<std::int64_t>();
}

}  // namespace

Trace parse_conversations(std::istream& in, const LoadOptions& options) {
    if (options.block_size <= 0) throw Error(ErrorKind::kInvalidConfig, "block_size must be positive");

    std::vector<RawTurn> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.is_object()) throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": not an object");

        RawTurn t{};
        if (!obj.contains("conversation_id")) {
            throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": missing conversation_id");
        }
        const auto& id = obj["conversation_id"];
        if (id.is_number_integer()) {
            t.key_is_number = true;
            t.key_number = id.get<std::int64_t>();
            t.key = std::to_string(t.key_number);
        } else if (id.is_string()) {
            t.key_is_number = false;
            t.key = id.get<std::string>();
        } else {
            throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": conversation_id must be int or string");
        }
        if (!obj.contains("timestamp") || !obj["timestamp"].is_number()) {
            throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": missing numeric timestamp");
        }
        t.timestamp = obj["timestamp"].get<double>();
        t.prompt_tokens = require_count(obj, "prompt_tokens", line_no);
        t.response_tokens = require_count(obj, "response_tokens", line_no);
        if (obj.contains("is_last_turn")) {
            if (!obj["is_last_turn"].is_boolean()) {
                throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": is_last_turn must be boolean");
            }
            t.has_flag = true;
            t.is_last_turn = obj["is_last_turn"].get<bool>();
        }
        raw.push_back(std::move(t));
    }

    // First pass ordering fixes first-arrival ids; second pass orders ties by the new ids.
    std::stable_sort(raw.begin(), raw.end(), [](const RawTurn& a, const RawTurn& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return raw_key_less(a, b);
    });
    std::unordered_map<std::string, ConversationId> ids;
    bool all_flagged = !raw.empty();
    Trace trace;
    trace.block_size = options.block_size;
    for (const auto& t : raw) {
        auto [it, inserted] = ids.try_emplace((t.key_is_number ? "#" : "$") + t.key,
                                              static_cast<ConversationId>(ids.size()));
        TurnEvent e;
        e.conversation_id = it->second;
        e.timestamp = t.timestamp;
        e.prompt_blocks = tokens_to_blocks(t.prompt_tokens, options.block_size);
        e.response_blocks = tokens_to_blocks(t.response_tokens, options.block_size);
        e.is_last_turn = t.is_last_turn;
        all_flagged = all_flagged && t.has_flag;
        trace.events.push_back(e);
    }
    std::stable_sort(trace.events.begin(), trace.events.end(), [](const TurnEvent& a, const TurnEvent& b) {
        return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.conversation_id < b.conversation_id;
    });

    if (options.max_turns && trace.events.size() > *options.max_turns) {
        trace.events.resize(*options.max_turns);
    }
    trace.has_last_turn_flags = all_flagged;
    if (all_flagged) {
        // A conversation cut off by the turn cap ends inside the replayed window.
        std::unordered_map<ConversationId, std::size_t> last_index;
        for (std::size_t i = 0; i < trace.events.size(); ++i) last_index[trace.events[i].conversation_id] = i;
        for (const auto& [id, index] : last_index) trace.events[index].is_last_turn = true;
    }

    const auto report = validate_trace(trace);
    if (!report.ok()) throw Error(ErrorKind::kValidation, "trace rejected:\n" + report.summary());
    return trace;
}

Trace load_conversations(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kParse, "cannot open trace file " + path);
    return parse_conversations(in, options);
}

void write_trace(std::ostream& out, const Trace& trace) {
    for (const auto& e : trace.events) {
        nlohmann::ordered_json j;
        j["conversation_id"] = e.conversation_id;
        j["timestamp"] = e.timestamp;
        j["prompt_tokens"] = e.prompt_blocks * trace.block_size;
        j["response_tokens"] = e.response_blocks * trace.block_size;
        if (trace.has_last_turn_flags) j["is_last_turn"] = e.is_last_turn;
        out << j.dump() << '\n';
    }
}

void save_trace(const std::string& path, const Trace& trace) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::kInvalidConfig, "cannot write trace file " + path);
    write_trace(out, trace);
}

json to_json(const PromptLengthDistribution& dist) {
    json values = json::array();
    json probs = json::array();
    for (const auto& p : dist.support()) {
        values.push_back(p.blocks);
        probs.push_back(p.probability);
    }
    return json{{"values", values}, {"probs", probs}};
}

PromptLengthDistribution distribution_from_json(const json& j, Blocks block_size) {
    try {
        if (j.contains("empirical_from")) {
            LoadOptions options;
            options.block_size = block_size;
            return fit_prompt_distribution(load_conversations(j.at("empirical_from").get<std::string>(), options));
        }
        return PromptLengthDistribution::from_values(j.at("values").get<std::vector<Blocks>>(),
                                                     j.at("probs").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad distribution: ") + e.what());
    }
}

json to_json(const SyntheticParams& p) {
    return json{{"conversation_birth_rate", p.conversation_birth_rate},
                {"turn_rate", p.turn_rate},
                {"turn_rate_overrides", p.turn_rate_overrides},
                {"death_rate", p.death_rate},
                {"prompt_length_dist", to_json(p.prompt_length_dist)},
                {"response_length_dist", to_json(p.response_length_dist)},
                {"max_events", p.max_events},
                {"seed", p.seed}};
}

SyntheticParams synthetic_params_from_json(const json& j, const SyntheticParams& base) {
    SyntheticParams p = base;
    try {
        if (j.contains("preset")) {
            const auto name = j["preset"].get<std::string>();
            if (name == "sharegpt") {
                p = sharegpt_preset();
            } else if (name == "wildchat") {
                p = wildchat_preset();
            } else {
                throw Error(ErrorKind::kInvalidConfig, "unknown preset '" + name + "'");
            }
        }
        if (j.contains("conversation_birth_rate")) p.conversation_birth_rate = j["conversation_birth_rate"].get<double>();
        if (j.contains("turn_rate")) p.turn_rate = j["turn_rate"].get<double>();
        if (j.contains("turn_rate_overrides")) p.turn_rate_overrides = j["turn_rate_overrides"].get<std::vector<double>>();
        if (j.contains("death_rate")) p.death_rate = j["death_rate"].get<double>();
        if (j.contains("mean_turns")) p.death_rate = death_rate_for_mean_turns(p.turn_rate, j["mean_turns"].get<double>());
        if (j.contains("prompt_length_dist")) p.prompt_length_dist = distribution_from_json(j["prompt_length_dist"]);
        if (j.contains("response_length_dist")) p.response_length_dist = distribution_from_json(j["response_length_dist"]);
        if (j.contains("max_events")) p.max_events = j["max_events"].get<std::size_t>();
        if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::kInvalidConfig, std::string("bad synthetic params: ") + e.what());
    }
    p.validate();
    return p;
}

}  // namespace tailcache
