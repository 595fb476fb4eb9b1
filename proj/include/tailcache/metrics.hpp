// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "tailcache/trace.hpp"

namespace tailcache {

/// Linear prefill model: TTFT = alpha * uncached blocks.
struct LatencyModel {
    double alpha_ms_per_block = 1.0;
    Blocks block_size = 1;

    void validate() const;
    /// Threshold in blocks for a threshold in ms, rounded to the nearest block.
    Blocks xi_blocks(double xi_ms) const;
};

struct RequestRecord {
    ConversationId conversation_id = 0;
    double timestamp = 0.0;
    Blocks uncached_blocks = 0;
    Blocks cached_blocks_used = 0;
    double ttft_ms = 0.0;
};

struct SloResult {
    double slo_ms = 0.0;
    std::size_t count = 0;
    double rate = 0.0;
};

struct MetricsReport {
    std::size_t count = 0;
    double xi_ms = 0.0;
    Blocks xi_blocks = 0;
    Blocks tel_blocks = 0;
    double tel_ms = 0.0;
    double p50 = 0.0;
    double p90 = 0.0;
    double p95 = 0.0;
    double p99 = 0.0;
    double mean = 0.0;
    std::vector<SloResult> slos;

    /// Throws when `slo_ms` was not configured.
    const SloResult& slo(double slo_ms) const;
};

double ttft(Blocks uncached_blocks, const LatencyModel& model);

/// Sum of max(ttft - xi_ms, 0).
double tel(std::span<const RequestRecord> records, double xi_ms);
/// Block-unit TEL: sum of max(uncached - xi_blocks, 0).
Blocks tel_blocks(std::span<const RequestRecord> records, Blocks xi_blocks);

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value, p in (0, 100].
double percentile(std::span<const double> values, double p);

/// Requests with TTFT strictly above the SLO.
SloResult slo_violations(std::span<const RequestRecord> records, double slo_ms);

std::int64_t kv_bytes_per_token(std::int64_t layers, std::int64_t kv_heads, std::int64_t head_size,
                                std::int64_t bytes_per_value);
/// Bytes to GiB (1024^3), matching how KV cache sizes are usually quoted.
double bytes_to_gb(std::int64_t bytes);

/// (base - variant) / base * 100; negative values are regressions.
double relative_improvement(double base, double variant);

MetricsReport summarize(std::span<const RequestRecord> records, const LatencyModel& model, double xi_ms,
                        std::span<const double> slos_ms);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace tailcache
