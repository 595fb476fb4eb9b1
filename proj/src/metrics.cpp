// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "tailcache/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace tailcache {

void LatencyModel::validate() const {
    if (!(alpha_ms_per_block > 0.0)) throw Error(ErrorKind::kInvalidConfig, "alpha must be positive");
    if (block_size <= 0) throw Error(ErrorKind::kInvalidConfig, "block_size must be positive");
}

Blocks LatencyModel::xi_blocks(double xi_ms) const {
    if (xi_ms < 0.0) throw Error(ErrorKind::kDomain, "latency threshold must be non-negative");
    return static_cast<Blocks>(std::llround(xi_ms / alpha_ms_per_block));
}

const SloResult& MetricsReport::slo(double slo_ms) const {
    for (const auto& s : slos) {
        if (s.slo_ms == slo_ms) return s;
    }
    throw Error(ErrorKind::kPrecondition, "SLO " + std::to_string(slo_ms) + " ms not in report");
}

double ttft(Blocks uncached_blocks, const LatencyModel& model) {
    if (uncached_blocks < 0) throw Error(ErrorKind::kDomain, "uncached blocks must be non-negative");
    return model.alpha_ms_per_block * static_cast<double>(uncached_blocks);
}

double tel(std::span<const RequestRecord> records, double xi_ms) {
    double total = 0.0;
    for (const auto& r : records) total += std::max(r.ttft_ms - xi_ms, 0.0);
    return total;
}

Blocks tel_blocks(std::span<const RequestRecord> records, Blocks xi_blocks) {
    Blocks total = 0;
    for (const auto& r : records) total += std::max<Blocks>(r.uncached_blocks - xi_blocks, 0);
    return total;
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) throw Error(ErrorKind::kPrecondition, "percentile of an empty list");
    if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorKind::kDomain, "percentile must be in (0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

SloResult slo_violations(std::span<const RequestRecord> records, double slo_ms) {
    SloResult result;
    result.slo_ms = slo_ms;
    result.count = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [slo_ms](const RequestRecord& r) { return r.ttft_ms > slo_ms; }));
    result.rate = records.empty() ? 0.0 : static_cast<double>(result.count) / static_cast<double>(records.size());
    return result;
}

std::int64_t kv_bytes_per_token(std::int64_t layers, std::int64_t kv_heads, std::int64_t head_size,
                                std::int64_t bytes_per_value) {
    if (layers <= 0 || kv_heads <= 0 || head_size <= 0 || bytes_per_value <= 0) {
        throw Error(ErrorKind::kDomain, "model dimensions must be positive");
    }
    // Keys and values.
    return 2 * layers * kv_heads * head_size * bytes_per_value;
}

double bytes_to_gb(std::int64_t bytes) {
    return static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0);
}

double relative_improvement(double base, double variant) {
    if (!(base > 0.0)) throw Error(ErrorKind::kDomain, "baseline must be positive");
    return (base - variant) / base * 100.0;
}

MetricsReport summarize(std::span<const RequestRecord> records, const LatencyModel& model, double xi_ms,
                        std::span<const double> slos_ms) {
    MetricsReport report;
    report.count = records.size();
    report.xi_ms = xi_ms;
    report.xi_blocks = model.xi_blocks(xi_ms);
    report.tel_blocks = tel_blocks(records, report.xi_blocks);
    report.tel_ms = tel(records, xi_ms);
    if (!records.empty()) {
        std::vector<double> ttfts;
        ttfts.reserve(records.size());
        double sum = 0.0;
        for (const auto& r : records) {
            ttfts.push_back(r.ttft_ms);
            sum += r.ttft_ms;
        }
        std::sort(ttfts.begin(), ttfts.end());
        report.p50 = percentile(ttfts, 50);
        report.p90 = percentile(ttfts, 90);
        report.p95 = percentile(ttfts, 95);
        report.p99 = percentile(ttfts, 99);
        report.mean = sum / static_cast<double>(records.size());
    }
    for (double slo : slos_ms) report.slos.push_back(slo_violations(records, slo));
    return report;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json slos = nlohmann::json::array();
    for (const auto& s : r.slos) slos.push_back({{"slo_ms", s.slo_ms}, {"count", s.count}, {"rate", s.rate}});
    return {{"count", r.count}, {"xi_ms", r.xi_ms},   {"xi_blocks", r.xi_blocks}, {"tel_blocks", r.tel_blocks},
            {"tel_ms", r.tel_ms}, {"p50", r.p50},     {"p90", r.p90},             {"p95", r.p95},
            {"p99", r.p99},       {"mean", r.mean},   {"slos", slos},
            {"ttft_source", "modeled (linear alpha model)"}};
}

}  // namespace tailcache
