#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iptvpon/segment_cache.hpp"

namespace iptvpon {

/// Per-cache request accounting; one entry per segment touched by a request.
struct CacheCounts {
    std::uint64_t requests = 0;
    std::uint64_t hits1 = 0;  // includes hits that triggered a promotion
    std::uint64_t hits2 = 0;
    std::uint64_t misses = 0;
    std::uint64_t drops = 0;
    std::uint64_t bytes_requested = 0;
    std::uint64_t bytes_hit = 0;

    void record(CacheDecision d, std::uint64_t bytes);
    CacheCounts& operator+=(const CacheCounts& o);
};

/// (hits1 + hits2) / requests, 0 when nothing was requested.
double hit_ratio(const CacheCounts& c);
double byte_hit_ratio(const CacheCounts& c);

/// Consecutive-pair delay variation D[i+1] - D[i] over a flow in sequence
/// order. Lost packets are empty entries; pairs touching a loss are skipped.
std::vector<double> ipdv_series(std::span<const std::optional<double>> delays);
std::vector<double> ipdv_series(std::span<const double> delays);

/// Nearest-rank percentile of sorted data: element ceil(p/100 * n), 1-based.
double percentile_nearest_rank(std::span<const double> sorted, double p);

struct DelayStats {
    std::uint64_t count = 0;
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    double p99 = 0.0;
};

DelayStats delay_stats(std::vector<double> delays);
double loss_ratio(std::uint64_t lost, std::uint64_t created);

struct JitterStats {
    std::uint64_t pairs = 0;
    double mean_abs = 0.0;
    double stddev = 0.0;
    double p99_abs = 0.0;
};

JitterStats jitter_stats(std::span<const double> ipdv);

/// QoS summary for one class of flows (VOD or live).
struct FlowClassStats {
    std::uint64_t flows = 0;
    std::uint64_t created = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;
    std::uint64_t in_flight = 0;
    DelayStats delay;
    JitterStats jitter;
    double loss_ratio = 0.0;
};

/// Builds class statistics from per-flow delay sequences (sequence order,
/// nullopt = lost). `in_flight` counts packets neither delivered nor lost.
FlowClassStats summarize_flows(const std::vector<std::vector<std::optional<double>>>& flows,
                               std::uint64_t lost, std::uint64_t in_flight);

using MetricValue = std::variant<std::uint64_t, double, std::string>;

struct MetricRow {
    std::string scope;
    std::string metric;
    MetricValue value;
};

struct MetricsReport {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string event_log_hash;
    std::uint64_t events = 0;
    double sim_end_time = 0.0;

    std::uint64_t vod_requests = 0;
    std::uint64_t live_joins = 0;
    std::uint64_t live_leaves = 0;
    std::uint64_t rejected_requests = 0;

    CacheCounts onu_cache;
    CacheCounts olt_cache;
    FlowClassStats vod;
    FlowClassStats live;

    std::uint64_t packets_created = 0;
    std::uint64_t packets_delivered = 0;
    std::uint64_t packets_lost = 0;
    std::uint64_t packets_in_flight = 0;
    std::uint64_t frame_filter_mismatches = 0;

    /// Flattened view in the fixed export order.
    std::vector<MetricRow> rows() const;
};

enum class ExportFormat { Csv, Json };

void export_report(const MetricsReport& report, ExportFormat fmt, std::ostream& out);
void export_report(const MetricsReport& report, ExportFormat fmt, const std::string& path);

}  // namespace iptvpon
