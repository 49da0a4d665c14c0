#include "iptvpon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "iptvpon/numfmt.hpp"

namespace iptvpon {

void CacheCounts::record(CacheDecision d, std::uint64_t bytes) {
    requests += 1;
    bytes_requested += bytes;
    switch (d) {
    case CacheDecision::Hit1:
    case CacheDecision::Hit1Promoted: hits1 += 1; break;
    case CacheDecision::Hit2: hits2 += 1; break;
    case CacheDecision::MissInserted: misses += 1; break;
    case CacheDecision::MissDropped: drops += 1; break;
    }
    if (is_hit(d)) bytes_hit += bytes;
}

CacheCounts& CacheCounts::operator+=(const CacheCounts& o) {
    requests += o.requests;
    hits1 += o.hits1;
    hits2 += o.hits2;
    misses += o.misses;
    drops += o.drops;
    bytes_requested += o.bytes_requested;
    bytes_hit += o.bytes_hit;
    return *this;
}

double hit_ratio(const CacheCounts& c) {
    if (c.requests == 0) return 0.0;
    return static_cast<double>(c.hits1 + c.hits2) / static_cast<double>(c.requests);
}

double byte_hit_ratio(const CacheCounts& c) {
    if (c.bytes_requested == 0) return 0.0;
    return static_cast<double>(c.bytes_hit) / static_cast<double>(c.bytes_requested);
}

std::vector<double> ipdv_series(std::span<const std::optional<double>> delays) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < delays.size(); ++i) {
        if (delays[i] && delays[i + 1]) out.push_back(*delays[i + 1] - *delays[i]);
    }
    return out;
}

std::vector<double> ipdv_series(std::span<const double> delays) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < delays.size(); ++i) out.push_back(delays[i + 1] - delays[i]);
    return out;
}

double percentile_nearest_rank(std::span<const double> sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
    const double n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

DelayStats delay_stats(std::vector<double> delays) {
    DelayStats s;
    s.count = delays.size();
    if (delays.empty()) return s;
    std::sort(delays.begin(), delays.end());
    s.mean = std::accumulate(delays.begin(), delays.end(), 0.0) / static_cast<double>(s.count);
    s.p50 = percentile_nearest_rank(delays, 50);
    s.p95 = percentile_nearest_rank(delays, 95);
    s.p99 = percentile_nearest_rank(delays, 99);
    return s;
}

double loss_ratio(std::uint64_t lost, std::uint64_t created) {
    if (created == 0) return 0.0;
    return static_cast<double>(lost) / static_cast<double>(created);
}

JitterStats jitter_stats(std::span<const double> ipdv) {
    JitterStats j;
    j.pairs = ipdv.size();
    if (ipdv.empty()) return j;
    std::vector<double> abs_values(ipdv.size());
    std::transform(ipdv.begin(), ipdv.end(), abs_values.begin(), [](double v) { return std::fabs(v); });
    const double n = static_cast<double>(ipdv.size());
    j.mean_abs = std::accumulate(abs_values.begin(), abs_values.end(), 0.0) / n;
    const double mean = std::accumulate(ipdv.begin(), ipdv.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : ipdv) ss += (v - mean) * (v - mean);
    j.stddev = std::sqrt(ss / n);
    std::sort(abs_values.begin(), abs_values.end());
    j.p99_abs = percentile_nearest_rank(abs_values, 99);
    return j;
}

FlowClassStats summarize_flows(const std::vector<std::vector<std::optional<double>>>& flows,
                               std::uint64_t lost, std::uint64_t in_flight) {
    FlowClassStats s;
    s.flows = flows.size();
    std::vector<double> delays;
    std::vector<double> ipdv;
    for (const auto& flow : flows) {
        s.created += flow.size();
        for (const auto& d : flow)
            if (d) delays.push_back(*d);
        auto series = ipdv_series(std::span<const std::optional<double>>(flow));
        ipdv.insert(ipdv.end(), series.begin(), series.end());
    }
    s.delivered = delays.size();
    s.lost = lost;
    s.in_flight = in_flight;
    s.delay = delay_stats(std::move(delays));
    s.jitter = jitter_stats(ipdv);
    s.loss_ratio = loss_ratio(lost, s.created);
    return s;
}

namespace {

void cache_rows(std::vector<MetricRow>& rows, const std::string& scope, const CacheCounts& c) {
    rows.push_back({scope, "requests", c.requests});
    rows.push_back({scope, "hits1", c.hits1});
    rows.push_back({scope, "hits2", c.hits2});
    rows.push_back({scope, "misses", c.misses});
    rows.push_back({scope, "drops", c.drops});
    rows.push_back({scope, "hit_ratio", hit_ratio(c)});
    rows.push_back({scope, "byte_hit_ratio", byte_hit_ratio(c)});
}

void flow_rows(std::vector<MetricRow>& rows, const std::string& scope, const FlowClassStats& f) {
    rows.push_back({scope, "flows", f.flows});
    rows.push_back({scope, "packets_created", f.created});
    rows.push_back({scope, "packets_delivered", f.delivered});
    rows.push_back({scope, "packets_lost", f.lost});
    rows.push_back({scope, "packets_in_flight", f.in_flight});
    rows.push_back({scope, "delay_mean_s", f.delay.mean});
    rows.push_back({scope, "delay_p50_s", f.delay.p50});
    rows.push_back({scope, "delay_p95_s", f.delay.p95});
    rows.push_back({scope, "delay_p99_s", f.delay.p99});
    rows.push_back({scope, "ipdv_pairs", f.jitter.pairs});
    rows.push_back({scope, "ipdv_mean_abs_s", f.jitter.mean_abs});
    rows.push_back({scope, "ipdv_stddev_s", f.jitter.stddev});
    rows.push_back({scope, "ipdv_p99_abs_s", f.jitter.p99_abs});
    rows.push_back({scope, "loss_ratio", f.loss_ratio});
}

std::string value_text(const MetricValue& v) {
    if (auto* u = std::get_if<std::uint64_t>(&v)) return std::to_string(*u);
    if (auto* d = std::get_if<double>(&v)) return format_double(*d);
    return std::get<std::string>(v);
}

}  // namespace

std::vector<MetricRow> MetricsReport::rows() const {
    std::vector<MetricRow> r;
    r.push_back({"run", "seed", seed});
    r.push_back({"run", "config_hash", config_hash});
    r.push_back({"run", "event_log_hash", event_log_hash});
    r.push_back({"run", "events", events});
    r.push_back({"run", "sim_end_time_s", sim_end_time});
    r.push_back({"requests", "vod", vod_requests});
    r.push_back({"requests", "live_joins", live_joins});
    r.push_back({"requests", "live_leaves", live_leaves});
    r.push_back({"requests", "rejected", rejected_requests});
    cache_rows(r, "cache.onu", onu_cache);
    cache_rows(r, "cache.olt", olt_cache);
    flow_rows(r, "flows.vod", vod);
    flow_rows(r, "flows.live", live);
    r.push_back({"totals", "packets_created", packets_created});
    r.push_back({"totals", "packets_delivered", packets_delivered});
    r.push_back({"totals", "packets_lost", packets_lost});
    r.push_back({"totals", "packets_in_flight", packets_in_flight});
    r.push_back({"totals", "frame_filter_mismatches", frame_filter_mismatches});
    return r;
}

void export_report(const MetricsReport& report, ExportFormat fmt, std::ostream& out) {
    const auto rows = report.rows();
    if (fmt == ExportFormat::Csv) {
        out << "scope,metric,value\n";
        for (const auto& row : rows) out << row.scope << ',' << row.metric << ',' << value_text(row.value) << '\n';
        return;
    }
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& row : rows) {
        auto& slot = doc[row.scope][row.metric];
        std::visit([&](const auto& v) { slot = v; }, row.value);
    }
    out << doc.dump(2) << '\n';
}

void export_report(const MetricsReport& report, ExportFormat fmt, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    export_report(report, fmt, f);
    f.flush();
    if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace iptvpon
