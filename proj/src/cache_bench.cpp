#include "iptvpon/cache_bench.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "iptvpon/numfmt.hpp"

namespace iptvpon {

CacheConfig bench_cache_config(const BenchOptions& opts, const WorkloadConfig& wl) {
    CacheConfig c;
    const auto primary = static_cast<std::size_t>(std::llround(opts.capacity * opts.primary_fraction));
    c.capacity1 = std::clamp<std::size_t>(primary, 1, std::max<std::size_t>(opts.capacity, 1));
    c.capacity2 = opts.capacity > c.capacity1 ? opts.capacity - c.capacity1 : 0;
    c.threshold = opts.threshold;
    c.beta = opts.beta;
    c.demote_enabled = opts.demote_enabled;
    c.t_low = opts.t_low;
    c.payloads_per_segment = wl.payloads_per_segment;
    c.segments_per_object = wl.segments_per_object;
    c.payload_playback_time = wl.payload_playback_time;
    return c;
}

namespace {

template <class Fn>
void replay(const std::vector<TraceRecord>& trace, SegmentCache& cache, Fn&& on_decision) {
    for (const auto& rec : trace) {
        if (rec.kind != TraceKind::Vod) continue;
        const Request req{rec.object_id, rec.start_payload, rec.n_payloads, rec.time_s};
        cache.maintain(rec.time_s);
        for (const auto& d : cache.handle_request(req, rec.time_s)) on_decision(rec, d);
    }
}

}  // namespace

std::vector<BenchRow> run_cache_bench(const std::vector<TraceRecord>& trace, const WorkloadConfig& wl,
                                      const BenchOptions& opts) {
    const CacheConfig cfg = bench_cache_config(opts, wl);
    std::vector<BenchRow> rows;
    for (CachePolicy policy : opts.policies) {
        auto cache = make_cache(policy, cfg);
        BenchRow row{policy, opts.capacity, {}};
        replay(trace, *cache, [&](const TraceRecord&, const SegmentDecision& d) {
            row.counts.record(d.decision, std::uint64_t{d.payloads} * wl.payload_bytes);
        });
        rows.push_back(row);
    }
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "policy,capacity,requests,hits1,hits2,misses,drops,hit_ratio,byte_hit_ratio\n";
    for (const auto& r : rows) {
        const auto& c = r.counts;
        out << to_string(r.policy) << ',' << r.capacity << ',' << c.requests << ',' << c.hits1 << ','
            << c.hits2 << ',' << c.misses << ',' << c.drops << ',' << format_double(hit_ratio(c)) << ','
            << format_double(byte_hit_ratio(c)) << '\n';
    }
}

void write_decision_log(std::ostream& out, const std::vector<TraceRecord>& trace, SegmentCache& cache) {
    out << "time_s,object_id,segment_index,decision\n";
    replay(trace, cache, [&](const TraceRecord& rec, const SegmentDecision& d) {
        out << format_double(rec.time_s) << ',' << d.segment.object_id << ',' << d.segment.segment_index
            << ',' << to_string(d.decision) << '\n';
    });
}

}  // namespace iptvpon
