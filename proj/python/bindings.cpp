#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "iptvpon/cache_bench.hpp"
#include "iptvpon/cllid_protocol.hpp"
#include "iptvpon/metrics.hpp"
#include "iptvpon/netsim.hpp"
#include "iptvpon/run_config.hpp"
#include "iptvpon/segment_cache.hpp"
#include "iptvpon/workload.hpp"

namespace py = pybind11;
using namespace iptvpon;

namespace {

py::dict report_dict(const MetricsReport& r) {
    py::dict out;
    for (const auto& row : r.rows()) {
        py::str scope(row.scope);
        if (!out.contains(scope)) out[scope] = py::dict();
        py::dict section = out[scope];
        std::visit([&](const auto& v) { section[py::str(row.metric)] = v; }, row.value);
    }
    return out;
}

RunConfig config_from_text(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in);
}

std::vector<TraceRecord> trace_for(const RunConfig& rc) {
    if (rc.trace_path.empty()) return generate_trace(rc.sim.workload);
    auto t = load_trace(rc.trace_path);
    validate_trace(t, rc.sim.workload);
    return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "EPON IPTV caching and channel-multicast simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<TraceError>(m, "TraceError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

    py::enum_<CachePolicy>(m, "CachePolicy")
        .value("BILEVEL", CachePolicy::BiLevel)
        .value("LRU", CachePolicy::Lru)
        .value("LFU", CachePolicy::Lfu)
        .value("NONE", CachePolicy::None);

    py::enum_<CacheDecision>(m, "CacheDecision")
        .value("HIT2", CacheDecision::Hit2)
        .value("HIT1", CacheDecision::Hit1)
        .value("HIT1_PROMOTED", CacheDecision::Hit1Promoted)
        .value("MISS_INSERTED", CacheDecision::MissInserted)
        .value("MISS_DROPPED", CacheDecision::MissDropped);

    py::class_<CacheConfig>(m, "CacheConfig")
        .def(py::init<>())
        .def_readwrite("capacity1", &CacheConfig::capacity1)
        .def_readwrite("capacity2", &CacheConfig::capacity2)
        .def_readwrite("threshold", &CacheConfig::threshold)
        .def_readwrite("beta", &CacheConfig::beta)
        .def_readwrite("payloads_per_segment", &CacheConfig::payloads_per_segment)
        .def_readwrite("segments_per_object", &CacheConfig::segments_per_object)
        .def_readwrite("payload_playback_time", &CacheConfig::payload_playback_time)
        .def_readwrite("demote_enabled", &CacheConfig::demote_enabled)
        .def_readwrite("t_low", &CacheConfig::t_low);

    py::class_<SegmentStats>(m, "SegmentStats")
        .def(py::init<>())
        .def_readwrite("n_requests", &SegmentStats::n_requests)
        .def_readwrite("n_payloads_played", &SegmentStats::n_payloads_played)
        .def_readwrite("t_last_accessed", &SegmentStats::t_last_accessed)
        .def_readwrite("mean_interarrival", &SegmentStats::mean_interarrival)
        .def_readonly("playing_count", &SegmentStats::playing_count);

    m.def("recency_factor", &recency_factor, py::arg("now"), py::arg("t_last"), py::arg("beta"));
    m.def("utility1", &utility1, py::arg("stats"), py::arg("now"), py::arg("config"));
    m.def("utility2", &utility2, py::arg("stats"), py::arg("now"), py::arg("config"));
    m.def("next_request_probability", &next_request_probability, py::arg("mean_interarrival"),
          py::arg("t_since_last"));

    py::class_<SegmentCache>(m, "SegmentCache")
        .def(
            "request",
            [](SegmentCache& c, std::uint32_t object_id, std::uint64_t start, std::uint32_t n, double now) {
                std::vector<std::tuple<std::uint32_t, std::uint32_t, CacheDecision>> out;
                for (const auto& d : c.handle_request({object_id, start, n, now}, now))
                    out.emplace_back(d.segment.object_id, d.segment.segment_index, d.decision);
                return out;
            },
            py::arg("object_id"), py::arg("start_payload"), py::arg("n_payloads"), py::arg("now"),
            "Returns (object_id, segment_index, decision) for every segment the request touches.")
        .def("start_play", [](SegmentCache& c, std::uint32_t o, std::uint32_t s) { c.start_play({o, s}); })
        .def("end_play", [](SegmentCache& c, std::uint32_t o, std::uint32_t s) { c.end_play({o, s}); })
        .def("contains", [](const SegmentCache& c, std::uint32_t o, std::uint32_t s) { return c.contains({o, s}); })
        .def("__len__", &SegmentCache::size)
        .def_property_readonly("name", [](const SegmentCache& c) { return std::string(c.name()); });

    m.def(
        "make_cache",
        [](const std::string& policy, const CacheConfig& cfg) { return make_cache(parse_policy(policy), cfg); },
        py::arg("policy"), py::arg("config"));

    py::class_<TraceRecord>(m, "TraceRecord")
        .def_readonly("time_s", &TraceRecord::time_s)
        .def_readonly("user_id", &TraceRecord::user_id)
        .def_property_readonly("kind",
                               [](const TraceRecord& r) {
                                   switch (r.kind) {
                                   case TraceKind::Vod: return "vod";
                                   case TraceKind::Join: return "join";
                                   case TraceKind::Leave: return "leave";
                                   }
                                   return "";
                               })
        .def_readonly("object_id", &TraceRecord::object_id)
        .def_readonly("start_payload", &TraceRecord::start_payload)
        .def_readonly("n_payloads", &TraceRecord::n_payloads)
        .def_readonly("channel_name", &TraceRecord::channel_name);

    m.def(
        "generate_trace",
        [](const std::string& config_text) { return generate_trace(config_from_text(config_text).sim.workload); },
        py::arg("config_text") = "", "Synthetic trace for the workload section of a config.");

    m.def(
        "simulate",
        [](const std::string& config_text) {
            const RunConfig rc = config_from_text(config_text);
            const auto trace = trace_for(rc);
            ExperimentResult result;
            {
                py::gil_scoped_release release;
                result = run_experiment(rc.sim, trace, config_hash(rc));
            }
            return report_dict(result.report);
        },
        py::arg("config_text") = "", "Runs the network simulation and returns metrics by scope.");

    m.def(
        "cache_bench",
        [](const std::string& config_text, std::size_t capacity, std::vector<std::string> policies) {
            const RunConfig rc = config_from_text(config_text);
            BenchOptions opts;
            opts.capacity = capacity;
            opts.policies.clear();
            for (const auto& p : policies) opts.policies.push_back(parse_policy(p));
            const auto trace = trace_for(rc);
            py::dict out;
            for (const auto& row : run_cache_bench(trace, rc.sim.workload, opts))
                out[py::str(std::string(to_string(row.policy)))] = hit_ratio(row.counts);
            return out;
        },
        py::arg("config_text") = "", py::arg("capacity") = 400,
        py::arg("policies") = std::vector<std::string>{"bilevel", "lru", "lfu"},
        "Hit ratio per policy on the configured workload.");

    m.def(
        "protocol_check",
        [](std::size_t n_ops, std::uint64_t seed) {
            const ProtocolDims dims;
            const auto r = run_protocol_check(random_protocol_ops(seed, n_ops, dims), dims);
            py::dict out;
            out["ok"] = r.ok;
            out["steps"] = r.steps;
            out["rejected"] = r.rejected;
            out["failing_step"] = r.failing_step;
            out["message"] = r.message;
            return out;
        },
        py::arg("n_ops") = 10000, py::arg("seed") = 1);

    m.def(
        "ipdv",
        [](const std::vector<std::optional<double>>& delays) { return ipdv_series(delays); },
        py::arg("delays"), "Consecutive delay differences; None marks a lost packet.");
    m.def(
        "mean_abs_ipdv", [](const std::vector<double>& ipdv) { return jitter_stats(ipdv).mean_abs; },
        py::arg("ipdv"));

    m.def("config_reference", &config_reference);
    m.def(
        "config_hash", [](const std::string& text) { return config_hash(config_from_text(text)); },
        py::arg("config_text") = "");
}
