#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "iptvpon/cllid_protocol.hpp"
#include "iptvpon/metrics.hpp"
#include "iptvpon/segment_cache.hpp"
#include "iptvpon/workload.hpp"

namespace iptvpon {

enum class EventKind { PacketArrival, RequestArrival, PlayEnd, ControlMsg, ChannelTick };

/// Single-threaded event loop. Events run in (time, insertion sequence) order.
class Simulator {
public:
    using Handler = std::function<void()>;

    /// Throws std::invalid_argument when `time` lies before the current clock.
    void schedule(double time, EventKind kind, Handler handler);

    /// Runs events with time <= t_end; returns how many ran.
    std::size_t run_until(double t_end);
    /// Runs until the queue is empty.
    std::size_t run();

    double now() const { return now_; }
    std::size_t pending() const { return queue_.size(); }
    std::uint64_t processed() const { return processed_; }
    /// FNV-1a over (time, sequence, kind) of every processed event.
    std::uint64_t event_log_hash() const { return hash_; }

private:
    struct Event {
        double time;
        std::uint64_t seq;
        EventKind kind;
        Handler handler;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    double now_ = 0.0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

struct LinkParams {
    double rate_bps = 1e9;
    double propagation_delay = 0.0;  // seconds
    std::size_t queue_capacity = 1000;  // packets, including the one on the wire
};

/// FIFO tail-drop link. Calls must come in non-decreasing time order.
class Link {
public:
    explicit Link(LinkParams params);

    /// Arrival time at the far end, or nullopt when the queue is full.
    std::optional<double> transmit(std::uint32_t size_bytes, double now);

    double serialization_time(std::uint32_t size_bytes) const {
        return size_bytes * 8.0 / params_.rate_bps;
    }
    const LinkParams& params() const { return params_; }
    std::uint64_t transmitted() const { return transmitted_; }
    std::uint64_t lost() const { return lost_; }
    std::size_t occupancy(double now);

private:
    LinkParams params_;
    std::deque<double> finish_times_;
    double last_finish_ = 0.0;
    double last_call_ = 0.0;
    std::uint64_t transmitted_ = 0;
    std::uint64_t lost_ = 0;
};

struct TopologyConfig {
    std::uint32_t n_onus = 8;
    std::uint32_t users_per_onu = 4;
    LinkParams feeder{1e9, 1e-4, 1000};  // OLT -> splitter -> every ONU
    LinkParams drop{1e8, 1e-6, 200};     // ONU -> its users
    double upstream_latency = 1e-4;      // contention-free ONU -> OLT request path
    double head_office_latency = 0.02;
};

struct CacheSetup {
    CachePolicy policy = CachePolicy::BiLevel;
    CacheConfig cache;  // geometry fields are overwritten from the workload
};

struct LiveConfig {
    double frame_interval = 0.1;  // seconds between channel frames
    std::uint32_t frame_bytes = 50000;
    AccessControl access = AccessControl::allow_all();
};

struct SimulationConfig {
    TopologyConfig topology;
    CacheSetup onu_cache;
    CacheSetup olt_cache{CachePolicy::BiLevel, CacheConfig{}};
    WorkloadConfig workload;
    LiveConfig live;
    bool record_decisions = false;
};

enum class FlowClass { Vod, Live };
enum class Source { Onu, Olt, HeadOffice };

struct PacketRecord {
    std::uint64_t flow_id = 0;
    std::uint32_t seq = 0;
    FlowClass flow_class = FlowClass::Vod;
    FramePreamble preamble;
    std::uint32_t size = 0;
    double created_at = 0.0;
    std::optional<double> delivered_at;
    bool lost = false;
    double floor_delay = 0.0;  // serialization + propagation (+ fixed latencies) on its path
};

/// Outcome of one VOD request at both cache levels.
struct VodDelivery {
    double time = 0.0;
    std::uint32_t user = 0;
    std::uint32_t onu = 0;
    std::uint64_t flow_id = 0;
    std::vector<SegmentDecision> onu_decisions;
    std::vector<std::optional<CacheDecision>> olt_decisions;  // empty where the ONU hit
    std::vector<Source> sources;
};

/// OLT, splitter, ONUs and users wired to the caches and the CLLID control plane.
class AccessNetwork {
public:
    explicit AccessNetwork(SimulationConfig cfg);

    Simulator& sim() { return sim_; }
    const SimulationConfig& config() const { return cfg_; }

    /// Schedules every record at its timestamp.
    void load(const std::vector<TraceRecord>& trace);

    /// Handles a VOD request arriving at the user's ONU now; schedules its packets.
    VodDelivery serve_vod_request(std::uint32_t user, const Request& req);
    JoinOutcome live_join(std::uint32_t user, const std::string& channel);
    void live_leave(std::uint32_t user, const std::string& channel);
    /// Emits one frame of `channel` now if it has subscribers.
    bool live_channel_stream(const std::string& channel);

    /// Live ticks are not rescheduled at or beyond this time.
    void set_horizon(double t) { horizon_ = t; }

    MetricsReport report() const;

    const std::vector<PacketRecord>& packets() const { return packets_; }
    const std::vector<VodDelivery>& deliveries() const { return deliveries_; }
    const IptvNetwork& control() const { return control_; }
    SegmentCache& onu_cache(std::uint32_t i) { return *onu_caches_.at(i); }
    SegmentCache& olt_cache() { return *olt_cache_; }
    const Link& feeder() const { return feeder_; }
    const Link& drop(std::uint32_t i) const { return drops_.at(i); }

private:
    struct LiveSession {
        std::uint64_t flow_id;
        std::uint32_t next_seq = 0;
    };

    std::uint64_t new_flow(FlowClass c);
    std::size_t new_packet(std::uint64_t flow, std::uint32_t seq, FlowClass c, FramePreamble p,
                           std::uint32_t size, double created, double floor);
    void send_from_onu(std::size_t pkt, std::uint32_t onu);
    void send_from_olt(std::vector<std::size_t> pkts, std::vector<std::uint32_t> onus);
    void feeder_arrival(const std::vector<std::size_t>& pkts, const std::vector<std::uint32_t>& onus);
    void onto_drop(std::size_t pkt, std::uint32_t onu);
    void start_ticks(const std::string& channel, double at);
    void tick(const std::string& channel, std::uint64_t generation);

    SimulationConfig cfg_;
    Simulator sim_;
    Link feeder_;
    std::vector<Link> drops_;
    std::vector<std::unique_ptr<SegmentCache>> onu_caches_;
    std::unique_ptr<SegmentCache> olt_cache_;
    IptvNetwork control_;

    std::vector<PacketRecord> packets_;
    std::vector<FlowClass> flows_;
    std::vector<VodDelivery> deliveries_;
    std::map<std::pair<std::uint32_t, std::string>, LiveSession> live_sessions_;
    std::map<std::string, std::uint64_t> tick_generation_;

    CacheCounts onu_counts_;
    CacheCounts olt_counts_;
    std::uint64_t vod_requests_ = 0;
    std::uint64_t live_joins_ = 0;
    std::uint64_t live_leaves_ = 0;
    std::uint64_t rejected_ = 0;
    std::uint64_t filter_mismatches_ = 0;
    double horizon_ = 0.0;
};

struct ExperimentResult {
    MetricsReport report;
    std::vector<PacketRecord> packets;
    std::vector<VodDelivery> deliveries;
};

/// Replays `trace` through a fresh network until every event has drained.
/// Identical inputs give identical reports.
ExperimentResult run_experiment(const SimulationConfig& cfg, const std::vector<TraceRecord>& trace,
                                const std::string& config_hash = {});

void write_packet_log(std::ostream& out, const std::vector<PacketRecord>& packets);

}  // namespace iptvpon
