#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "iptvpon/netsim.hpp"

using namespace iptvpon;

namespace {

SimulationConfig tiny_config() {
    SimulationConfig c;
    c.topology.n_onus = 4;
    c.topology.users_per_onu = 2;
    c.workload.n_users = 8;
    c.workload.n_objects = 10;
    c.workload.segments_per_object = 4;
    c.workload.payloads_per_segment = 5;
    c.workload.payload_bytes = 12500;
    c.workload.payload_playback_time = 0.5;
    c.workload.duration = 100.0;
    c.onu_cache.cache.capacity1 = 4;
    c.onu_cache.cache.capacity2 = 4;
    c.olt_cache.cache.capacity1 = 8;
    c.olt_cache.cache.capacity2 = 8;
    c.record_decisions = true;
    return c;
}

TraceRecord vod(double t, std::uint32_t user, std::uint32_t obj, std::uint64_t start, std::uint32_t n) {
    return {t, user, TraceKind::Vod, obj, start, n, ""};
}

TraceRecord live(double t, std::uint32_t user, TraceKind k, const std::string& ch) {
    return {t, user, k, 0, 0, 0, ch};
}

std::string csv(const MetricsReport& r) {
    std::ostringstream out;
    export_report(r, ExportFormat::Csv, out);
    return out.str();
}

}  // namespace

TEST_CASE("simulator orders events by time then insertion") {
    Simulator sim;
    CHECK(sim.run() == 0);
    std::vector<int> order;
    sim.schedule(2.0, EventKind::ControlMsg, [&] { order.push_back(3); });
    sim.schedule(1.0, EventKind::ControlMsg, [&] { order.push_back(1); });
    sim.schedule(1.0, EventKind::ControlMsg, [&] { order.push_back(2); });
    sim.schedule(5.0, EventKind::ControlMsg, [&] { order.push_back(4); });
    CHECK(sim.run_until(3.0) == 3);
    CHECK(order == std::vector<int>{1, 2, 3});
    CHECK(sim.now() == 2.0);
    CHECK_THROWS_AS(sim.schedule(1.5, EventKind::ControlMsg, [] {}), std::invalid_argument);
    CHECK(sim.run() == 1);
    CHECK(sim.now() == 5.0);
}

TEST_CASE("event log hash tracks the event sequence") {
    auto run = [](double t2) {
        Simulator sim;
        sim.schedule(1.0, EventKind::ChannelTick, [] {});
        sim.schedule(t2, EventKind::PlayEnd, [] {});
        sim.run();
        return sim.event_log_hash();
    };
    CHECK(run(2.0) == run(2.0));
    CHECK(run(2.0) != run(3.0));
}

TEST_CASE("link delay on an idle link is serialization plus propagation") {
    Link l({1e9, 5e-6, 10});
    auto a = l.transmit(1250, 0.0);
    REQUIRE(a);
    CHECK(*a == 1250 * 8 / 1e9 + 5e-6);
    CHECK(*a == doctest::Approx(15e-6).epsilon(1e-12));

    Link zero({1e9, 0.0, 10});
    CHECK(*zero.transmit(1250, 0.0) == 1e-5);
    CHECK(*zero.transmit(1250, 0.0) == 2e-5);  // queued behind the first
}

TEST_CASE("full link queue drops the packet") {
    Link l({1e6, 0.0, 1});
    CHECK(l.transmit(100, 0.0));
    CHECK_FALSE(l.transmit(100, 0.0));
    CHECK(l.lost() == 1);
    CHECK(l.transmit(100, 1.0));  // drained
    CHECK_THROWS_AS(l.transmit(0, 1.0), std::invalid_argument);
}

TEST_CASE("links deliver in transmission order") {
    std::mt19937_64 rng(1);
    Link l({1e7, 1e-4, 5});
    double now = 0, last = -1;
    for (int i = 0; i < 20000; ++i) {
        now += static_cast<double>(rng() % 100) * 1e-5;
        auto a = l.transmit(static_cast<std::uint32_t>(100 + rng() % 1400), now);
        if (!a) continue;
        REQUIRE(*a >= last);
        REQUIRE(*a - now >= 1e-4);
        last = *a;
    }
    CHECK(l.lost() > 0);
}

TEST_CASE("VOD paths: head office, then ONU hit") {
    SimulationConfig cfg = tiny_config();
    AccessNetwork net(cfg);
    // Same single segment twice, far enough apart for the queues to drain.
    net.load({vod(0.0, 0, 3, 0, 1), vod(10.0, 0, 3, 0, 1)});
    net.sim().run();
    const auto& d = net.deliveries();
    REQUIRE(d.size() == 2);
    CHECK(d[0].sources[0] == Source::HeadOffice);
    CHECK(d[1].sources[0] == Source::Onu);
    CHECK(is_hit(d[1].onu_decisions[0].decision));

    const auto& t = cfg.topology;
    const double drop = 12500 * 8 / t.drop.rate_bps + t.drop.propagation_delay;
    const double feeder = 12500 * 8 / t.feeder.rate_bps + t.feeder.propagation_delay;
    const auto& p = net.packets();
    REQUIRE(p.size() == 2);
    CHECK(*p[0].delivered_at - p[0].created_at ==
          doctest::Approx(t.upstream_latency + t.head_office_latency + feeder + drop).epsilon(1e-9));
    CHECK(*p[1].delivered_at - p[1].created_at == doctest::Approx(drop).epsilon(1e-9));
}

TEST_CASE("VOD paths: OLT hit skips the head office") {
    SimulationConfig cfg = tiny_config();
    AccessNetwork net(cfg);
    // Users on different ONUs share the OLT cache but not the ONU caches.
    net.load({vod(0.0, 0, 3, 0, 1), vod(10.0, 2, 3, 0, 1)});
    net.sim().run();
    const auto& d = net.deliveries();
    REQUIRE(d.size() == 2);
    CHECK(d[1].sources[0] == Source::Olt);
    const auto& t = cfg.topology;
    const double expect = t.upstream_latency + 12500 * 8 / t.feeder.rate_bps + t.feeder.propagation_delay +
                          12500 * 8 / t.drop.rate_bps + t.drop.propagation_delay;
    const auto& p = net.packets()[1];
    CHECK(*p.delivered_at - p.created_at == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ONU decisions match a standalone cache fed the same requests") {
    SimulationConfig cfg = tiny_config();
    WorkloadConfig wl = cfg.workload;
    wl.request_rate = 0.5;
    wl.zap_rate = 0.0;
    wl.seed = 4;
    auto trace = generate_trace(wl);
    cfg.workload = wl;
    auto result = run_experiment(cfg, trace);

    CacheConfig cc = cfg.onu_cache.cache;
    cc.payloads_per_segment = wl.payloads_per_segment;
    cc.segments_per_object = wl.segments_per_object;
    cc.payload_playback_time = wl.payload_playback_time;
    std::map<std::uint32_t, BiLevelCache> standalone;
    std::map<std::uint32_t, std::vector<std::pair<double, SegmentId>>> pending;
    std::size_t i = 0;
    for (const auto& r : trace) {
        const std::uint32_t onu = r.user_id / cfg.topology.users_per_onu;
        auto& cache = standalone.try_emplace(onu, cc).first->second;
        // Plays ending exactly now were scheduled after the request, so they are still running.
        auto& pend = pending[onu];
        std::stable_sort(pend.begin(), pend.end(), [](auto& a, auto& b) { return a.first < b.first; });
        while (!pend.empty() && pend.front().first < r.time_s) {
            cache.end_play(pend.front().second);
            pend.erase(pend.begin());
        }
        const auto got = cache.handle_request({r.object_id, r.start_payload, r.n_payloads, r.time_s}, r.time_s);
        REQUIRE(i < result.deliveries.size());
        CHECK(got == result.deliveries[i].onu_decisions);
        std::uint32_t played = 0;
        for (const auto& d : got) {
            const double start = r.time_s + played * wl.payload_playback_time;
            played += d.payloads;
            if (is_cached(d.decision) && cache.contains(d.segment)) {
                cache.start_play(d.segment);
                pend.push_back({start + d.payloads * wl.payload_playback_time, d.segment});
            }
        }
        ++i;
    }
    CHECK(i == result.deliveries.size());
}

TEST_CASE("live frames reach exactly the subscribed ONUs") {
    SimulationConfig cfg = tiny_config();
    AccessNetwork net(cfg);
    CHECK_FALSE(net.live_channel_stream("ch0"));  // nobody watching
    CHECK(net.packets().empty());

    net.live_join(2, "ch0");  // ONU 1
    net.live_join(3, "ch0");  // ONU 1 again
    REQUIRE(net.live_channel_stream("ch0"));
    net.sim().run_until(0.05);
    std::size_t delivered = 0;
    for (const auto& p : net.packets()) {
        CHECK(p.flow_class == FlowClass::Live);
        if (p.delivered_at) ++delivered;
    }
    CHECK(delivered >= 2);  // one frame copied onto two user flows
    const FramePreamble frame = net.packets().front().preamble;
    std::size_t accepting = 0;
    for (std::uint32_t i = 0; i < 4; ++i) accepting += net.control().onu(i).frame_accept(frame);
    CHECK(accepting == 1);
    CHECK(net.report().frame_filter_mismatches == 0);
}

TEST_CASE("channel stops when the last viewer leaves") {
    SimulationConfig cfg = tiny_config();
    auto r = run_experiment(cfg, {live(0.0, 0, TraceKind::Join, "ch1"), live(1.0, 0, TraceKind::Leave, "ch1")});
    // Ticks every 0.1 s from the join until the leave.
    CHECK(r.report.live.created >= 9);
    CHECK(r.report.live.created <= 11);
    CHECK(r.report.live_joins == 1);
    CHECK(r.report.live_leaves == 1);
}

TEST_CASE("empty trace gives an empty report") {
    auto r = run_experiment(tiny_config(), {});
    CHECK(r.report.vod_requests == 0);
    CHECK(r.report.packets_created == 0);
    CHECK(r.report.events == 0);
}

TEST_CASE("simulation invariants on a generated workload") {
    SimulationConfig cfg = tiny_config();
    cfg.workload.request_rate = 1.0;
    cfg.workload.zap_rate = 0.05;
    cfg.workload.arrival_mix = 0.5;
    cfg.topology.drop.rate_bps = 1e6;  // live frames outpace the drop link
    cfg.topology.drop.queue_capacity = 3;
    auto trace = generate_trace(cfg.workload);
    auto a = run_experiment(cfg, trace, "h");
    auto b = run_experiment(cfg, trace, "h");
    CHECK(csv(a.report) == csv(b.report));
    CHECK(a.report.event_log_hash == b.report.event_log_hash);

    const auto& r = a.report;
    CHECK(r.packets_created == r.packets_delivered + r.packets_lost + r.packets_in_flight);
    CHECK(r.vod.created == r.vod.delivered + r.vod.lost + r.vod.in_flight);
    CHECK(r.live.created == r.live.delivered + r.live.lost + r.live.in_flight);
    CHECK(r.packets_lost > 0);
    CHECK(r.frame_filter_mismatches == 0);
    CHECK(r.onu_cache.hits1 + r.onu_cache.hits2 + r.onu_cache.misses + r.onu_cache.drops == r.onu_cache.requests);

    std::map<std::uint64_t, std::uint32_t> next_seq;
    for (const auto& p : a.packets) {
        if (p.delivered_at) {
            // Clock values are absolute seconds; allow for rounding in the subtraction.
            REQUIRE(*p.delivered_at - p.created_at >= p.floor_delay - 1e-9);
            REQUIRE_FALSE(p.lost);
        }
        CHECK(p.seq == next_seq[p.flow_id]++);
    }
}

TEST_CASE("disabled caches serve everything from the head office") {
    SimulationConfig cfg = tiny_config();
    cfg.onu_cache.policy = CachePolicy::None;
    cfg.olt_cache.policy = CachePolicy::None;
    auto r = run_experiment(cfg, {vod(0.0, 0, 1, 0, 5), vod(5.0, 0, 1, 0, 5)});
    CHECK(hit_ratio(r.report.onu_cache) == 0.0);
    CHECK(hit_ratio(r.report.olt_cache) == 0.0);
    for (const auto& d : r.deliveries)
        for (auto s : d.sources) CHECK(s == Source::HeadOffice);
}

TEST_CASE("bad requests are counted, not fatal") {
    auto r = run_experiment(tiny_config(), {vod(0.0, 0, 1, 19, 5), live(1.0, 0, TraceKind::Leave, "ch0")});
    CHECK(r.report.rejected_requests == 2);
}

TEST_CASE("packet log format") {
    std::vector<PacketRecord> p(2);
    p[0].flow_id = 1;
    p[0].created_at = 0.5;
    p[0].delivered_at = 0.75;
    p[1].seq = 1;
    p[1].lost = true;
    p[1].flow_class = FlowClass::Live;
    std::ostringstream out;
    write_packet_log(out, p);
    CHECK(out.str() == "flow_id,seq,class,created_at,delivered_at\n1,0,vod,0.5,0.75\n0,1,live,0,LOST\n");
}
