#include "iptvpon/netsim.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "iptvpon/numfmt.hpp"

namespace iptvpon {

namespace {

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

void Simulator::schedule(double time, EventKind kind, Handler handler) {
    if (!(time >= now_))
        throw std::invalid_argument("cannot schedule an event in the past (" + format_double(time) +
                                    " < " + format_double(now_) + ")");
    queue_.push(Event{time, next_seq_++, kind, std::move(handler)});
}

std::size_t Simulator::run_until(double t_end) {
    std::size_t n = 0;
    while (!queue_.empty() && queue_.top().time <= t_end) {
        Event ev = queue_.top();
        queue_.pop();
        now_ = ev.time;
        fnv_mix(hash_, std::bit_cast<std::uint64_t>(ev.time));
        fnv_mix(hash_, ev.seq);
        fnv_mix(hash_, static_cast<std::uint64_t>(ev.kind));
        ++processed_;
        ++n;
        ev.handler();
    }
    return n;
}

std::size_t Simulator::run() { return run_until(std::numeric_limits<double>::infinity()); }

// ---------------------------------------------------------------------------

Link::Link(LinkParams params) : params_(params) {
    if (!(params_.rate_bps > 0.0)) throw std::invalid_argument("link rate must be > 0");
    if (!(params_.propagation_delay >= 0.0))
        throw std::invalid_argument("link propagation delay must be >= 0");
    if (params_.queue_capacity < 1) throw std::invalid_argument("link queue capacity must be >= 1");
}

std::size_t Link::occupancy(double now) {
    while (!finish_times_.empty() && finish_times_.front() <= now) finish_times_.pop_front();
    return finish_times_.size();
}

std::optional<double> Link::transmit(std::uint32_t size_bytes, double now) {
    if (size_bytes == 0) throw std::invalid_argument("packet size must be > 0");
    if (now < last_call_) throw std::logic_error("link used out of time order");
    last_call_ = now;
    if (occupancy(now) >= params_.queue_capacity) {
        ++lost_;
        return std::nullopt;
    }
    const double finish = std::max(now, last_finish_) + serialization_time(size_bytes);
    finish_times_.push_back(finish);
    last_finish_ = finish;
    ++transmitted_;
    return finish + params_.propagation_delay;
}

// ---------------------------------------------------------------------------

AccessNetwork::AccessNetwork(SimulationConfig cfg)
    : cfg_(std::move(cfg)),
      feeder_(cfg_.topology.feeder),
      control_(cfg_.topology.n_onus, cfg_.topology.users_per_onu, cfg_.live.access) {
    cfg_.workload.validate();
    for (CacheSetup* setup : {&cfg_.onu_cache, &cfg_.olt_cache}) {
        setup->cache.payloads_per_segment = cfg_.workload.payloads_per_segment;
        setup->cache.segments_per_object = cfg_.workload.segments_per_object;
        setup->cache.payload_playback_time = cfg_.workload.payload_playback_time;
    }
    if (!(cfg_.live.frame_interval > 0.0)) throw std::invalid_argument("live frame interval must be > 0");
    if (cfg_.live.frame_bytes < 1) throw std::invalid_argument("live frame size must be >= 1");

    drops_.reserve(cfg_.topology.n_onus);
    for (std::uint32_t i = 0; i < cfg_.topology.n_onus; ++i) {
        drops_.emplace_back(cfg_.topology.drop);
        onu_caches_.push_back(make_cache(cfg_.onu_cache.policy, cfg_.onu_cache.cache));
    }
    olt_cache_ = make_cache(cfg_.olt_cache.policy, cfg_.olt_cache.cache);
    control_.register_all();
    horizon_ = cfg_.workload.duration;
}

std::uint64_t AccessNetwork::new_flow(FlowClass c) {
    flows_.push_back(c);
    return flows_.size() - 1;
}

std::size_t AccessNetwork::new_packet(std::uint64_t flow, std::uint32_t seq, FlowClass c,
                                      FramePreamble p, std::uint32_t size, double created,
                                      double floor) {
    PacketRecord r;
    r.flow_id = flow;
    r.seq = seq;
    r.flow_class = c;
    r.preamble = p;
    r.size = size;
    r.created_at = created;
    r.floor_delay = floor;
    packets_.push_back(r);
    return packets_.size() - 1;
}

void AccessNetwork::onto_drop(std::size_t pkt, std::uint32_t onu) {
    auto arrival = drops_[onu].transmit(packets_[pkt].size, sim_.now());
    if (!arrival) {
        packets_[pkt].lost = true;
        return;
    }
    sim_.schedule(*arrival, EventKind::PacketArrival,
                  [this, pkt, t = *arrival] { packets_[pkt].delivered_at = t; });
}

void AccessNetwork::send_from_onu(std::size_t pkt, std::uint32_t onu) { onto_drop(pkt, onu); }

void AccessNetwork::send_from_olt(std::vector<std::size_t> pkts, std::vector<std::uint32_t> onus) {
    if (pkts.empty()) return;
    auto arrival = feeder_.transmit(packets_[pkts.front()].size, sim_.now());
    if (!arrival) {
        for (auto p : pkts) packets_[p].lost = true;
        return;
    }
    sim_.schedule(*arrival, EventKind::PacketArrival,
                  [this, pkts = std::move(pkts), onus = std::move(onus)] { feeder_arrival(pkts, onus); });
}

void AccessNetwork::feeder_arrival(const std::vector<std::size_t>& pkts,
                                   const std::vector<std::uint32_t>& onus) {
    // The splitter hands the frame to every ONU; each applies its LLID filter.
    const FramePreamble& preamble = packets_[pkts.front()].preamble;
    std::vector<bool> accept(drops_.size());
    for (std::uint32_t i = 0; i < drops_.size(); ++i) accept[i] = control_.onu(i).frame_accept(preamble);

    std::vector<bool> expected(drops_.size(), false);
    if (packets_[pkts.front()].flow_class == FlowClass::Vod) {
        expected[onus.front()] = true;
    } else if (auto name = control_.olt().channel_of(preamble.llid)) {
        const auto& subs = control_.olt().table().at(*name).onu_llids;
        for (std::uint32_t i = 0; i < drops_.size(); ++i)
            expected[i] = subs.count(*control_.onu(i).llid()) != 0;
    }
    if (accept != expected) ++filter_mismatches_;

    for (std::size_t k = 0; k < pkts.size(); ++k) {
        if (accept[onus[k]])
            onto_drop(pkts[k], onus[k]);
        else
            packets_[pkts[k]].lost = true;
    }
}

VodDelivery AccessNetwork::serve_vod_request(std::uint32_t user, const Request& req) {
    const double now = sim_.now();
    const std::uint32_t onu = control_.onu_of(user);
    const auto& wl = cfg_.workload;
    const auto& topo = cfg_.topology;

    SegmentCache& local = *onu_caches_[onu];
    local.maintain(now);
    auto slices = split_request(req, wl.payloads_per_segment, wl.segments_per_object);
    VodDelivery d;
    d.time = now;
    d.user = user;
    d.onu = onu;
    d.onu_decisions = local.handle_request(req, now);
    d.flow_id = new_flow(FlowClass::Vod);
    ++vod_requests_;

    const double olt_time = now + topo.upstream_latency;
    olt_cache_->maintain(olt_time);

    const double drop_floor =
        drops_[onu].serialization_time(wl.payload_bytes) + topo.drop.propagation_delay;
    const double feeder_floor =
        feeder_.serialization_time(wl.payload_bytes) + topo.feeder.propagation_delay;

    std::uint32_t seq = 0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto& slice = slices[i];
        const CacheDecision at_onu = d.onu_decisions[i].decision;
        onu_counts_.record(at_onu, std::uint64_t{slice.payloads} * wl.payload_bytes);

        const double slice_start = now + seq * wl.payload_playback_time;
        const double slice_end = slice_start + slice.payloads * wl.payload_playback_time;

        Source src = Source::Onu;
        std::optional<CacheDecision> at_olt;
        if (!is_hit(at_onu)) {
            Request sub{req.object_id, slice.first_payload, slice.payloads, olt_time};
            at_olt = olt_cache_->handle_request(sub, olt_time).front().decision;
            olt_counts_.record(*at_olt, std::uint64_t{slice.payloads} * wl.payload_bytes);
            src = is_hit(*at_olt) ? Source::Olt : Source::HeadOffice;
            if (is_cached(*at_olt) && olt_cache_->contains(slice.segment)) {
                olt_cache_->start_play(slice.segment);
                sim_.schedule(slice_end + topo.upstream_latency, EventKind::PlayEnd,
                              [this, seg = slice.segment] { olt_cache_->end_play(seg); });
            }
        }
        // A later slice of the same request may already have evicted this one.
        if (is_cached(at_onu) && local.contains(slice.segment)) {
            local.start_play(slice.segment);
            sim_.schedule(slice_end, EventKind::PlayEnd,
                          [this, onu, seg = slice.segment] { onu_caches_[onu]->end_play(seg); });
        }
        d.olt_decisions.push_back(at_olt);
        d.sources.push_back(src);

        double offset = 0.0;
        double floor = drop_floor;
        if (src != Source::Onu) {
            offset = topo.upstream_latency + (src == Source::HeadOffice ? topo.head_office_latency : 0.0);
            floor += offset + feeder_floor;
        }
        const FramePreamble preamble{false, *control_.onu(onu).llid()};
        for (std::uint32_t k = 0; k < slice.payloads; ++k, ++seq) {
            const double due = now + seq * wl.payload_playback_time;
            const auto pkt = new_packet(d.flow_id, seq, FlowClass::Vod, preamble, wl.payload_bytes, due, floor);
            if (src == Source::Onu) {
                sim_.schedule(due, EventKind::PacketArrival, [this, pkt, onu] { send_from_onu(pkt, onu); });
            } else {
                sim_.schedule(due + offset, EventKind::PacketArrival,
                              [this, pkt, onu] { send_from_olt({pkt}, {onu}); });
            }
        }
    }
    if (cfg_.record_decisions) deliveries_.push_back(d);
    return d;
}

JoinOutcome AccessNetwork::live_join(std::uint32_t user, const std::string& channel) {
    const bool was_active = control_.olt().request_llid(channel).has_value();
    const JoinOutcome outcome = control_.join_channel(user, channel);
    if (outcome == JoinOutcome::Denied) return outcome;
    ++live_joins_;
    live_sessions_.emplace(std::pair{user, channel}, LiveSession{new_flow(FlowClass::Live)});
    if (!was_active) start_ticks(channel, sim_.now() + cfg_.topology.upstream_latency);
    return outcome;
}

void AccessNetwork::live_leave(std::uint32_t user, const std::string& channel) {
    control_.leave_channel(user, channel);
    ++live_leaves_;
    live_sessions_.erase({user, channel});
    if (!control_.olt().request_llid(channel)) ++tick_generation_[channel];
}

void AccessNetwork::start_ticks(const std::string& channel, double at) {
    const std::uint64_t gen = ++tick_generation_[channel];
    if (at >= horizon_) return;
    sim_.schedule(at, EventKind::ChannelTick, [this, channel, gen] { tick(channel, gen); });
}

void AccessNetwork::tick(const std::string& channel, std::uint64_t generation) {
    if (tick_generation_[channel] != generation) return;
    if (!live_channel_stream(channel)) return;
    const double next = sim_.now() + cfg_.live.frame_interval;
    if (next < horizon_)
        sim_.schedule(next, EventKind::ChannelTick, [this, channel, generation] { tick(channel, generation); });
}

bool AccessNetwork::live_channel_stream(const std::string& channel) {
    auto row = control_.olt().table().find(channel);
    if (row == control_.olt().table().end() || row->second.onu_llids.empty()) return false;

    const auto& topo = cfg_.topology;
    const double floor = feeder_.serialization_time(cfg_.live.frame_bytes) + topo.feeder.propagation_delay +
                         drops_.front().serialization_time(cfg_.live.frame_bytes) +
                         topo.drop.propagation_delay;
    const FramePreamble preamble{false, row->second.channel_llid};

    std::vector<std::size_t> pkts;
    std::vector<std::uint32_t> onus;
    for (std::uint32_t o = 0; o < control_.n_onus(); ++o) {
        const Onu& onu = control_.onu(o);
        if (!row->second.onu_llids.count(*onu.llid())) continue;
        for (std::uint32_t u = o * topo.users_per_onu; u < (o + 1) * topo.users_per_onu; ++u) {
            auto session = live_sessions_.find({u, channel});
            if (session == live_sessions_.end()) continue;
            pkts.push_back(new_packet(session->second.flow_id, session->second.next_seq++, FlowClass::Live,
                                      preamble, cfg_.live.frame_bytes, sim_.now(), floor));
            onus.push_back(o);
        }
    }
    send_from_olt(std::move(pkts), std::move(onus));
    return true;
}

void AccessNetwork::load(const std::vector<TraceRecord>& trace) {
    for (const auto& rec : trace) {
        if (rec.time_s > horizon_) horizon_ = rec.time_s;
        if (rec.kind == TraceKind::Vod) {
            Request req{rec.object_id, rec.start_payload, rec.n_payloads, rec.time_s};
            sim_.schedule(rec.time_s, EventKind::RequestArrival, [this, user = rec.user_id, req] {
                try {
                    serve_vod_request(user, req);
                } catch (const InvalidRequest&) {
                    ++rejected_;
                } catch (const ProtocolError&) {
                    ++rejected_;
                }
            });
        } else {
            sim_.schedule(rec.time_s, EventKind::ControlMsg,
                          [this, user = rec.user_id, kind = rec.kind, ch = rec.channel_name] {
                              try {
                                  if (kind == TraceKind::Join) {
                                      if (live_join(user, ch) == JoinOutcome::Denied) ++rejected_;
                                  } else {
                                      live_leave(user, ch);
                                  }
                              } catch (const ProtocolError&) {
                                  ++rejected_;
                              }
                          });
        }
    }
}

MetricsReport AccessNetwork::report() const {
    MetricsReport r;
    r.seed = cfg_.workload.seed;
    r.event_log_hash = hex64(sim_.event_log_hash());
    r.events = sim_.processed();
    r.sim_end_time = sim_.now();
    r.vod_requests = vod_requests_;
    r.live_joins = live_joins_;
    r.live_leaves = live_leaves_;
    r.rejected_requests = rejected_;
    r.onu_cache = onu_counts_;
    r.olt_cache = olt_counts_;
    r.frame_filter_mismatches = filter_mismatches_;

    std::vector<std::vector<std::optional<double>>> per_flow(flows_.size());
    std::uint64_t lost[2] = {0, 0};
    std::uint64_t in_flight[2] = {0, 0};
    for (const auto& p : packets_) {
        auto& flow = per_flow[p.flow_id];
        if (flow.size() <= p.seq) flow.resize(p.seq + 1);
        const int c = p.flow_class == FlowClass::Vod ? 0 : 1;
        if (p.delivered_at) {
            flow[p.seq] = *p.delivered_at - p.created_at;
            ++r.packets_delivered;
        } else if (p.lost) {
            ++lost[c];
            ++r.packets_lost;
        } else {
            ++in_flight[c];
            ++r.packets_in_flight;
        }
    }
    r.packets_created = packets_.size();

    std::vector<std::vector<std::optional<double>>> vod, live;
    for (std::size_t f = 0; f < flows_.size(); ++f)
        (flows_[f] == FlowClass::Vod ? vod : live).push_back(std::move(per_flow[f]));
    r.vod = summarize_flows(vod, lost[0], in_flight[0]);
    r.live = summarize_flows(live, lost[1], in_flight[1]);
    return r;
}

ExperimentResult run_experiment(const SimulationConfig& cfg, const std::vector<TraceRecord>& trace,
                                const std::string& config_hash) {
    AccessNetwork net(cfg);
    net.load(trace);
    net.sim().run();
    ExperimentResult out;
    out.report = net.report();
    out.report.config_hash = config_hash;
    out.packets = net.packets();
    out.deliveries = net.deliveries();
    return out;
}

void write_packet_log(std::ostream& out, const std::vector<PacketRecord>& packets) {
    out << "flow_id,seq,class,created_at,delivered_at\n";
    for (const auto& p : packets) {
        out << p.flow_id << ',' << p.seq << ',' << (p.flow_class == FlowClass::Vod ? "vod" : "live") << ','
            << format_double(p.created_at) << ',';
        if (p.delivered_at)
            out << format_double(*p.delivered_at);
        else if (p.lost)
            out << "LOST";
        out << '\n';
    }
}

}  // namespace iptvpon
