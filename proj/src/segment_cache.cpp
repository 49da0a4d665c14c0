#include "iptvpon/segment_cache.hpp"

#include <algorithm>
#include <cmath>

namespace iptvpon {

std::string to_string(SegmentId id) {
    return std::to_string(id.object_id) + ":" + std::to_string(id.segment_index);
}

std::string_view to_string(CacheDecision d) {
    switch (d) {
    case CacheDecision::Hit2: return "hit2";
    case CacheDecision::Hit1: return "hit1";
    case CacheDecision::Hit1Promoted: return "hit1_promoted";
    case CacheDecision::MissInserted: return "miss_inserted";
    case CacheDecision::MissDropped: return "miss_dropped";
    }
    return "?";
}

std::string_view to_string(CachePolicy p) {
    switch (p) {
    case CachePolicy::BiLevel: return "bilevel";
    case CachePolicy::Lru: return "lru";
    case CachePolicy::Lfu: return "lfu";
    case CachePolicy::None: return "none";
    }
    return "?";
}

CachePolicy parse_policy(std::string_view name) {
    if (name == "bilevel") return CachePolicy::BiLevel;
    if (name == "lru") return CachePolicy::Lru;
    if (name == "lfu") return CachePolicy::Lfu;
    if (name == "none") return CachePolicy::None;
    throw std::invalid_argument("unknown cache policy '" + std::string(name) + "'");
}

void CacheConfig::validate() const {
    auto fail = [](const char* what) { throw std::invalid_argument(what); };
    if (capacity1 < 1) fail("capacity1 must be >= 1");
    if (!(threshold > 0.0)) fail("threshold must be > 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (payloads_per_segment < 1) fail("payloads_per_segment must be >= 1");
    if (segments_per_object < 1) fail("segments_per_object must be >= 1");
    if (!(payload_playback_time >= 0.0)) fail("payload_playback_time must be >= 0");
    if (demote_enabled && !(t_low > 0.0 && t_low < threshold))
        fail("t_low must satisfy 0 < t_low < threshold");
}

std::vector<SegmentSlice> split_request(const Request& req, std::uint32_t payloads_per_segment,
                                        std::uint32_t segments_per_object) {
    const std::uint64_t object_payloads =
        std::uint64_t{payloads_per_segment} * segments_per_object;
    if (req.n_payloads < 1) throw InvalidRequest("request must play at least one payload");
    if (req.start_payload >= object_payloads ||
        req.n_payloads > object_payloads - req.start_payload) {
        throw InvalidRequest("payload range [" + std::to_string(req.start_payload) + ", " +
                             std::to_string(req.start_payload + req.n_payloads) +
                             ") exceeds object of " + std::to_string(object_payloads) +
                             " payloads");
    }

    std::vector<SegmentSlice> slices;
    std::uint64_t pos = req.start_payload;
    const std::uint64_t end = req.start_payload + req.n_payloads;
    while (pos < end) {
        const auto seg = static_cast<std::uint32_t>(pos / payloads_per_segment);
        const std::uint64_t seg_end = std::uint64_t{seg + 1} * payloads_per_segment;
        const std::uint64_t take = std::min(seg_end, end) - pos;
        slices.push_back({{req.object_id, seg}, pos, static_cast<std::uint32_t>(take)});
        pos += take;
    }
    return slices;
}

double recency_factor(double now, double t_last, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("recency_factor: beta must be > 0");
    if (now < t_last) throw std::invalid_argument("recency_factor: now precedes last access");
    return 1.0 / (1.0 + (now - t_last) / beta);
}

double utility1(const SegmentStats& stats, double now, const CacheConfig& cfg) {
    if (stats.n_requests < 1) throw std::invalid_argument("utility1: segment never requested");
    const double played = static_cast<double>(stats.n_payloads_played);
    const double denom = static_cast<double>(cfg.payloads_per_segment) +
                         static_cast<double>(stats.n_requests);
    return played * recency_factor(now, stats.t_last_accessed, cfg.beta) / denom;
}

double next_request_probability(double mean_interarrival, double t_since_last) {
    if (!(mean_interarrival > 0.0))
        throw std::invalid_argument("next_request_probability: mean inter-arrival must be > 0");
    if (t_since_last < 0.0)
        throw std::invalid_argument("next_request_probability: negative elapsed time");
    return mean_interarrival / std::max(mean_interarrival, t_since_last);
}

double utility2(const SegmentStats& stats, double now, const CacheConfig& cfg) {
    if (stats.n_requests < 1) throw std::invalid_argument("utility2: segment never requested");
    if (now < stats.t_last_accessed)
        throw std::invalid_argument("utility2: now precedes last access");
    const double p_next =
        stats.mean_interarrival
            ? next_request_probability(*stats.mean_interarrival, now - stats.t_last_accessed)
            : 1.0;
    const double played = static_cast<double>(stats.n_payloads_played);
    const double denom = static_cast<double>(cfg.payloads_per_segment) *
                         static_cast<double>(stats.n_requests);
    return played * p_next / denom;
}

SegmentStats update_on_access(SegmentStats stats, std::uint32_t payloads_played, double now) {
    if (stats.n_requests > 0) {
        if (now < stats.t_last_accessed)
            throw std::invalid_argument("update_on_access: time went backwards");
        // The gaps telescope: their sum is the span since the first access.
        const double mean = (now - stats.t_inserted) / static_cast<double>(stats.n_requests);
        if (mean > 0.0)
            stats.mean_interarrival = mean;
        else
            stats.mean_interarrival.reset();
    } else {
        stats.t_inserted = now;
    }
    stats.n_requests += 1;
    stats.n_payloads_played += payloads_played;
    stats.t_last_accessed = now;
    return stats;
}

// ---------------------------------------------------------------------------
// BiLevelCache

BiLevelCache::BiLevelCache(CacheConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void BiLevelCache::check_time(double now) {
    if (now < last_now_) throw std::invalid_argument("cache time must be non-decreasing");
    last_now_ = now;
}

void BiLevelCache::record(CacheEvent::Kind kind, double now, SegmentId seg, Partition p,
                          double utility) {
    if (cfg_.record_events) events_.push_back({kind, now, seg, p, utility});
}

SegmentStats* BiLevelCache::find_mutable(SegmentId seg) {
    if (auto it = secondary_.find(seg); it != secondary_.end()) return &it->second;
    if (auto it = primary_.find(seg); it != primary_.end()) return &it->second;
    return nullptr;
}

const SegmentStats* BiLevelCache::find(SegmentId seg) const {
    return const_cast<BiLevelCache*>(this)->find_mutable(seg);
}

std::optional<Partition> BiLevelCache::partition_of(SegmentId seg) const {
    if (secondary_.count(seg)) return Partition::Secondary;
    if (primary_.count(seg)) return Partition::Primary;
    return std::nullopt;
}

bool BiLevelCache::contains(SegmentId seg) const {
    return secondary_.count(seg) != 0 || primary_.count(seg) != 0;
}

std::optional<SegmentId> BiLevelCache::evict_candidate(Partition p, double now) const {
    const Store& store = p == Partition::Primary ? primary_ : secondary_;
    const SegmentStats* best = nullptr;
    SegmentId best_id{};
    double best_utility = 0.0;
    // Map order is ascending id, so strict comparisons keep the smallest id on ties.
    for (const auto& [id, st] : store) {
        if (st.playing_count > 0) continue;
        if (p == Partition::Primary && now < st.min_residency_until) continue;
        const double u = p == Partition::Primary ? utility1(st, now, cfg_) : utility2(st, now, cfg_);
        if (!best || u < best_utility ||
            (u == best_utility && st.t_last_accessed < best->t_last_accessed)) {
            best = &st;
            best_id = id;
            best_utility = u;
        }
    }
    if (!best) return std::nullopt;
    return best_id;
}

std::vector<SegmentDecision> BiLevelCache::handle_request(const Request& req, double now) {
    auto slices = split_request(req, cfg_.payloads_per_segment, cfg_.segments_per_object);
    check_time(now);

    const double residency =
        std::max(cfg_.segment_playback_time(), req.n_payloads * cfg_.payload_playback_time);

    std::vector<SegmentDecision> out;
    out.reserve(slices.size());
    for (const auto& slice : slices) {
        const SegmentId seg = slice.segment;

        if (auto it = secondary_.find(seg); it != secondary_.end()) {
            it->second = update_on_access(it->second, slice.payloads, now);
            out.push_back({seg, CacheDecision::Hit2, slice.payloads});
            continue;
        }

        if (auto it = primary_.find(seg); it != primary_.end()) {
            it->second = update_on_access(it->second, slice.payloads, now);
            const double u = utility1(it->second, now, cfg_);
            if (!(u > cfg_.threshold)) {
                out.push_back({seg, CacheDecision::Hit1, slice.payloads});
                continue;
            }
            if (secondary_.size() >= cfg_.capacity2) {
                auto victim = evict_candidate(Partition::Secondary, now);
                if (!victim) {
                    record(CacheEvent::Kind::PromotionBlocked, now, seg, Partition::Primary, u);
                    out.push_back({seg, CacheDecision::Hit1, slice.payloads});
                    continue;
                }
                record(CacheEvent::Kind::Evict, now, *victim, Partition::Secondary,
                       utility2(secondary_.at(*victim), now, cfg_));
                secondary_.erase(*victim);
            }
            secondary_.emplace(seg, it->second);
            primary_.erase(it);
            record(CacheEvent::Kind::Promote, now, seg, Partition::Secondary, u);
            out.push_back({seg, CacheDecision::Hit1Promoted, slice.payloads});
            continue;
        }

        if (primary_.size() >= cfg_.capacity1) {
            auto victim = evict_candidate(Partition::Primary, now);
            if (!victim) {
                record(CacheEvent::Kind::Drop, now, seg, Partition::Primary, 0.0);
                out.push_back({seg, CacheDecision::MissDropped, slice.payloads});
                continue;
            }
            record(CacheEvent::Kind::Evict, now, *victim, Partition::Primary,
                   utility1(primary_.at(*victim), now, cfg_));
            primary_.erase(*victim);
        }
        SegmentStats fresh = update_on_access(SegmentStats{}, slice.payloads, now);
        fresh.min_residency_until = now + residency;
        auto [pos, inserted] = primary_.emplace(seg, fresh);
        record(CacheEvent::Kind::Insert, now, seg, Partition::Primary,
               utility1(pos->second, now, cfg_));
        out.push_back({seg, CacheDecision::MissInserted, slice.payloads});
    }
    return out;
}

void BiLevelCache::start_play(SegmentId seg) {
    SegmentStats* st = find_mutable(seg);
    if (!st) throw std::logic_error("start_play: segment " + to_string(seg) + " not cached");
    st->playing_count += 1;
}

void BiLevelCache::end_play(SegmentId seg) {
    SegmentStats* st = find_mutable(seg);
    if (!st || st->playing_count == 0)
        throw std::logic_error("end_play: segment " + to_string(seg) + " is not playing");
    st->playing_count -= 1;
}

void BiLevelCache::maintain(double now) {
    if (cfg_.demote_enabled) demote_if_stale(now);
}

std::vector<SegmentId> BiLevelCache::demote_if_stale(double now) {
    std::vector<SegmentId> demoted;
    if (!cfg_.demote_enabled) return demoted;
    check_time(now);

    std::vector<SegmentId> stale;
    for (const auto& [id, st] : secondary_) {
        if (st.playing_count == 0 && utility2(st, now, cfg_) < cfg_.t_low) stale.push_back(id);
    }
    for (SegmentId id : stale) {
        if (primary_.size() >= cfg_.capacity1) {
            auto victim = evict_candidate(Partition::Primary, now);
            if (!victim) break;
            record(CacheEvent::Kind::Evict, now, *victim, Partition::Primary,
                   utility1(primary_.at(*victim), now, cfg_));
            primary_.erase(*victim);
        }
        auto node = secondary_.extract(id);
        record(CacheEvent::Kind::Demote, now, id, Partition::Primary,
               utility2(node.mapped(), now, cfg_));
        primary_.insert(std::move(node));
        demoted.push_back(id);
    }
    return demoted;
}

// ---------------------------------------------------------------------------
// Baselines

LruCache::LruCache(std::size_t capacity, std::uint32_t payloads_per_segment,
                   std::uint32_t segments_per_object)
    : capacity_(capacity),
      payloads_per_segment_(payloads_per_segment),
      segments_per_object_(segments_per_object) {}

std::vector<SegmentDecision> LruCache::handle_request(const Request& req, double /*now*/) {
    std::vector<SegmentDecision> out;
    for (const auto& slice : split_request(req, payloads_per_segment_, segments_per_object_)) {
        const SegmentId seg = slice.segment;
        if (auto it = index_.find(seg); it != index_.end()) {
            order_.splice(order_.begin(), order_, it->second.pos);
            out.push_back({seg, CacheDecision::Hit1, slice.payloads});
            continue;
        }
        if (index_.size() >= capacity_) {
            auto victim = order_.end();
            for (auto rit = order_.rbegin(); rit != order_.rend(); ++rit) {
                if (index_.at(*rit).playing == 0) {
                    victim = std::prev(rit.base());
                    break;
                }
            }
            if (victim == order_.end()) {
                out.push_back({seg, CacheDecision::MissDropped, slice.payloads});
                continue;
            }
            index_.erase(*victim);
            order_.erase(victim);
        }
        order_.push_front(seg);
        index_.emplace(seg, Entry{order_.begin(), 0});
        out.push_back({seg, CacheDecision::MissInserted, slice.payloads});
    }
    return out;
}

void LruCache::start_play(SegmentId seg) {
    auto it = index_.find(seg);
    if (it == index_.end()) throw std::logic_error("start_play: segment not cached");
    it->second.playing += 1;
}

void LruCache::end_play(SegmentId seg) {
    auto it = index_.find(seg);
    if (it == index_.end() || it->second.playing == 0)
        throw std::logic_error("end_play: segment is not playing");
    it->second.playing -= 1;
}

LfuCache::LfuCache(std::size_t capacity, std::uint32_t payloads_per_segment,
                   std::uint32_t segments_per_object)
    : capacity_(capacity),
      payloads_per_segment_(payloads_per_segment),
      segments_per_object_(segments_per_object) {}

std::uint64_t LfuCache::frequency(SegmentId seg) const {
    auto it = index_.find(seg);
    return it == index_.end() ? 0 : it->second.freq;
}

std::vector<SegmentDecision> LfuCache::handle_request(const Request& req, double /*now*/) {
    std::vector<SegmentDecision> out;
    for (const auto& slice : split_request(req, payloads_per_segment_, segments_per_object_)) {
        const SegmentId seg = slice.segment;
        if (auto it = index_.find(seg); it != index_.end()) {
            Entry& e = it->second;
            order_.erase({e.freq, e.seq, seg});
            e.freq += 1;
            e.seq = ++clock_;
            order_.insert({e.freq, e.seq, seg});
            out.push_back({seg, CacheDecision::Hit1, slice.payloads});
            continue;
        }
        if (index_.size() >= capacity_) {
            auto victim = std::find_if(order_.begin(), order_.end(), [&](const Key& k) {
                return index_.at(std::get<2>(k)).playing == 0;
            });
            if (victim == order_.end()) {
                out.push_back({seg, CacheDecision::MissDropped, slice.payloads});
                continue;
            }
            index_.erase(std::get<2>(*victim));
            order_.erase(victim);
        }
        Entry e{1, ++clock_, 0};
        index_.emplace(seg, e);
        order_.insert({e.freq, e.seq, seg});
        out.push_back({seg, CacheDecision::MissInserted, slice.payloads});
    }
    return out;
}

void LfuCache::start_play(SegmentId seg) {
    auto it = index_.find(seg);
    if (it == index_.end()) throw std::logic_error("start_play: segment not cached");
    it->second.playing += 1;
}

void LfuCache::end_play(SegmentId seg) {
    auto it = index_.find(seg);
    if (it == index_.end() || it->second.playing == 0)
        throw std::logic_error("end_play: segment is not playing");
    it->second.playing -= 1;
}

std::vector<SegmentDecision> NoCache::handle_request(const Request& req, double /*now*/) {
    std::vector<SegmentDecision> out;
    for (const auto& slice : split_request(req, payloads_per_segment_, segments_per_object_))
        out.push_back({slice.segment, CacheDecision::MissDropped, slice.payloads});
    return out;
}

void NoCache::start_play(SegmentId) { throw std::logic_error("start_play: nothing is cached"); }
void NoCache::end_play(SegmentId) { throw std::logic_error("end_play: nothing is cached"); }

std::unique_ptr<SegmentCache> make_cache(CachePolicy policy, const CacheConfig& cfg) {
    const std::size_t total = cfg.capacity1 + cfg.capacity2;
    switch (policy) {
    case CachePolicy::BiLevel: return std::make_unique<BiLevelCache>(cfg);
    case CachePolicy::Lru:
        return std::make_unique<LruCache>(total, cfg.payloads_per_segment, cfg.segments_per_object);
    case CachePolicy::Lfu:
        return std::make_unique<LfuCache>(total, cfg.payloads_per_segment, cfg.segments_per_object);
    case CachePolicy::None:
        return std::make_unique<NoCache>(cfg.payloads_per_segment, cfg.segments_per_object);
    }
    throw std::invalid_argument("unknown cache policy");
}

}  // namespace iptvpon
