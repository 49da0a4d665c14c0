#pragma once

#include <compare>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace iptvpon {

/// Fixed-size slice of a video object; the unit of caching and replacement.
struct SegmentId {
    std::uint32_t object_id = 0;
    std::uint32_t segment_index = 0;

    auto operator<=>(const SegmentId&) const = default;
};

std::string to_string(SegmentId id);

/// Per-segment access history. Utilities are derived from these counters on demand.
struct SegmentStats {
    std::uint64_t n_requests = 0;
    std::uint64_t n_payloads_played = 0;
    double t_last_accessed = 0.0;
    double t_inserted = 0.0;  // first access since the segment entered the cache
    // Running mean of gaps between successive requests; undefined until the
    // second request and whenever all observed gaps were zero.
    std::optional<double> mean_interarrival;
    std::uint32_t playing_count = 0;
    double min_residency_until = 0.0;
};

struct CacheConfig {
    std::size_t capacity1 = 1;  // primary partition, in segments
    std::size_t capacity2 = 0;  // secondary partition, in segments
    double threshold = 0.5;
    double beta = 60.0;  // seconds
    std::uint32_t payloads_per_segment = 10;
    std::uint32_t segments_per_object = 20;
    double payload_playback_time = 1.0;  // seconds
    bool demote_enabled = false;
    double t_low = 0.05;
    bool record_events = false;

    double segment_playback_time() const {
        return payloads_per_segment * payload_playback_time;
    }

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

/// A viewing request: `n_payloads` consecutive payloads of one object.
struct Request {
    std::uint32_t object_id = 0;
    std::uint64_t start_payload = 0;
    std::uint32_t n_payloads = 1;
    double arrival_time = 0.0;
};

/// Raised for requests whose payload range does not fit inside the object.
class InvalidRequest : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class CacheDecision { Hit2, Hit1, Hit1Promoted, MissInserted, MissDropped };
enum class Partition { Primary, Secondary };

std::string_view to_string(CacheDecision d);

inline bool is_hit(CacheDecision d) {
    return d == CacheDecision::Hit1 || d == CacheDecision::Hit2 ||
           d == CacheDecision::Hit1Promoted;
}

/// Segment is resident after the decision (hit or freshly inserted).
inline bool is_cached(CacheDecision d) { return d != CacheDecision::MissDropped; }

struct SegmentDecision {
    SegmentId segment;
    CacheDecision decision;
    std::uint32_t payloads = 0;  // payloads of the request falling in this segment

    bool operator==(const SegmentDecision&) const = default;
};

/// Piece of a request that falls inside a single segment.
struct SegmentSlice {
    SegmentId segment;
    std::uint64_t first_payload = 0;  // object-relative
    std::uint32_t payloads = 0;
};

/// Splits a request into per-segment slices in playback order.
/// Throws InvalidRequest when the payload range leaves the object.
std::vector<SegmentSlice> split_request(const Request& req, std::uint32_t payloads_per_segment,
                                        std::uint32_t segments_per_object);

// Scoring functions. Preconditions are checked and reported with
// std::invalid_argument.

/// 1 / (1 + (now - t_last) / beta)
double recency_factor(double now, double t_last, double beta);

/// played * recency / (payloads_per_segment + n_requests)
double utility1(const SegmentStats& stats, double now, const CacheConfig& cfg);

/// mean / max(mean, t_since_last)
double next_request_probability(double mean_interarrival, double t_since_last);

/// played * P(next request) / (payloads_per_segment * n_requests); P := 1 while
/// the inter-arrival mean is undefined.
double utility2(const SegmentStats& stats, double now, const CacheConfig& cfg);

/// Counts one access that played `payloads_played` payloads of the segment at `now`.
SegmentStats update_on_access(SegmentStats stats, std::uint32_t payloads_played, double now);

/// Audit trail entry; recorded only when CacheConfig::record_events is set.
struct CacheEvent {
    enum class Kind { Insert, Evict, Promote, PromotionBlocked, Demote, Drop };

    Kind kind;
    double time;
    SegmentId segment;
    Partition partition;  // partition the segment left or entered
    double utility;       // utility1 for Insert/Promote/Blocked/Evict(P1), utility2 otherwise
};

/// Common surface of every cache placed at an ONU or OLT.
class SegmentCache {
public:
    virtual ~SegmentCache() = default;

    /// One decision per segment touched by `req`, in playback order.
    virtual std::vector<SegmentDecision> handle_request(const Request& req, double now) = 0;
    virtual void start_play(SegmentId seg) = 0;
    virtual void end_play(SegmentId seg) = 0;
    /// Periodic housekeeping; called before each request by the drivers.
    virtual void maintain(double /*now*/) {}

    virtual bool contains(SegmentId seg) const = 0;
    virtual std::size_t size() const = 0;
    virtual std::string_view name() const = 0;
};

/// Two-partition cache. New segments land in the primary partition and move to
/// the secondary one once their primary utility exceeds the threshold. Each
/// partition evicts its smallest-utility segment, never one that is playing.
class BiLevelCache final : public SegmentCache {
public:
    using Store = std::map<SegmentId, SegmentStats>;

    explicit BiLevelCache(CacheConfig cfg);

    std::vector<SegmentDecision> handle_request(const Request& req, double now) override;
    void start_play(SegmentId seg) override;
    void end_play(SegmentId seg) override;
    void maintain(double now) override;

    bool contains(SegmentId seg) const override;
    std::size_t size() const override { return primary_.size() + secondary_.size(); }
    std::string_view name() const override { return "bilevel"; }

    /// Smallest-utility evictable segment of a partition. Ties go to the
    /// oldest access, then the smallest id.
    std::optional<SegmentId> evict_candidate(Partition p, double now) const;

    /// Moves secondary segments whose utility2 fell below t_low back to the
    /// primary partition. No-op unless demotion is enabled.
    std::vector<SegmentId> demote_if_stale(double now);

    const SegmentStats* find(SegmentId seg) const;
    std::optional<Partition> partition_of(SegmentId seg) const;

    const Store& primary() const { return primary_; }
    const Store& secondary() const { return secondary_; }
    const CacheConfig& config() const { return cfg_; }
    const std::vector<CacheEvent>& events() const { return events_; }
    void clear_events() { events_.clear(); }

private:
    SegmentStats* find_mutable(SegmentId seg);
    void record(CacheEvent::Kind kind, double now, SegmentId seg, Partition p, double utility);
    void check_time(double now);

    CacheConfig cfg_;
    Store primary_;
    Store secondary_;
    std::vector<CacheEvent> events_;
    double last_now_ = 0.0;
};

/// Least-recently-used baseline over a single partition.
class LruCache final : public SegmentCache {
public:
    LruCache(std::size_t capacity, std::uint32_t payloads_per_segment,
             std::uint32_t segments_per_object);

    std::vector<SegmentDecision> handle_request(const Request& req, double now) override;
    void start_play(SegmentId seg) override;
    void end_play(SegmentId seg) override;

    bool contains(SegmentId seg) const override { return index_.count(seg) != 0; }
    std::size_t size() const override { return index_.size(); }
    std::string_view name() const override { return "lru"; }

    /// Resident segments, most recently used first.
    std::vector<SegmentId> recency_order() const { return {order_.begin(), order_.end()}; }

private:
    struct Entry {
        std::list<SegmentId>::iterator pos;
        std::uint32_t playing = 0;
    };

    std::size_t capacity_;
    std::uint32_t payloads_per_segment_;
    std::uint32_t segments_per_object_;
    std::list<SegmentId> order_;
    std::map<SegmentId, Entry> index_;
};

/// Least-frequently-used baseline; ties evict the oldest access, then the smallest id.
class LfuCache final : public SegmentCache {
public:
    LfuCache(std::size_t capacity, std::uint32_t payloads_per_segment,
             std::uint32_t segments_per_object);

    std::vector<SegmentDecision> handle_request(const Request& req, double now) override;
    void start_play(SegmentId seg) override;
    void end_play(SegmentId seg) override;

    bool contains(SegmentId seg) const override { return index_.count(seg) != 0; }
    std::size_t size() const override { return index_.size(); }
    std::string_view name() const override { return "lfu"; }

    std::uint64_t frequency(SegmentId seg) const;

private:
    using Key = std::tuple<std::uint64_t, std::uint64_t, SegmentId>;  // freq, access seq, id
    struct Entry {
        std::uint64_t freq = 0;
        std::uint64_t seq = 0;
        std::uint32_t playing = 0;
    };

    std::size_t capacity_;
    std::uint32_t payloads_per_segment_;
    std::uint32_t segments_per_object_;
    std::uint64_t clock_ = 0;
    std::set<Key> order_;
    std::map<SegmentId, Entry> index_;
};

/// Never stores anything; every segment is served pass-through.
class NoCache final : public SegmentCache {
public:
    NoCache(std::uint32_t payloads_per_segment, std::uint32_t segments_per_object)
        : payloads_per_segment_(payloads_per_segment), segments_per_object_(segments_per_object) {}

    std::vector<SegmentDecision> handle_request(const Request& req, double now) override;
    void start_play(SegmentId seg) override;
    void end_play(SegmentId seg) override;

    bool contains(SegmentId) const override { return false; }
    std::size_t size() const override { return 0; }
    std::string_view name() const override { return "none"; }

private:
    std::uint32_t payloads_per_segment_;
    std::uint32_t segments_per_object_;
};

enum class CachePolicy { BiLevel, Lru, Lfu, None };

std::string_view to_string(CachePolicy p);
/// Accepts "bilevel", "lru", "lfu", "none"; throws std::invalid_argument otherwise.
CachePolicy parse_policy(std::string_view name);

/// Builds a cache for `policy`. Baselines receive capacity1 + capacity2 slots.
std::unique_ptr<SegmentCache> make_cache(CachePolicy policy, const CacheConfig& cfg);

}  // namespace iptvpon
