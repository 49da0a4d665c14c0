#pragma once

// Reference models used by the tests. They are written without reusing any
// library code so a shared bug cannot hide on both sides.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

// Scalar scoring in extended precision.
inline long double recency(long double now, long double t_last, long double beta) {
    return 1.0L / (1.0L + (now - t_last) / beta);
}

inline long double utility1(long double played, long double n_req, long double size, long double now,
                            long double t_last, long double beta) {
    return played * recency(now, t_last, beta) / (size + n_req);
}

inline long double p_next(long double mean, long double t_since) {
    return mean / (t_since > mean ? t_since : mean);
}

inline long double utility2(long double played, long double n_req, long double size, long double p) {
    return played * p / (size * n_req);
}

inline double rel_err(long double got, long double want) {
    if (want == 0.0L) return static_cast<double>(std::fabs(got));
    return static_cast<double>(std::fabs((got - want) / want));
}

// Full-scan model of the two-partition cache.
struct RefSeg {
    std::uint32_t obj = 0;
    std::uint32_t idx = 0;
    std::uint64_t n_req = 0;
    std::uint64_t played = 0;
    double t_first = 0;
    double t_last = 0;
    bool has_mean = false;
    double mean = 0;
    std::uint32_t pins = 0;
    double resident_until = 0;
};

enum class RefDecision { Hit2, Hit1, Hit1Promoted, MissInserted, MissDropped };
enum class RefEventKind { Insert, Evict, Promote, PromotionBlocked, Drop };

struct RefEvent {
    RefEventKind kind;
    std::uint32_t obj;
    std::uint32_t idx;
    bool secondary;  // partition left or entered
    double utility;
};

struct RefParams {
    std::size_t cap1 = 1;
    std::size_t cap2 = 0;
    double threshold = 0.5;
    double beta = 60;
    std::uint32_t pps = 10;
    double ppt = 1.0;
};

class RefBiLevel {
public:
    explicit RefBiLevel(RefParams p) : p_(p) {}

    double u1(const RefSeg& s, double now) const {
        return static_cast<double>(s.played) * (1.0 / (1.0 + (now - s.t_last) / p_.beta)) /
               (static_cast<double>(p_.pps) + static_cast<double>(s.n_req));
    }

    double u2(const RefSeg& s, double now) const {
        double pn = 1.0;
        if (s.has_mean) pn = s.mean / std::max(s.mean, now - s.t_last);
        return static_cast<double>(s.played) * pn /
               (static_cast<double>(p_.pps) * static_cast<double>(s.n_req));
    }

    // Index of the victim in the store, or -1.
    int victim(bool secondary, double now) const {
        const auto& store = secondary ? s2_ : s1_;
        int best = -1;
        std::tuple<double, double, std::uint32_t, std::uint32_t> best_key{};
        for (std::size_t i = 0; i < store.size(); ++i) {
            const RefSeg& s = store[i];
            if (s.pins > 0) continue;
            if (!secondary && now < s.resident_until) continue;
            auto key = std::make_tuple(secondary ? u2(s, now) : u1(s, now), s.t_last, s.obj, s.idx);
            if (best < 0 || key < best_key) {
                best = static_cast<int>(i);
                best_key = key;
            }
        }
        return best;
    }

    std::optional<std::pair<std::uint32_t, std::uint32_t>> victim_id(bool secondary, double now) const {
        int v = victim(secondary, now);
        if (v < 0) return std::nullopt;
        const auto& s = (secondary ? s2_ : s1_)[static_cast<std::size_t>(v)];
        return std::pair{s.obj, s.idx};
    }

    void touch(RefSeg& s, std::uint32_t payloads, double now) const {
        if (s.n_req > 0) {
            double m = (now - s.t_first) / static_cast<double>(s.n_req);
            s.has_mean = m > 0;
            s.mean = s.has_mean ? m : 0;
        } else {
            s.t_first = now;
        }
        s.n_req++;
        s.played += payloads;
        s.t_last = now;
    }

    std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, RefDecision>> request(
        std::uint32_t obj, std::uint64_t start, std::uint32_t n, double now) {
        // Per-segment payload counts, in playback order.
        std::vector<std::pair<std::uint32_t, std::uint32_t>> parts;
        for (std::uint64_t pl = start; pl < start + n; ++pl) {
            auto seg = static_cast<std::uint32_t>(pl / p_.pps);
            if (parts.empty() || parts.back().first != seg)
                parts.push_back({seg, 1});
            else
                parts.back().second++;
        }
        const double resid = std::max(p_.pps * p_.ppt, n * p_.ppt);
        std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, RefDecision>> out;
        for (auto [seg, cnt] : parts) {
            auto id = std::pair{obj, seg};
            if (auto* s = find(s2_, obj, seg)) {
                touch(*s, cnt, now);
                out.push_back({id, RefDecision::Hit2});
                continue;
            }
            if (auto* s = find(s1_, obj, seg)) {
                touch(*s, cnt, now);
                double u = u1(*s, now);
                if (!(u > p_.threshold)) {
                    out.push_back({id, RefDecision::Hit1});
                    continue;
                }
                if (s2_.size() >= p_.cap2) {
                    int v = victim(true, now);
                    if (v < 0) {
                        events.push_back({RefEventKind::PromotionBlocked, obj, seg, false, u});
                        out.push_back({id, RefDecision::Hit1});
                        continue;
                    }
                    const RefSeg& vs = s2_[static_cast<std::size_t>(v)];
                    events.push_back({RefEventKind::Evict, vs.obj, vs.idx, true, u2(vs, now)});
                    s2_.erase(s2_.begin() + v);
                }
                RefSeg moved = *s;
                erase(s1_, obj, seg);
                s2_.push_back(moved);
                events.push_back({RefEventKind::Promote, obj, seg, true, u});
                out.push_back({id, RefDecision::Hit1Promoted});
                continue;
            }
            if (s1_.size() >= p_.cap1) {
                int v = victim(false, now);
                if (v < 0) {
                    events.push_back({RefEventKind::Drop, obj, seg, false, 0.0});
                    out.push_back({id, RefDecision::MissDropped});
                    continue;
                }
                const RefSeg& vs = s1_[static_cast<std::size_t>(v)];
                events.push_back({RefEventKind::Evict, vs.obj, vs.idx, false, u1(vs, now)});
                s1_.erase(s1_.begin() + v);
            }
            RefSeg fresh;
            fresh.obj = obj;
            fresh.idx = seg;
            touch(fresh, cnt, now);
            fresh.resident_until = now + resid;
            s1_.push_back(fresh);
            events.push_back({RefEventKind::Insert, obj, seg, false, u1(fresh, now)});
            out.push_back({id, RefDecision::MissInserted});
        }
        return out;
    }

    bool pin(std::uint32_t obj, std::uint32_t seg, int delta) {
        RefSeg* s = find(s2_, obj, seg);
        if (!s) s = find(s1_, obj, seg);
        if (!s) return false;
        if (delta < 0 && s->pins == 0) return false;
        s->pins = static_cast<std::uint32_t>(static_cast<int>(s->pins) + delta);
        return true;
    }

    std::set<std::pair<std::uint32_t, std::uint32_t>> ids(bool secondary) const {
        std::set<std::pair<std::uint32_t, std::uint32_t>> out;
        for (const auto& s : secondary ? s2_ : s1_) out.insert({s.obj, s.idx});
        return out;
    }

    std::vector<RefEvent> events;

private:
    static RefSeg* find(std::vector<RefSeg>& v, std::uint32_t obj, std::uint32_t seg) {
        for (auto& s : v)
            if (s.obj == obj && s.idx == seg) return &s;
        return nullptr;
    }
    static void erase(std::vector<RefSeg>& v, std::uint32_t obj, std::uint32_t seg) {
        v.erase(std::remove_if(v.begin(), v.end(), [&](const RefSeg& s) { return s.obj == obj && s.idx == seg; }),
                v.end());
    }

    RefParams p_;
    std::vector<RefSeg> s1_;
    std::vector<RefSeg> s2_;
};

// Allocation model of the 15-bit identifier pool: a free list, lowest first.
class RefPool {
public:
    RefPool() {
        for (std::uint32_t v = 0; v < 32767; ++v) free_.insert(static_cast<std::uint16_t>(v));
    }
    std::optional<std::uint16_t> allocate() {
        if (free_.empty()) return std::nullopt;
        auto v = *free_.begin();
        free_.erase(free_.begin());
        return v;
    }
    void release(std::uint16_t v) { free_.insert(v); }
    std::size_t allocated() const { return 32767 - free_.size(); }

private:
    std::set<std::uint16_t> free_;
};

// Nearest rank with integer arithmetic: rank = ceil(p * n / 100), at least 1.
inline double percentile(std::vector<double> v, unsigned p) {
    std::sort(v.begin(), v.end());
    std::size_t rank = (p * v.size() + 99) / 100;
    if (rank == 0) rank = 1;
    return v[rank - 1];
}

}  // namespace oracle
