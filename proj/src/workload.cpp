#include "iptvpon/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "iptvpon/numfmt.hpp"

namespace iptvpon {

namespace {

constexpr const char* kTraceHeader =
    "time_s,user_id,kind,object_id,start_payload,n_payloads,channel_name";

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t tag) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(tag)));
}

std::uint32_t uniform_index(std::mt19937_64& rng, std::uint32_t n) {
    auto k = static_cast<std::uint32_t>(uniform01(rng) * n);
    return std::min(k, n - 1);
}

double exponential(std::mt19937_64& rng, double rate) {
    return -std::log1p(-uniform01(rng)) / rate;
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, static_cast<std::uint32_t>(i))]);
    }
}

// Prefix sums over object weights; objects are added as they are released.
class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {}

    void add(std::size_t i, double w) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += w;
        total_ += w;
    }

    double total() const { return total_; }

    // Smallest index whose prefix sum exceeds `target`.
    std::size_t find(double target) const {
        std::size_t pos = 0;
        std::size_t step = 1;
        while (step * 2 < tree_.size()) step *= 2;
        for (; step > 0; step /= 2) {
            if (pos + step < tree_.size() && tree_[pos + step] <= target) {
                pos += step;
                target -= tree_[pos];
            }
        }
        return std::min(pos, tree_.size() - 2);
    }

private:
    std::vector<double> tree_;
    double total_ = 0.0;
};

std::vector<std::uint32_t> hot_segments(const WorkloadConfig& cfg, std::uint32_t object) {
    std::vector<std::uint32_t> perm(cfg.segments_per_object);
    std::iota(perm.begin(), perm.end(), 0u);
    auto rng = substream(cfg.seed, 0x4000'0000'0000ULL + object);
    shuffle(perm, rng);
    const auto hot = static_cast<std::size_t>(
        std::ceil(cfg.hot_segment_fraction * cfg.segments_per_object - 1e-9));
    perm.resize(std::clamp<std::size_t>(hot, 1, perm.size()));
    return perm;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string_view kind_name(TraceKind k) {
    switch (k) {
    case TraceKind::Vod: return "vod";
    case TraceKind::Join: return "join";
    case TraceKind::Leave: return "leave";
    }
    return "?";
}

}  // namespace

TraceError::TraceError(std::size_t line, const std::string& reason)
    : std::runtime_error("trace line " + std::to_string(line) + ": " + reason), line_(line) {}

void WorkloadConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    auto unit = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
    };
    if (n_objects < 1) fail("n_objects must be >= 1");
    if (segments_per_object < 1) fail("segments_per_object must be >= 1");
    if (payloads_per_segment < 1) fail("payloads_per_segment must be >= 1");
    if (payload_bytes < 1) fail("payload_bytes must be >= 1");
    if (!(payload_playback_time >= 0.0)) fail("payload_playback_time must be >= 0");
    if (!(zipf_s >= 0.0)) fail("zipf_s must be >= 0");
    if (aging_tau && !(*aging_tau > 0.0)) fail("aging_tau must be > 0");
    unit(rewatch_prob, "rewatch_prob");
    unit(skip_prob, "skip_prob");
    if (!(hot_segment_fraction > 0.0 && hot_segment_fraction <= 1.0))
        fail("hot_segment_fraction must lie in (0, 1]");
    if (!(request_rate >= 0.0)) fail("request_rate must be >= 0");
    if (!(duration >= 0.0)) fail("duration must be >= 0");
    if (n_users < 1) fail("n_users must be >= 1");
    unit(arrival_mix, "arrival_mix");
    if (n_channels < 1) fail("n_channels must be >= 1");
    if (!(channel_zipf_s >= 0.0)) fail("channel_zipf_s must be >= 0");
    if (!(zap_rate >= 0.0)) fail("zap_rate must be >= 0");
    if (aging_enabled && duration > 0.0 && !(effective_aging_tau() > 0.0))
        fail("aging_tau must be > 0");
}

ZipfDistribution::ZipfDistribution(std::uint32_t n, double s) {
    if (n < 1) throw std::invalid_argument("zipf: n must be >= 1");
    if (!(s >= 0.0)) throw std::invalid_argument("zipf: s must be >= 0");
    cdf_.resize(n);
    double acc = 0.0;
    for (std::uint32_t k = 1; k <= n; ++k) {
        acc += std::pow(static_cast<double>(k), -s);
        cdf_[k - 1] = acc;
    }
}

std::uint32_t ZipfDistribution::sample(double u) const {
    if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("zipf: u must lie in [0, 1)");
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u * cdf_.back());
    auto rank = static_cast<std::uint32_t>(it - cdf_.begin()) + 1;
    return std::min(rank, size());
}

double ZipfDistribution::probability(std::uint32_t rank) const {
    if (rank < 1 || rank > size()) return 0.0;
    const double prev = rank == 1 ? 0.0 : cdf_[rank - 2];
    return (cdf_[rank - 1] - prev) / cdf_.back();
}

std::uint32_t zipf_sample(std::uint32_t n, double s, double u) {
    return ZipfDistribution(n, s).sample(u);
}

double aged_popularity(double base_weight, double t_since_release, double aging_tau) {
    if (base_weight < 0.0 || t_since_release < 0.0 || !(aging_tau > 0.0))
        throw std::invalid_argument("aged_popularity: inputs must be non-negative, tau > 0");
    return base_weight * std::exp2(-t_since_release / aging_tau);
}

std::vector<std::uint32_t> popularity_ranks(const WorkloadConfig& cfg) {
    auto rng = substream(cfg.seed, 3);
    std::vector<std::uint32_t> rank_of(cfg.n_objects);
    std::iota(rank_of.begin(), rank_of.end(), 1u);
    shuffle(rank_of, rng);
    return rank_of;
}

std::string channel_name(std::uint32_t index) { return "ch" + std::to_string(index); }

std::vector<TraceRecord> generate_trace(const WorkloadConfig& cfg) {
    cfg.validate();
    std::vector<TraceRecord> out;

    // Catalogue: random popularity ranks and staggered release times. While
    // released, an object's aged weight is base * 2^-((t - r) / tau); the
    // common 2^(-t / tau) factor cancels under normalisation, so each object
    // keeps the fixed weight base * 2^((r - duration) / tau) from release on.
    auto catalog_rng = substream(cfg.seed, 1);
    const auto rank_of = popularity_ranks(cfg);

    std::vector<double> release(cfg.n_objects, -std::numeric_limits<double>::infinity());
    std::vector<double> weight(cfg.n_objects);
    const double tau = cfg.effective_aging_tau();
    for (std::uint32_t o = 0; o < cfg.n_objects; ++o) {
        const double base = std::pow(static_cast<double>(rank_of[o]), -cfg.zipf_s);
        if (cfg.aging_enabled) {
            release[o] = cfg.duration * (2.0 * uniform01(catalog_rng) - 1.0);
            weight[o] = base * std::exp2((release[o] - cfg.duration) / tau);
        } else {
            weight[o] = base;
        }
    }
    std::vector<std::uint32_t> by_release(cfg.n_objects);
    std::iota(by_release.begin(), by_release.end(), 0u);
    std::stable_sort(by_release.begin(), by_release.end(),
                     [&](auto a, auto b) { return release[a] < release[b]; });
    release[by_release.front()] = std::min(release[by_release.front()], 0.0);

    Fenwick released(cfg.n_objects);
    std::size_t next_release = 0;
    auto release_until = [&](double t) {
        while (next_release < by_release.size() && release[by_release[next_release]] <= t) {
            const auto o = by_release[next_release++];
            released.add(o, weight[o]);
        }
    };
    auto pick_object = [&](std::mt19937_64& rng, double t) -> std::uint32_t {
        const double u = uniform01(rng);
        // Every released weight underflowed: fall back to the newest release.
        if (!(released.total() > 0.0)) return by_release[next_release - 1];
        const auto o = static_cast<std::uint32_t>(released.find(u * released.total()));
        // Rounding at the top of the prefix sums can land past the last released object.
        return release[o] <= t ? o : by_release[next_release - 1];
    };

    // VOD arrivals.
    auto vod_rng = substream(cfg.seed, 2);
    std::vector<std::optional<std::uint32_t>> last_object(cfg.n_users);
    const std::uint64_t object_payloads = cfg.payloads_per_object();
    if (cfg.request_rate > 0.0) {
        double t = 0.0;
        while (true) {
            t += exponential(vod_rng, cfg.request_rate);
            if (t >= cfg.duration) break;
            release_until(t);
            TraceRecord r;
            r.time_s = t;
            r.kind = TraceKind::Vod;
            r.user_id = uniform_index(vod_rng, cfg.n_users);
            auto& prev = last_object[r.user_id];
            if (prev && uniform01(vod_rng) < cfg.rewatch_prob)
                r.object_id = *prev;
            else
                r.object_id = pick_object(vod_rng, t);
            prev = r.object_id;

            if (uniform01(vod_rng) < cfg.skip_prob) {
                auto hot = hot_segments(cfg, r.object_id);
                const auto seg = hot[uniform_index(vod_rng, static_cast<std::uint32_t>(hot.size()))];
                r.start_payload = std::uint64_t{seg} * cfg.payloads_per_segment;
            }
            const std::uint64_t remaining = object_payloads - r.start_payload;
            r.n_payloads = 1 + static_cast<std::uint32_t>(std::min<std::uint64_t>(
                                   static_cast<std::uint64_t>(uniform01(vod_rng) * remaining),
                                   remaining - 1));
            out.push_back(std::move(r));
        }
    }

    // Live zapping: the last users (by id) beyond the VOD-only share.
    const auto vod_only = static_cast<std::uint32_t>(std::lround(cfg.arrival_mix * cfg.n_users));
    if (cfg.zap_rate > 0.0 && vod_only < cfg.n_users) {
        ZipfDistribution channels(cfg.n_channels, cfg.channel_zipf_s);
        for (std::uint32_t user = vod_only; user < cfg.n_users; ++user) {
            auto rng = substream(cfg.seed, 0x2000'0000ULL + user);
            std::optional<std::uint32_t> current;
            double t = 0.0;
            while (true) {
                t += exponential(rng, cfg.zap_rate);
                if (t >= cfg.duration) break;
                const std::uint32_t ch = channels.sample(uniform01(rng)) - 1;
                if (current == ch) continue;
                if (current) {
                    TraceRecord leave;
                    leave.time_s = t;
                    leave.user_id = user;
                    leave.kind = TraceKind::Leave;
                    leave.channel_name = channel_name(*current);
                    out.push_back(std::move(leave));
                }
                TraceRecord join;
                join.time_s = t;
                join.user_id = user;
                join.kind = TraceKind::Join;
                join.channel_name = channel_name(ch);
                out.push_back(std::move(join));
                current = ch;
            }
        }
    }

    std::stable_sort(out.begin(), out.end(),
                     [](const TraceRecord& a, const TraceRecord& b) { return a.time_s < b.time_s; });
    return out;
}

void save_trace(std::ostream& out, const std::vector<TraceRecord>& trace) {
    out << kTraceHeader << '\n';
    for (const auto& r : trace) {
        out << format_double(r.time_s) << ',' << r.user_id << ',' << kind_name(r.kind) << ',';
        if (r.kind == TraceKind::Vod)
            out << r.object_id << ',' << r.start_payload << ',' << r.n_payloads << ',';
        else
            out << ",,," << r.channel_name;
        out << '\n';
    }
}

void save_trace(const std::string& path, const std::vector<TraceRecord>& trace) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    save_trace(f, trace);
    if (!f) throw std::runtime_error("failed writing " + path);
}

std::vector<TraceRecord> load_trace(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!have_header) {
            if (line != kTraceHeader) throw TraceError(lineno, "expected header '" +
                                                                    std::string(kTraceHeader) + "'");
            have_header = true;
            continue;
        }
        auto f = split_csv_line(line);
        if (f.size() != 7)
            throw TraceError(lineno, "expected 7 fields, found " + std::to_string(f.size()));

        TraceRecord r;
        auto time = parse_number<double>(f[0]);
        if (!time || !std::isfinite(*time) || *time < 0.0)
            throw TraceError(lineno, "bad time_s '" + f[0] + "'");
        r.time_s = *time;
        auto user = parse_number<std::uint32_t>(f[1]);
        if (!user) throw TraceError(lineno, "bad user_id '" + f[1] + "'");
        r.user_id = *user;

        if (f[2] == "vod") {
            r.kind = TraceKind::Vod;
            auto obj = parse_number<std::uint32_t>(f[3]);
            auto start = parse_number<std::uint64_t>(f[4]);
            auto n = parse_number<std::uint32_t>(f[5]);
            if (!obj || !start || !n) throw TraceError(lineno, "vod record needs object fields");
            if (*n < 1) throw TraceError(lineno, "n_payloads must be >= 1");
            if (!f[6].empty()) throw TraceError(lineno, "vod record must not name a channel");
            r.object_id = *obj;
            r.start_payload = *start;
            r.n_payloads = *n;
        } else if (f[2] == "join" || f[2] == "leave") {
            r.kind = f[2] == "join" ? TraceKind::Join : TraceKind::Leave;
            if (!f[3].empty() || !f[4].empty() || !f[5].empty())
                throw TraceError(lineno, f[2] + " record must leave object fields empty");
            if (f[6].empty()) throw TraceError(lineno, f[2] + " record needs channel_name");
            r.channel_name = f[6];
        } else {
            throw TraceError(lineno, "unknown kind '" + f[2] + "'");
        }

        if (!out.empty() && r.time_s < out.back().time_s)
            throw TraceError(lineno, "timestamps must be non-decreasing");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TraceRecord> load_trace(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open trace " + path);
    return load_trace(f);
}

void validate_trace(const std::vector<TraceRecord>& trace, const WorkloadConfig& cfg) {
    const std::uint64_t object_payloads = cfg.payloads_per_object();
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        const std::size_t line = i + 2;
        if (r.user_id >= cfg.n_users)
            throw TraceError(line, "user_id " + std::to_string(r.user_id) + " out of range");
        if (r.kind != TraceKind::Vod) continue;
        if (r.object_id >= cfg.n_objects)
            throw TraceError(line, "object_id " + std::to_string(r.object_id) + " out of range");
        if (r.start_payload >= object_payloads ||
            r.n_payloads > object_payloads - r.start_payload)
            throw TraceError(line, "payload range exceeds the object");
    }
}

}  // namespace iptvpon
