#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iptvpon {

struct WorkloadConfig {
    std::uint32_t n_objects = 1000;
    std::uint32_t segments_per_object = 20;
    std::uint32_t payloads_per_segment = 10;
    std::uint32_t payload_bytes = 125000;
    double payload_playback_time = 1.0;  // seconds
    double zipf_s = 0.8;
    bool aging_enabled = true;
    std::optional<double> aging_tau;  // seconds; unset means duration / 4
    double rewatch_prob = 0.1;
    double skip_prob = 0.2;
    double hot_segment_fraction = 0.2;
    double request_rate = 1.0;  // VOD requests per second, all users combined
    double duration = 100000.0;  // seconds
    std::uint64_t seed = 1;
    std::uint32_t n_users = 32;
    double arrival_mix = 0.75;  // fraction of users that only watch VOD; the rest also zap
    std::uint32_t n_channels = 32;
    double channel_zipf_s = 0.8;
    double zap_rate = 0.0;  // channel switches per live user per second

    double effective_aging_tau() const { return aging_tau.value_or(duration / 4.0); }
    std::uint64_t payloads_per_object() const {
        return std::uint64_t{payloads_per_segment} * segments_per_object;
    }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

enum class TraceKind { Vod, Join, Leave };

struct TraceRecord {
    double time_s = 0.0;
    std::uint32_t user_id = 0;
    TraceKind kind = TraceKind::Vod;
    std::uint32_t object_id = 0;
    std::uint64_t start_payload = 0;
    std::uint32_t n_payloads = 0;
    std::string channel_name;

    bool operator==(const TraceRecord&) const = default;
};

/// Malformed trace input; `line()` is 1-based and counts the header.
class TraceError : public std::runtime_error {
public:
    TraceError(std::size_t line, const std::string& reason);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Rank sampler for P(k) proportional to k^-s over ranks 1..n.
class ZipfDistribution {
public:
    ZipfDistribution(std::uint32_t n, double s);

    std::uint32_t sample(double u) const;
    double probability(std::uint32_t rank) const;
    std::uint32_t size() const { return static_cast<std::uint32_t>(cdf_.size()); }

private:
    std::vector<double> cdf_;  // unnormalised running sums
};

/// One draw from Zipf(n, s) given u in [0, 1).
std::uint32_t zipf_sample(std::uint32_t n, double s, double u);

/// base * 2^(-t / tau)
double aged_popularity(double base_weight, double t_since_release, double aging_tau);

/// Zipf rank (1 = most popular) of every object id, fixed by the seed.
std::vector<std::uint32_t> popularity_ranks(const WorkloadConfig& cfg);

std::string channel_name(std::uint32_t index);

/// Deterministic synthetic trace: VOD arrivals plus live zapping, sorted by time.
std::vector<TraceRecord> generate_trace(const WorkloadConfig& cfg);

void save_trace(std::ostream& out, const std::vector<TraceRecord>& trace);
void save_trace(const std::string& path, const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> load_trace(std::istream& in);
std::vector<TraceRecord> load_trace(const std::string& path);

/// Checks a parsed trace against an object catalogue; throws TraceError with
/// the data-line number (header is line 1).
void validate_trace(const std::vector<TraceRecord>& trace, const WorkloadConfig& cfg);

}  // namespace iptvpon
