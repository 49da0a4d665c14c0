#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "iptvpon/workload.hpp"

using namespace iptvpon;

namespace {

std::string to_csv(const std::vector<TraceRecord>& t) {
    std::ostringstream out;
    save_trace(out, t);
    return out.str();
}

WorkloadConfig vod_only(double rate, double duration, std::uint64_t seed) {
    WorkloadConfig c;
    c.request_rate = rate;
    c.duration = duration;
    c.seed = seed;
    c.zap_rate = 0.0;
    return c;
}

std::size_t count_vod(const std::vector<TraceRecord>& t) {
    return static_cast<std::size_t>(
        std::count_if(t.begin(), t.end(), [](const TraceRecord& r) { return r.kind == TraceKind::Vod; }));
}

}  // namespace

TEST_CASE("zipf sampler edge cases") {
    CHECK(zipf_sample(1, 0.8, 0.0) == 1);
    CHECK(zipf_sample(1, 0.8, 0.999999) == 1);
    ZipfDistribution uniform(4, 0.0);
    for (std::uint32_t k = 1; k <= 4; ++k) CHECK(uniform.probability(k) == doctest::Approx(0.25));
    CHECK(uniform.sample(0.0) == 1);
    CHECK(uniform.sample(0.26) == 2);
    CHECK(uniform.sample(0.9999) == 4);
}

TEST_CASE("zipf n=3 s=1 matches 6/11, 3/11, 2/11") {
    ZipfDistribution z(3, 1.0);
    const double want[3] = {6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0};
    for (int k = 0; k < 3; ++k) CHECK(z.probability(static_cast<std::uint32_t>(k + 1)) == doctest::Approx(want[k]).epsilon(1e-12));

    std::mt19937_64 rng(11);
    const int n = 1000000;
    double counts[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) counts[z.sample(uniform01(rng)) - 1] += 1;
    double chi2 = 0;
    for (int k = 0; k < 3; ++k) {
        const double e = want[k] * n;
        chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    // 2 degrees of freedom; 13.8 is the 0.999 quantile.
    CHECK(chi2 < 13.8);
}

TEST_CASE("aged popularity halves every tau") {
    CHECK(aged_popularity(8.0, 0.0, 100.0) == 8.0);
    CHECK(aged_popularity(8.0, 100.0, 100.0) == 4.0);
    CHECK(aged_popularity(8.0, 200.0, 100.0) == 2.0);
}

TEST_CASE("VOD arrivals have the configured rate") {
    // 1000 expected records; 3 sigma is about 95.
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto t = generate_trace(vod_only(1.0, 1000.0, seed));
        const double n = static_cast<double>(count_vod(t));
        CHECK(std::fabs(n - 1000.0) <= 3.0 * std::sqrt(1000.0));
    }
}

TEST_CASE("without skips or rewatches every request starts at payload 0") {
    auto c = vod_only(1.0, 2000.0, 5);
    c.skip_prob = 0.0;
    c.rewatch_prob = 0.0;
    for (const auto& r : generate_trace(c)) {
        REQUIRE(r.kind == TraceKind::Vod);
        CHECK(r.start_payload == 0);
        CHECK(r.n_payloads >= 1);
        CHECK(r.n_payloads <= c.payloads_per_object());
    }
}

TEST_CASE("skips land on the start of a hot segment") {
    auto c = vod_only(1.0, 5000.0, 9);
    c.skip_prob = 1.0;
    c.hot_segment_fraction = 0.1;  // two hot segments per object
    std::map<std::uint32_t, std::set<std::uint64_t>> starts;
    for (const auto& r : generate_trace(c)) {
        CHECK(r.start_payload % c.payloads_per_segment == 0);
        starts[r.object_id].insert(r.start_payload);
    }
    for (const auto& [obj, s] : starts) CHECK(s.size() <= 2);
}

TEST_CASE("trace generation is deterministic and seed dependent") {
    WorkloadConfig c = vod_only(0.5, 3000.0, 42);
    c.zap_rate = 0.01;
    const auto a = to_csv(generate_trace(c));
    CHECK(a == to_csv(generate_trace(c)));
    c.seed = 43;
    CHECK(a != to_csv(generate_trace(c)));
}

TEST_CASE("traces are time ordered and live users pair joins with leaves") {
    WorkloadConfig c = vod_only(0.5, 5000.0, 3);
    c.zap_rate = 0.02;
    auto t = generate_trace(c);
    std::map<std::uint32_t, std::string> watching;
    std::size_t joins = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) REQUIRE(t[i - 1].time_s <= t[i].time_s);
        const auto& r = t[i];
        if (r.kind == TraceKind::Join) {
            CHECK(watching.count(r.user_id) == 0);
            watching[r.user_id] = r.channel_name;
            ++joins;
        } else if (r.kind == TraceKind::Leave) {
            REQUIRE(watching.count(r.user_id) == 1);
            CHECK(watching[r.user_id] == r.channel_name);
            watching.erase(r.user_id);
        }
        CHECK(r.user_id < c.n_users);
    }
    CHECK(joins > 0);
}

TEST_CASE("object frequencies follow Zipf without ageing") {
    WorkloadConfig c = vod_only(1.0, 1e6, 17);
    c.n_objects = 100;
    c.aging_enabled = false;
    c.rewatch_prob = 0.0;
    const auto trace = generate_trace(c);
    const auto ranks = popularity_ranks(c);
    std::vector<double> counts(c.n_objects + 1, 0.0);
    for (const auto& r : trace) counts[ranks[r.object_id]] += 1;
    const double n = static_cast<double>(trace.size());
    ZipfDistribution z(c.n_objects, c.zipf_s);
    double chi2 = 0;
    for (std::uint32_t k = 1; k <= c.n_objects; ++k) {
        const double p = z.probability(k);
        const double sigma = std::sqrt(n * p * (1 - p));
        CHECK(std::fabs(counts[k] - n * p) <= 3.0 * sigma);
        chi2 += (counts[k] - n * p) * (counts[k] - n * p) / (n * p);
    }
    CHECK(chi2 < 148.2);  // 99 degrees of freedom, 0.999 quantile
}

TEST_CASE("ageing churns the popular set") {
    WorkloadConfig c;  // defaults
    c.zap_rate = 0.0;
    const auto t = generate_trace(c);
    auto top10 = [&](double from, double to) {
        std::map<std::uint32_t, int> n;
        for (const auto& r : t)
            if (r.time_s >= from && r.time_s < to) n[r.object_id]++;
        std::vector<std::pair<int, std::uint32_t>> v;
        for (auto [obj, k] : n) v.push_back({-k, obj});
        std::sort(v.begin(), v.end());
        std::set<std::uint32_t> out;
        for (std::size_t i = 0; i < 10 && i < v.size(); ++i) out.insert(v[i].second);
        return out;
    };
    CHECK(top10(0, c.duration / 10) != top10(c.duration * 0.9, c.duration));
}

TEST_CASE("trace files round-trip") {
    WorkloadConfig c = vod_only(0.3, 2000.0, 8);
    c.zap_rate = 0.01;
    const auto t = generate_trace(c);
    std::istringstream in(to_csv(t));
    CHECK(load_trace(in) == t);
}

TEST_CASE("trace loader errors carry the line number") {
    const std::string header = "time_s,user_id,kind,object_id,start_payload,n_payloads,channel_name\n";
    auto fails_at = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            load_trace(in);
        } catch (const TraceError& e) {
            return e.line();
        }
        return 0;
    };
    std::istringstream empty("");
    CHECK(load_trace(empty).empty());
    CHECK(fails_at(header + "1,0,vod,0,0,5,\n0.5,0,vod,0,0,5,\n") == 3);
    CHECK(fails_at(header + "1,0,stream,0,0,5,\n") == 2);
    CHECK(fails_at(header + "1,0,vod,0,0,0,\n") == 2);
    CHECK(fails_at(header + "1,0,join,,,,\n") == 2);
    CHECK(fails_at(header + "x,0,vod,0,0,5,\n") == 2);
    CHECK(fails_at("time,user\n") == 1);

    std::istringstream ok(header + "\n1,0,vod,0,0,5,\r\n2,1,join,,,,ch3\n");
    auto t = load_trace(ok);
    REQUIRE(t.size() == 2);
    CHECK(t[1].channel_name == "ch3");

    WorkloadConfig small;
    small.n_objects = 2;
    std::vector<TraceRecord> bad{{0.0, 0, TraceKind::Vod, 5, 0, 1, ""}};
    CHECK_THROWS_AS(validate_trace(bad, small), TraceError);
}

TEST_CASE("invalid workload configs are rejected") {
    WorkloadConfig c;
    c.n_objects = 0;
    CHECK_THROWS_AS(generate_trace(c), std::invalid_argument);
    c = WorkloadConfig{};
    c.skip_prob = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = WorkloadConfig{};
    c.hot_segment_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
