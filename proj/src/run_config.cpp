#include "iptvpon/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "iptvpon/numfmt.hpp"

namespace iptvpon {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// A setter returns an error message, or an empty string on success.
using Getter = std::function<std::string(const RunConfig&)>;
using Setter = std::function<std::string(RunConfig&, const std::string&)>;

struct KeyDef {
    std::string path;
    std::string help;
    Getter get;
    Setter set;
};

template <class T>
std::string set_number(T& field, const std::string& v) {
    auto parsed = parse_number<T>(v);
    if (!parsed) return "expected a number, got '" + v + "'";
    field = *parsed;
    return {};
}

std::string set_bool(bool& field, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") {
        field = true;
        return {};
    }
    if (v == "false" || v == "0" || v == "no") {
        field = false;
        return {};
    }
    return "expected true or false, got '" + v + "'";
}

std::string show_bool(bool v) { return v ? "true" : "false"; }

template <class T>
KeyDef number_key(std::string path, std::string help, std::function<T&(RunConfig&)> ref) {
    return {std::move(path), std::move(help),
            [ref](const RunConfig& c) {
                auto& v = ref(const_cast<RunConfig&>(c));
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(v);
                else
                    return std::to_string(v);
            },
            [ref](RunConfig& c, const std::string& v) { return set_number<T>(ref(c), v); }};
}

KeyDef bool_key(std::string path, std::string help, std::function<bool&(RunConfig&)> ref) {
    return {std::move(path), std::move(help),
            [ref](const RunConfig& c) { return show_bool(ref(const_cast<RunConfig&>(c))); },
            [ref](RunConfig& c, const std::string& v) { return set_bool(ref(c), v); }};
}

KeyDef string_key(std::string path, std::string help, std::function<std::string&(RunConfig&)> ref) {
    return {std::move(path), std::move(help),
            [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
            [ref](RunConfig& c, const std::string& v) {
                ref(c) = v;
                return std::string{};
            }};
}

KeyDef policy_key(std::string path, std::function<CacheSetup&(RunConfig&)> ref) {
    return {std::move(path), "replacement policy: bilevel, lru, lfu or none",
            [ref](const RunConfig& c) {
                return std::string(to_string(ref(const_cast<RunConfig&>(c)).policy));
            },
            [ref](RunConfig& c, const std::string& v) {
                try {
                    ref(c).policy = parse_policy(v);
                } catch (const std::invalid_argument& e) {
                    return std::string(e.what());
                }
                return std::string{};
            }};
}

void add_cache_keys(std::vector<KeyDef>& keys, const std::string& prefix,
                    std::function<CacheSetup&(RunConfig&)> setup) {
    keys.push_back(policy_key(prefix + ".policy", setup));
    keys.push_back(number_key<std::size_t>(prefix + ".capacity1", "primary partition size in segments",
                                           [setup](RunConfig& c) -> std::size_t& { return setup(c).cache.capacity1; }));
    keys.push_back(number_key<std::size_t>(prefix + ".capacity2", "secondary partition size in segments",
                                           [setup](RunConfig& c) -> std::size_t& { return setup(c).cache.capacity2; }));
    keys.push_back(number_key<double>(prefix + ".threshold", "utility that promotes a segment",
                                      [setup](RunConfig& c) -> double& { return setup(c).cache.threshold; }));
    keys.push_back(number_key<double>(prefix + ".beta_s", "recency scale in seconds",
                                      [setup](RunConfig& c) -> double& { return setup(c).cache.beta; }));
    keys.push_back(bool_key(prefix + ".demote_enabled", "demote secondary segments below t_low",
                            [setup](RunConfig& c) -> bool& { return setup(c).cache.demote_enabled; }));
    keys.push_back(number_key<double>(prefix + ".t_low", "demotion utility, below threshold",
                                      [setup](RunConfig& c) -> double& { return setup(c).cache.t_low; }));
}

const std::vector<KeyDef>& registry() {
    static const std::vector<KeyDef> keys = [] {
        std::vector<KeyDef> k;
        auto topo = [](RunConfig& c) -> TopologyConfig& { return c.sim.topology; };
        k.push_back(number_key<std::uint32_t>("topology.n_onus", "ONUs behind the splitter",
                                              [topo](RunConfig& c) -> std::uint32_t& { return topo(c).n_onus; }));
        k.push_back(number_key<std::uint32_t>("topology.users_per_onu", "subscribers per ONU",
                                              [topo](RunConfig& c) -> std::uint32_t& { return topo(c).users_per_onu; }));
        k.push_back(number_key<double>("topology.feeder_rate_bps", "OLT downstream rate",
                                       [topo](RunConfig& c) -> double& { return topo(c).feeder.rate_bps; }));
        k.push_back(number_key<double>("topology.feeder_delay_s", "OLT to ONU propagation delay",
                                       [topo](RunConfig& c) -> double& { return topo(c).feeder.propagation_delay; }));
        k.push_back(number_key<std::size_t>("topology.feeder_queue", "OLT downstream queue in packets",
                                            [topo](RunConfig& c) -> std::size_t& { return topo(c).feeder.queue_capacity; }));
        k.push_back(number_key<double>("topology.drop_rate_bps", "ONU to user rate",
                                       [topo](RunConfig& c) -> double& { return topo(c).drop.rate_bps; }));
        k.push_back(number_key<double>("topology.drop_delay_s", "ONU to user propagation delay",
                                       [topo](RunConfig& c) -> double& { return topo(c).drop.propagation_delay; }));
        k.push_back(number_key<std::size_t>("topology.drop_queue", "ONU downstream queue in packets",
                                            [topo](RunConfig& c) -> std::size_t& { return topo(c).drop.queue_capacity; }));
        k.push_back(number_key<double>("topology.upstream_latency_s", "ONU to OLT request latency",
                                       [topo](RunConfig& c) -> double& { return topo(c).upstream_latency; }));
        k.push_back(number_key<double>("topology.head_office_latency_s", "extra latency of an OLT miss",
                                       [topo](RunConfig& c) -> double& { return topo(c).head_office_latency; }));

        add_cache_keys(k, "cache.onu", [](RunConfig& c) -> CacheSetup& { return c.sim.onu_cache; });
        add_cache_keys(k, "cache.olt", [](RunConfig& c) -> CacheSetup& { return c.sim.olt_cache; });

        auto wl = [](RunConfig& c) -> WorkloadConfig& { return c.sim.workload; };
        k.push_back(number_key<std::uint32_t>("workload.n_objects", "video objects in the catalogue",
                                              [wl](RunConfig& c) -> std::uint32_t& { return wl(c).n_objects; }));
        k.push_back(number_key<std::uint32_t>("workload.segments_per_object", "segments per object",
                                              [wl](RunConfig& c) -> std::uint32_t& { return wl(c).segments_per_object; }));
        k.push_back(number_key<std::uint32_t>("workload.payloads_per_segment", "payloads per segment",
                                              [wl](RunConfig& c) -> std::uint32_t& { return wl(c).payloads_per_segment; }));
        k.push_back(number_key<std::uint32_t>("workload.payload_bytes", "bytes per payload packet",
                                              [wl](RunConfig& c) -> std::uint32_t& { return wl(c).payload_bytes; }));
        k.push_back(number_key<double>("workload.payload_playback_s", "playback time of one payload",
                                       [wl](RunConfig& c) -> double& { return wl(c).payload_playback_time; }));
        k.push_back(number_key<double>("workload.zipf_s", "object popularity exponent",
                                       [wl](RunConfig& c) -> double& { return wl(c).zipf_s; }));
        k.push_back(bool_key("workload.aging_enabled", "stagger releases and decay popularity",
                             [wl](RunConfig& c) -> bool& { return wl(c).aging_enabled; }));
        k.push_back({"workload.aging_tau_s", "popularity half-life; auto means duration/4",
                     [](const RunConfig& c) {
                         const auto& t = c.sim.workload.aging_tau;
                         return t ? format_double(*t) : std::string("auto");
                     },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "auto") {
                             c.sim.workload.aging_tau.reset();
                             return std::string{};
                         }
                         double tau = 0;
                         auto err = set_number<double>(tau, v);
                         if (err.empty()) c.sim.workload.aging_tau = tau;
                         return err;
                     }});
        k.push_back(number_key<double>("workload.rewatch_prob", "chance a user repeats its last object",
                                       [wl](RunConfig& c) -> double& { return wl(c).rewatch_prob; }));
        k.push_back(number_key<double>("workload.skip_prob", "chance playback starts at a hot segment",
                                       [wl](RunConfig& c) -> double& { return wl(c).skip_prob; }));
        k.push_back(number_key<double>("workload.hot_segment_fraction", "share of segments that are hot",
                                       [wl](RunConfig& c) -> double& { return wl(c).hot_segment_fraction; }));
        k.push_back(number_key<double>("workload.request_rate", "VOD requests per second",
                                       [wl](RunConfig& c) -> double& { return wl(c).request_rate; }));
        k.push_back(number_key<double>("workload.duration_s", "length of the generated trace",
                                       [wl](RunConfig& c) -> double& { return wl(c).duration; }));
        k.push_back(number_key<std::uint64_t>("workload.seed", "generator seed",
                                              [wl](RunConfig& c) -> std::uint64_t& { return wl(c).seed; }));
        k.push_back(number_key<double>("workload.arrival_mix", "fraction of users that only watch VOD",
                                       [wl](RunConfig& c) -> double& { return wl(c).arrival_mix; }));
        k.push_back(number_key<std::uint32_t>("workload.n_channels", "live channels",
                                              [wl](RunConfig& c) -> std::uint32_t& { return wl(c).n_channels; }));
        k.push_back(number_key<double>("workload.channel_zipf_s", "channel popularity exponent",
                                       [wl](RunConfig& c) -> double& { return wl(c).channel_zipf_s; }));
        k.push_back(number_key<double>("workload.zap_rate", "channel switches per live user per second",
                                       [wl](RunConfig& c) -> double& { return wl(c).zap_rate; }));
        k.push_back(string_key("workload.trace", "trace CSV to replay instead of generating",
                               [](RunConfig& c) -> std::string& { return c.trace_path; }));

        k.push_back(number_key<double>("live.frame_interval_s", "seconds between channel frames",
                                       [](RunConfig& c) -> double& { return c.sim.live.frame_interval; }));
        k.push_back(number_key<std::uint32_t>("live.frame_bytes", "bytes per channel frame",
                                              [](RunConfig& c) -> std::uint32_t& { return c.sim.live.frame_bytes; }));
        k.push_back(string_key("live.allow", "allow-list: * or user:channel entries",
                               [](RunConfig& c) -> std::string& { return c.access_rules; }));

        k.push_back(bool_key("output.packets", "also write packets.csv",
                             [](RunConfig& c) -> bool& { return c.write_packets; }));
        return k;
    }();
    return keys;
}

const KeyDef* find_key(const std::string& path) {
    for (const auto& k : registry())
        if (k.path == path) return &k;
    return nullptr;
}

void validate_all(const RunConfig& cfg, std::vector<std::string>& problems) {
    auto check = [&](const std::string& scope, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            problems.push_back(scope + ": " + e.what());
        }
    };
    const auto& t = cfg.sim.topology;
    if (t.n_onus == 0) problems.push_back("topology.n_onus: must be at least 1");
    if (t.users_per_onu == 0) problems.push_back("topology.users_per_onu: must be at least 1");
    if (!(t.feeder.rate_bps > 0)) problems.push_back("topology.feeder_rate_bps: must be positive");
    if (!(t.drop.rate_bps > 0)) problems.push_back("topology.drop_rate_bps: must be positive");
    if (t.feeder.queue_capacity == 0) problems.push_back("topology.feeder_queue: must be at least 1");
    if (t.drop.queue_capacity == 0) problems.push_back("topology.drop_queue: must be at least 1");
    if (t.feeder.propagation_delay < 0) problems.push_back("topology.feeder_delay_s: must be >= 0");
    if (t.drop.propagation_delay < 0) problems.push_back("topology.drop_delay_s: must be >= 0");
    if (t.upstream_latency < 0) problems.push_back("topology.upstream_latency_s: must be >= 0");
    if (t.head_office_latency < 0) problems.push_back("topology.head_office_latency_s: must be >= 0");
    check("cache.onu", [&] { cfg.sim.onu_cache.cache.validate(); });
    check("cache.olt", [&] { cfg.sim.olt_cache.cache.validate(); });
    check("workload", [&] { cfg.sim.workload.validate(); });
    if (cfg.sim.workload.n_users != t.n_onus * t.users_per_onu)
        problems.push_back("workload: user count does not match topology");
    if (!(cfg.sim.live.frame_interval > 0)) problems.push_back("live.frame_interval_s: must be positive");
    if (cfg.sim.live.frame_bytes == 0) problems.push_back("live.frame_bytes: must be at least 1");
    check("live.allow", [&] { parse_access_rules(cfg.access_rules); });
}

// Keeps derived fields in step with the keys they come from.
void sync_derived(RunConfig& cfg) {
    auto& s = cfg.sim;
    s.workload.n_users = s.topology.n_onus * s.topology.users_per_onu;
    for (CacheSetup* c : {&s.onu_cache, &s.olt_cache}) {
        c->cache.payloads_per_segment = s.workload.payloads_per_segment;
        c->cache.segments_per_object = s.workload.segments_per_object;
        c->cache.payload_playback_time = s.workload.payload_playback_time;
    }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

RunConfig default_run_config() {
    RunConfig c;
    auto& wl = c.sim.workload;
    wl.n_objects = 200;
    wl.request_rate = 0.2;
    wl.duration = 3600.0;
    wl.zap_rate = 1.0 / 300.0;
    // A quarter of each cache is the primary partition, as in the bench.
    c.sim.onu_cache.cache.capacity1 = 20;
    c.sim.onu_cache.cache.capacity2 = 60;
    c.sim.olt_cache.cache.capacity1 = 100;
    c.sim.olt_cache.cache.capacity2 = 300;
    sync_derived(c);
    return c;
}

RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg = default_run_config();
    std::vector<std::string> problems;
    std::map<std::string, std::size_t> seen;
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (text.front() == '[') {
            if (text.back() != ']') {
                problems.push_back(where + "unterminated section header");
                continue;
            }
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            problems.push_back(where + "expected key = value");
            continue;
        }
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        std::string path = key;
        if (!section.empty() && !find_key(key)) path = section + "." + key;
        const KeyDef* def = find_key(path);
        if (!def) {
            problems.push_back(where + "unknown key " + path);
            continue;
        }
        if (auto [it, fresh] = seen.emplace(path, lineno); !fresh) {
            problems.push_back(where + path + " already set on line " + std::to_string(it->second));
            continue;
        }
        if (auto err = def->set(cfg, value); !err.empty()) problems.push_back(where + path + ": " + err);
    }
    sync_derived(cfg);
    if (problems.empty()) validate_all(cfg, problems);
    if (!problems.empty()) throw ConfigError(std::move(problems));
    cfg.sim.live.access = parse_access_rules(cfg.access_rules);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file " + path});
    return parse_run_config(in);
}

std::vector<ConfigKey> config_keys() {
    const RunConfig d = default_run_config();
    std::vector<ConfigKey> out;
    for (const auto& k : registry()) out.push_back({k.path, k.get(d), k.help});
    return out;
}

std::string config_reference() {
    std::ostringstream out;
    for (const auto& k : config_keys()) {
        out << "  " << k.path << " = " << (k.default_value.empty() ? "\"\"" : k.default_value) << "\n      "
            << k.help << '\n';
    }
    return out.str();
}

std::string canonical_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : registry()) out += k.path + " = " + k.get(cfg) + '\n';
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

AccessControl parse_access_rules(const std::string& rules) {
    std::istringstream in(rules);
    std::string tok;
    AccessControl acl;
    bool any = false;
    while (in >> tok) {
        any = true;
        if (tok == "*" || tok == "*:*") return AccessControl::allow_all();
        const auto colon = tok.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
            throw std::invalid_argument("bad rule '" + tok + "', expected user:channel");
        const std::string user = tok.substr(0, colon);
        const std::string channel = tok.substr(colon + 1);
        if (user == "*") {
            acl.allow_channel(channel);
            continue;
        }
        auto idx = parse_number<std::uint32_t>(user);
        if (!idx) throw std::invalid_argument("bad user index in rule '" + tok + "'");
        if (channel == "*")
            acl.allow_user(user_mac_address(*idx));
        else
            acl.allow(user_mac_address(*idx), channel);
    }
    if (!any) throw std::invalid_argument("empty allow-list");
    return acl;
}

}  // namespace iptvpon
