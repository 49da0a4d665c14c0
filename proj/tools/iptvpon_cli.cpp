#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "iptvpon/cache_bench.hpp"
#include "iptvpon/cllid_protocol.hpp"
#include "iptvpon/metrics.hpp"
#include "iptvpon/netsim.hpp"
#include "iptvpon/numfmt.hpp"
#include "iptvpon/run_config.hpp"
#include "iptvpon/workload.hpp"

namespace fs = std::filesystem;
using namespace iptvpon;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

// Distinguishes bad input (exit 2) from failures while running (exit 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig config_from(const std::string& path) {
    return path.empty() ? default_run_config() : load_run_config(path);
}

std::vector<TraceRecord> trace_for(const RunConfig& cfg) {
    if (cfg.trace_path.empty()) return generate_trace(cfg.sim.workload);
    auto trace = load_trace(cfg.trace_path);
    validate_trace(trace, cfg.sim.workload);
    return trace;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

void prepare_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string trace;
};

int cmd_simulate(const SimulateArgs& a) {
    RunConfig cfg = config_from(a.config);
    if (a.seed) cfg.sim.workload.seed = *a.seed;
    if (!a.trace.empty()) cfg.trace_path = a.trace;
    std::vector<TraceRecord> trace;
    try {
        trace = trace_for(cfg);
    } catch (const TraceError& e) {
        throw UsageError(e.what());
    }
    const auto result = run_experiment(cfg.sim, trace, config_hash(cfg));
    prepare_dir(a.out);
    auto csv = open_out(fs::path(a.out) / "metrics.csv");
    export_report(result.report, ExportFormat::Csv, csv);
    auto json = open_out(fs::path(a.out) / "metrics.json");
    export_report(result.report, ExportFormat::Json, json);
    if (cfg.write_packets) {
        auto pk = open_out(fs::path(a.out) / "packets.csv");
        write_packet_log(pk, result.packets);
    }
    const auto& r = result.report;
    std::cout << "events " << r.events << ", VOD hit ratio onu " << format_double(hit_ratio(r.onu_cache))
              << " olt " << format_double(hit_ratio(r.olt_cache)) << ", event log "
              << r.event_log_hash << '\n';
    return 0;
}

struct BenchArgs {
    std::string trace;
    bool gen = false;
    std::string config;
    std::string policies = "bilevel,lru,lfu";
    std::optional<std::size_t> capacity;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string decisions;
};

std::vector<CachePolicy> parse_policies(const std::string& list) {
    std::vector<CachePolicy> out;
    std::stringstream in(list);
    std::string name;
    while (std::getline(in, name, ',')) {
        try {
            out.push_back(parse_policy(name));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError("no policies given");
    return out;
}

int cmd_cache_bench(const BenchArgs& a) {
    BenchOptions opts;
    opts.policies = parse_policies(a.policies);
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.config.empty()) {
        // Bench defaults follow the full workload defaults, not the smaller simulate ones.
        cfg.sim.workload = WorkloadConfig{};
    }
    if (a.seed) cfg.sim.workload.seed = *a.seed;
    const auto& onu = cfg.sim.onu_cache.cache;
    if (!a.config.empty()) {
        opts.capacity = onu.capacity1 + onu.capacity2;
        opts.primary_fraction = static_cast<double>(onu.capacity1) / static_cast<double>(opts.capacity);
        opts.threshold = onu.threshold;
        opts.beta = onu.beta;
        opts.demote_enabled = onu.demote_enabled;
        opts.t_low = onu.t_low;
    }
    if (a.capacity) {
        if (*a.capacity == 0) throw UsageError("--capacity must be at least 1");
        opts.capacity = *a.capacity;
    }
    std::vector<TraceRecord> trace;
    try {
        if (!a.trace.empty()) {
            trace = load_trace(a.trace);
            validate_trace(trace, cfg.sim.workload);
        } else {
            trace = generate_trace(cfg.sim.workload);
        }
    } catch (const TraceError& e) {
        throw UsageError(e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto rows = run_cache_bench(trace, cfg.sim.workload, opts);
    prepare_dir(a.out);
    auto out = open_out(fs::path(a.out) / "bench.csv");
    write_bench_csv(out, rows);
    write_bench_csv(std::cout, rows);
    if (!a.decisions.empty()) {
        auto log = open_out(fs::path(a.out) / "decisions.csv");
        auto cache = make_cache(parse_policy(a.decisions), bench_cache_config(opts, cfg.sim.workload));
        write_decision_log(log, trace, *cache);
    }
    return 0;
}

int cmd_gen_trace(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
    RunConfig cfg = config_from(config);
    if (seed) cfg.sim.workload.seed = *seed;
    const auto trace = generate_trace(cfg.sim.workload);
    const fs::path p(out);
    if (p.has_parent_path()) prepare_dir(p.parent_path().string());
    auto f = open_out(p);
    save_trace(f, trace);
    std::cout << trace.size() << " records written to " << out << '\n';
    return 0;
}

int cmd_protocol_check(std::size_t n_ops, std::uint64_t seed, const std::string& script,
                       const std::string& save) {
    const ProtocolDims dims;
    std::vector<ProtocolOp> ops;
    if (!script.empty()) {
        std::ifstream in(script);
        if (!in) throw UsageError("cannot open " + script);
        try {
            ops = parse_protocol_ops(in);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    } else {
        ops = random_protocol_ops(seed, n_ops, dims);
    }
    if (!save.empty()) {
        auto f = open_out(save);
        write_protocol_ops(f, ops);
    }
    const auto r = run_protocol_check(ops, dims);
    if (!r.ok) {
        std::cout << "FAIL at step " << *r.failing_step << ": " << r.message << '\n';
        return kRuntimeFailure;
    }
    std::cout << "ok: " << r.steps << " steps, " << r.rejected << " rejected\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EPON IPTV simulator with bi-level segment caching and channel multicast"};
    app.require_subcommand(1);
    app.footer("Config keys (section.key = default):\n" + config_reference());

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run the access network simulation");
    s->add_option("--config", sim.config, "Config file")->check(CLI::ExistingFile);
    s->add_option("--seed", sim.seed, "Override workload.seed");
    s->add_option("--out", sim.out, "Output directory")->capture_default_str();
    s->add_option("--trace", sim.trace, "Replay this trace instead of generating one")->check(CLI::ExistingFile);

    BenchArgs bench;
    auto* b = app.add_subcommand("cache-bench", "Trace-driven cache policy comparison");
    auto* bt = b->add_option("--trace", bench.trace, "Trace CSV")->check(CLI::ExistingFile);
    auto* bg = b->add_flag("--gen", bench.gen, "Generate the trace from the workload config");
    bt->excludes(bg);
    b->add_option("--config", bench.config, "Config file; cache.onu sets the bench cache")->check(CLI::ExistingFile);
    b->add_option("--policies", bench.policies, "Comma-separated policies")->capture_default_str();
    b->add_option("--capacity", bench.capacity, "Total cache size in segments (default 400)");
    b->add_option("--seed", bench.seed, "Override workload.seed");
    b->add_option("--out", bench.out, "Output directory")->capture_default_str();
    b->add_option("--decisions", bench.decisions, "Also log per-segment decisions of this policy");

    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    auto* g = app.add_subcommand("gen-trace", "Write a synthetic trace");
    g->add_option("--config", gen_config, "Config file")->check(CLI::ExistingFile);
    g->add_option("--seed", gen_seed, "Override workload.seed");
    g->add_option("--out", gen_out, "Trace file")->required();

    std::size_t n_ops = 100000;
    std::uint64_t pc_seed = 1;
    std::string script, save_script;
    auto* p = app.add_subcommand("protocol-check", "Fuzz the channel multicast control plane");
    p->add_option("--ops", n_ops, "Random operations")->capture_default_str();
    p->add_option("--seed", pc_seed, "Seed")->capture_default_str();
    p->add_option("--script", script, "Replay this op script instead")->check(CLI::ExistingFile);
    p->add_option("--save-script", save_script, "Write the replayed ops as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*b) return cmd_cache_bench(bench);
        if (*g) return cmd_gen_trace(gen_config, gen_seed, gen_out);
        if (*p) return cmd_protocol_check(n_ops, pc_seed, script, save_script);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kUsageError;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageError;
}
