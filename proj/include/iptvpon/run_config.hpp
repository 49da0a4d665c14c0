#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iptvpon/netsim.hpp"

namespace iptvpon {

/// Everything `simulate` needs: network, caches, workload, live TV, outputs.
struct RunConfig {
    SimulationConfig sim;
    std::string trace_path;  // empty: generate from the workload section
    std::string access_rules = "*";
    bool write_packets = false;
};

/// Carries every problem found in a config file, one per entry.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct ConfigKey {
    std::string path;
    std::string default_value;
    std::string help;
};

/// Defaults used by `simulate` when a key is absent.
RunConfig default_run_config();

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment.
/// Keys may also be written fully qualified (`workload.seed = 3`).
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

/// Every recognised key with its default, in documentation order.
std::vector<ConfigKey> config_keys();
std::string config_reference();

/// `key = value` for every key, in `config_keys()` order.
std::string canonical_config(const RunConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical form.
std::string config_hash(const RunConfig& cfg);

/// Parses an allow-list: `*`, or whitespace-separated `user:channel` entries
/// where either side may be `*`. User indices map to user MAC addresses.
AccessControl parse_access_rules(const std::string& rules);

}  // namespace iptvpon
