#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace iptvpon {

/// 15-bit logical link identifier carried in the frame preamble.
struct Llid {
    std::uint16_t value = 0;

    auto operator<=>(const Llid&) const = default;
};

inline constexpr std::uint16_t kLlidMask = 0x7FFF;
inline constexpr Llid kBroadcastLlid{kLlidMask};
/// Every 15-bit value except the broadcast one.
inline constexpr std::size_t kAllocatableLlids = 32767;

/// 16-bit preamble field: mode bit in the MSB, LLID in the low 15 bits.
struct FramePreamble {
    bool shared_medium = false;  // mode bit; 0 = point-to-point emulation
    Llid llid;

    std::uint16_t encode() const;
    static FramePreamble decode(std::uint16_t raw);
    bool operator==(const FramePreamble&) const = default;
};

using MacAddress = std::uint64_t;  // low 48 bits used
using Ipv4Address = std::uint32_t;

enum class ProtocolErrc {
    PoolExhausted,
    DuplicateMac,
    NotRegistered,
    ChannelExists,
    UnknownChannel,
    UnknownOnu,
    ChannelBusy,
    DuplicateRow,
    MissingRow,
    NotJoined,
    UnknownUser,
};

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ProtocolErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ProtocolErrc code() const { return code_; }

private:
    ProtocolErrc code_;
};

/// Shared pool for ONU LLIDs and channel LLIDs; hands out the lowest free value.
class LlidPool {
public:
    Llid allocate();
    void release(Llid id);
    bool is_allocated(Llid id) const;
    std::size_t allocated() const { return next_fresh_ - released_.size(); }
    std::size_t available() const { return kAllocatableLlids - allocated(); }

private:
    std::uint32_t next_fresh_ = 0;
    std::set<std::uint16_t> released_;  // always below next_fresh_
};

struct OnuTableRow {
    std::string channel_name;
    Llid channel_llid;
    MacAddress user_mac = 0;
    Ipv4Address user_ip = 0;  // kept for completeness; nothing reads it
};

struct OltTableRow {
    Llid channel_llid;
    std::string channel_name;
    std::set<Llid> onu_llids;
};

/// Head-end control plane: ONU registration and the channel/CLLID table.
class Olt {
public:
    /// REGISTER / REGISTER_ACK exchange; returns the new ONU LLID.
    Llid register_onu(MacAddress onu_mac);

    std::optional<Llid> request_llid(const std::string& channel) const;
    Llid add_llid(const std::string& channel);
    void add_onu(const std::string& channel, Llid onu_llid);
    /// Removes the ONU from the channel; stops the channel when it was the last one.
    void delete_onu(const std::string& channel, Llid onu_llid);
    void stop_channel(Llid cllid);

    /// Channels the OLT is currently multicasting, by CLLID.
    std::vector<Llid> multicasting() const;
    std::optional<std::string> channel_of(Llid cllid) const;

    const std::map<std::string, OltTableRow>& table() const { return table_; }
    const std::map<MacAddress, Llid>& registered() const { return registered_; }
    const LlidPool& pool() const { return pool_; }

private:
    LlidPool pool_;
    std::map<MacAddress, Llid> registered_;
    std::map<std::string, OltTableRow> table_;
    std::map<Llid, std::string> by_cllid_;
};

/// Subscriber-side control plane: the ONU routing table and frame filter.
class Onu {
public:
    explicit Onu(MacAddress mac) : mac_(mac) {}

    MacAddress mac() const { return mac_; }
    std::optional<Llid> llid() const { return llid_; }
    void assign_llid(Llid id) { llid_ = id; }

    /// True when the channel is already delivered to this ONU.
    bool check_local(const std::string& channel) const;
    void add_table(Llid cllid, const std::string& channel, MacAddress user_mac, Ipv4Address user_ip);
    void remove_table(Llid cllid, const std::string& channel, MacAddress user_mac);

    std::optional<Llid> cllid_for(const std::string& channel) const;
    std::size_t users_on(const std::string& channel) const;
    bool has_row(const std::string& channel, MacAddress user_mac) const;
    std::set<Llid> assigned_cllids() const;
    std::set<std::string> channels() const;

    bool frame_accept(const FramePreamble& p) const;

    const std::map<std::pair<std::string, MacAddress>, OnuTableRow>& table() const { return table_; }

private:
    MacAddress mac_;
    std::optional<Llid> llid_;
    std::map<std::pair<std::string, MacAddress>, OnuTableRow> table_;
    std::map<Llid, std::size_t> rows_per_cllid_;  // table rows per assigned CLLID
};

/// Locally administered MAC given to subscriber `user` (0-based).
inline MacAddress user_mac_address(std::uint32_t user) { return 0x0200'0000'0000ULL + user + 1; }

enum class AuthResult { Allow, Deny };

/// Static allow-list of (user, channel) pairs with optional wildcards.
class AccessControl {
public:
    static AccessControl allow_all();

    void allow(MacAddress user, const std::string& channel);
    void allow_user(MacAddress user);
    void allow_channel(const std::string& channel);
    void revoke(MacAddress user, const std::string& channel);

    AuthResult authenticate(const std::string& channel, MacAddress user) const;

private:
    bool everyone_ = false;
    std::set<std::pair<MacAddress, std::string>> pairs_;
    std::set<std::pair<MacAddress, std::string>> revoked_;
    std::set<MacAddress> users_;
    std::set<std::string> channels_;
};

enum class JoinOutcome { LocalJoin, OltJoin, Denied };

std::string_view to_string(JoinOutcome o);

/// One OLT, its ONUs and their users, with the join/leave orchestration
/// between the ONU IPTV controller and the OLT IPTV engine.
class IptvNetwork {
public:
    IptvNetwork(std::uint32_t n_onus, std::uint32_t users_per_onu,
                AccessControl access = AccessControl::allow_all());

    Llid register_onu(std::uint32_t onu_index);
    void register_all();

    JoinOutcome join_channel(std::uint32_t user, const std::string& channel);
    void leave_channel(std::uint32_t user, const std::string& channel);
    /// Withdraws authorisation; a user currently watching is torn down.
    bool revoke(std::uint32_t user, const std::string& channel);
    void grant(std::uint32_t user, const std::string& channel);

    bool is_joined(std::uint32_t user, const std::string& channel) const;
    std::uint32_t onu_of(std::uint32_t user) const;
    MacAddress user_mac(std::uint32_t user) const;
    Ipv4Address user_ip(std::uint32_t user) const;

    std::uint32_t n_users() const { return n_onus() * users_per_onu_; }
    std::uint32_t n_onus() const { return static_cast<std::uint32_t>(onus_.size()); }
    std::uint32_t users_per_onu() const { return users_per_onu_; }

    const Olt& olt() const { return olt_; }
    const Onu& onu(std::uint32_t i) const { return onus_.at(i); }
    const std::vector<Onu>& onus() const { return onus_; }
    std::uint64_t control_messages() const { return control_messages_; }

private:
    void check_user(std::uint32_t user) const;

    Olt olt_;
    std::vector<Onu> onus_;
    std::uint32_t users_per_onu_;
    AccessControl access_;
    std::uint64_t control_messages_ = 0;
};

/// Returns a description of the first violated invariant, if any: LLID
/// uniqueness and pool bound, ONU/OLT table consistency, multicast only for
/// subscribed channels, and per-channel frame delivery to exactly the
/// subscribed ONUs.
std::optional<std::string> check_invariants(const IptvNetwork& net);

struct ProtocolOp {
    enum class Kind { Register, Join, Leave, Revoke, Grant };
    Kind kind = Kind::Join;
    std::uint32_t target = 0;  // ONU index for Register, user index otherwise
    std::string channel;

    bool operator==(const ProtocolOp&) const = default;
};

struct ProtocolDims {
    std::uint32_t n_onus = 8;
    std::uint32_t users_per_onu = 4;
    std::uint32_t n_channels = 32;
};

/// Random register/join/leave/revoke/grant script; ONUs start unregistered.
std::vector<ProtocolOp> random_protocol_ops(std::uint64_t seed, std::size_t n, const ProtocolDims& dims);

/// CSV with header `op,target,channel`.
std::vector<ProtocolOp> parse_protocol_ops(std::istream& in);
void write_protocol_ops(std::ostream& out, const std::vector<ProtocolOp>& ops);

struct ProtocolCheckResult {
    bool ok = true;
    std::size_t steps = 0;     // operations replayed
    std::size_t rejected = 0;  // operations refused with a ProtocolError
    std::optional<std::size_t> failing_step;  // 0-based index of the first violation
    std::string message;
};

/// Replays the script, checking every invariant after each step and stopping
/// at the first violation. Registers no ONUs up front.
ProtocolCheckResult run_protocol_check(const std::vector<ProtocolOp>& ops, const ProtocolDims& dims);

}  // namespace iptvpon
