#include "iptvpon/cllid_protocol.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "iptvpon/numfmt.hpp"
#include "iptvpon/workload.hpp"

namespace iptvpon {

namespace {

std::string llid_text(Llid id) { return std::to_string(id.value); }

}  // namespace

std::uint16_t FramePreamble::encode() const {
    return static_cast<std::uint16_t>((shared_medium ? 0x8000 : 0) | (llid.value & kLlidMask));
}

FramePreamble FramePreamble::decode(std::uint16_t raw) {
    return {(raw & 0x8000) != 0, Llid{static_cast<std::uint16_t>(raw & kLlidMask)}};
}

// ---------------------------------------------------------------------------

Llid LlidPool::allocate() {
    if (!released_.empty()) {
        auto v = *released_.begin();
        released_.erase(released_.begin());
        return Llid{v};
    }
    if (next_fresh_ >= kAllocatableLlids)
        throw ProtocolError(ProtocolErrc::PoolExhausted, "all 32767 LLIDs are in use");
    return Llid{static_cast<std::uint16_t>(next_fresh_++)};
}

void LlidPool::release(Llid id) {
    if (!is_allocated(id))
        throw std::logic_error("releasing LLID " + llid_text(id) + " that is not allocated");
    if (id.value + 1u == next_fresh_) {
        --next_fresh_;
        // Keep released_ strictly below the fresh watermark.
        while (!released_.empty() && *released_.rbegin() + 1u == next_fresh_) {
            released_.erase(std::prev(released_.end()));
            --next_fresh_;
        }
    } else {
        released_.insert(id.value);
    }
}

bool LlidPool::is_allocated(Llid id) const {
    return id.value < next_fresh_ && released_.count(id.value) == 0;
}

// ---------------------------------------------------------------------------

Llid Olt::register_onu(MacAddress onu_mac) {
    if (registered_.count(onu_mac))
        throw ProtocolError(ProtocolErrc::DuplicateMac, "ONU MAC already registered");
    Llid id = pool_.allocate();
    registered_.emplace(onu_mac, id);
    return id;
}

std::optional<Llid> Olt::request_llid(const std::string& channel) const {
    auto it = table_.find(channel);
    if (it == table_.end()) return std::nullopt;
    return it->second.channel_llid;
}

Llid Olt::add_llid(const std::string& channel) {
    if (table_.count(channel))
        throw ProtocolError(ProtocolErrc::ChannelExists, "channel " + channel + " already has a CLLID");
    Llid id = pool_.allocate();
    table_.emplace(channel, OltTableRow{id, channel, {}});
    by_cllid_.emplace(id, channel);
    return id;
}

void Olt::add_onu(const std::string& channel, Llid onu_llid) {
    auto it = table_.find(channel);
    if (it == table_.end())
        throw ProtocolError(ProtocolErrc::UnknownChannel, "no CLLID for channel " + channel);
    it->second.onu_llids.insert(onu_llid);
}

void Olt::delete_onu(const std::string& channel, Llid onu_llid) {
    auto it = table_.find(channel);
    if (it == table_.end())
        throw ProtocolError(ProtocolErrc::UnknownChannel, "no CLLID for channel " + channel);
    if (it->second.onu_llids.erase(onu_llid) == 0)
        throw ProtocolError(ProtocolErrc::UnknownOnu,
                            "ONU " + llid_text(onu_llid) + " is not subscribed to " + channel);
    if (it->second.onu_llids.empty()) stop_channel(it->second.channel_llid);
}

void Olt::stop_channel(Llid cllid) {
    auto name = by_cllid_.find(cllid);
    if (name == by_cllid_.end())
        throw ProtocolError(ProtocolErrc::UnknownChannel, "unknown CLLID " + llid_text(cllid));
    auto row = table_.find(name->second);
    if (!row->second.onu_llids.empty())
        throw ProtocolError(ProtocolErrc::ChannelBusy,
                            "channel " + name->second + " still has subscribed ONUs");
    table_.erase(row);
    by_cllid_.erase(name);
    pool_.release(cllid);
}

std::vector<Llid> Olt::multicasting() const {
    std::vector<Llid> out;
    for (const auto& [name, row] : table_)
        if (!row.onu_llids.empty()) out.push_back(row.channel_llid);
    return out;
}

std::optional<std::string> Olt::channel_of(Llid cllid) const {
    auto it = by_cllid_.find(cllid);
    if (it == by_cllid_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------

bool Onu::check_local(const std::string& channel) const { return users_on(channel) > 0; }

void Onu::add_table(Llid cllid, const std::string& channel, MacAddress user_mac,
                    Ipv4Address user_ip) {
    if (auto existing = cllid_for(channel); existing && *existing != cllid)
        throw std::logic_error("channel " + channel + " bound to two CLLIDs on one ONU");
    auto [it, inserted] = table_.emplace(std::pair{channel, user_mac},
                                         OnuTableRow{channel, cllid, user_mac, user_ip});
    if (!inserted)
        throw ProtocolError(ProtocolErrc::DuplicateRow, "user already joined " + channel);
    ++rows_per_cllid_[cllid];
}

void Onu::remove_table(Llid cllid, const std::string& channel, MacAddress user_mac) {
    auto it = table_.find({channel, user_mac});
    if (it == table_.end() || it->second.channel_llid != cllid)
        throw ProtocolError(ProtocolErrc::MissingRow, "no table row for user on " + channel);
    table_.erase(it);
    if (--rows_per_cllid_[cllid] == 0) rows_per_cllid_.erase(cllid);
}

std::optional<Llid> Onu::cllid_for(const std::string& channel) const {
    auto it = table_.lower_bound({channel, 0});
    if (it == table_.end() || it->first.first != channel) return std::nullopt;
    return it->second.channel_llid;
}

std::size_t Onu::users_on(const std::string& channel) const {
    std::size_t n = 0;
    for (auto it = table_.lower_bound({channel, 0}); it != table_.end() && it->first.first == channel; ++it)
        ++n;
    return n;
}

bool Onu::has_row(const std::string& channel, MacAddress user_mac) const {
    return table_.count({channel, user_mac}) != 0;
}

std::set<Llid> Onu::assigned_cllids() const {
    std::set<Llid> out;
    for (const auto& [id, rows] : rows_per_cllid_) out.insert(id);
    return out;
}

std::set<std::string> Onu::channels() const {
    std::set<std::string> out;
    for (const auto& [key, row] : table_) out.insert(row.channel_name);
    return out;
}

bool Onu::frame_accept(const FramePreamble& p) const {
    if (p.shared_medium) return true;
    if (p.llid == kBroadcastLlid) return true;
    if (llid_ && p.llid == *llid_) return true;
    return rows_per_cllid_.count(p.llid) != 0;
}

// ---------------------------------------------------------------------------

AccessControl AccessControl::allow_all() {
    AccessControl a;
    a.everyone_ = true;
    return a;
}

void AccessControl::allow(MacAddress user, const std::string& channel) {
    revoked_.erase({user, channel});
    pairs_.insert({user, channel});
}

void AccessControl::allow_user(MacAddress user) { users_.insert(user); }
void AccessControl::allow_channel(const std::string& channel) { channels_.insert(channel); }

void AccessControl::revoke(MacAddress user, const std::string& channel) {
    pairs_.erase({user, channel});
    revoked_.insert({user, channel});
}

AuthResult AccessControl::authenticate(const std::string& channel, MacAddress user) const {
    if (revoked_.count({user, channel})) return AuthResult::Deny;
    if (everyone_ || pairs_.count({user, channel}) || users_.count(user) || channels_.count(channel))
        return AuthResult::Allow;
    return AuthResult::Deny;
}

std::string_view to_string(JoinOutcome o) {
    switch (o) {
    case JoinOutcome::LocalJoin: return "local";
    case JoinOutcome::OltJoin: return "olt";
    case JoinOutcome::Denied: return "denied";
    }
    return "?";
}

// ---------------------------------------------------------------------------

IptvNetwork::IptvNetwork(std::uint32_t n_onus, std::uint32_t users_per_onu, AccessControl access)
    : users_per_onu_(users_per_onu), access_(std::move(access)) {
    if (n_onus < 1 || users_per_onu < 1)
        throw std::invalid_argument("network needs at least one ONU and one user per ONU");
    onus_.reserve(n_onus);
    for (std::uint32_t i = 0; i < n_onus; ++i) onus_.emplace_back(0x00AA'0000'0000ULL + i);
}

Llid IptvNetwork::register_onu(std::uint32_t onu_index) {
    if (onu_index >= onus_.size())
        throw ProtocolError(ProtocolErrc::UnknownOnu, "no ONU " + std::to_string(onu_index));
    Onu& onu = onus_[onu_index];
    Llid id = olt_.register_onu(onu.mac());
    onu.assign_llid(id);
    control_messages_ += 2;  // REGISTER, REGISTER_ACK
    return id;
}

void IptvNetwork::register_all() {
    for (std::uint32_t i = 0; i < onus_.size(); ++i)
        if (!onus_[i].llid()) register_onu(i);
}

void IptvNetwork::check_user(std::uint32_t user) const {
    if (user >= n_users())
        throw ProtocolError(ProtocolErrc::UnknownUser, "no user " + std::to_string(user));
}

std::uint32_t IptvNetwork::onu_of(std::uint32_t user) const {
    check_user(user);
    return user / users_per_onu_;
}

MacAddress IptvNetwork::user_mac(std::uint32_t user) const { return user_mac_address(user); }

Ipv4Address IptvNetwork::user_ip(std::uint32_t user) const {
    return (10u << 24) + user + 1;
}

bool IptvNetwork::is_joined(std::uint32_t user, const std::string& channel) const {
    return onus_.at(onu_of(user)).has_row(channel, user_mac(user));
}

JoinOutcome IptvNetwork::join_channel(std::uint32_t user, const std::string& channel) {
    Onu& onu = onus_[onu_of(user)];
    if (!onu.llid())
        throw ProtocolError(ProtocolErrc::NotRegistered, "user's ONU is not registered");
    const MacAddress mac = user_mac(user);
    if (onu.has_row(channel, mac))
        throw ProtocolError(ProtocolErrc::DuplicateRow, "user already joined " + channel);

    if (access_.authenticate(channel, mac) == AuthResult::Deny) return JoinOutcome::Denied;

    if (onu.check_local(channel)) {
        onu.add_table(*onu.cllid_for(channel), channel, mac, user_ip(user));
        return JoinOutcome::LocalJoin;
    }

    // Forwarded to the OLT engine: Request_LLID, Add_LLID if needed, Add_ONU,
    // then the metadata round trip back to the ONU.
    auto cllid = olt_.request_llid(channel);
    if (!cllid) cllid = olt_.add_llid(channel);
    olt_.add_onu(channel, *onu.llid());
    onu.add_table(*cllid, channel, mac, user_ip(user));
    control_messages_ += 2;
    return JoinOutcome::OltJoin;
}

void IptvNetwork::leave_channel(std::uint32_t user, const std::string& channel) {
    Onu& onu = onus_[onu_of(user)];
    const MacAddress mac = user_mac(user);
    if (!onu.has_row(channel, mac))
        throw ProtocolError(ProtocolErrc::NotJoined, "user is not watching " + channel);
    onu.remove_table(*onu.cllid_for(channel), channel, mac);
    if (!onu.check_local(channel)) {
        olt_.delete_onu(channel, *onu.llid());
        control_messages_ += 1;
    }
}

bool IptvNetwork::revoke(std::uint32_t user, const std::string& channel) {
    check_user(user);
    access_.revoke(user_mac(user), channel);
    if (!is_joined(user, channel)) return false;
    leave_channel(user, channel);
    return true;
}

void IptvNetwork::grant(std::uint32_t user, const std::string& channel) {
    check_user(user);
    access_.allow(user_mac(user), channel);
}

// ---------------------------------------------------------------------------

std::optional<std::string> check_invariants(const IptvNetwork& net) {
    const Olt& olt = net.olt();
    std::string why;

    // LLID uniqueness and pool accounting.
    std::vector<bool> seen(std::size_t{1} << 15);
    std::size_t count = 0;
    auto note = [&](Llid id, const char* what) -> bool {
        ++count;
        if (id == kBroadcastLlid || seen[id.value] || !olt.pool().is_allocated(id)) {
            why = std::string(what) + " LLID " + std::to_string(id.value) + " duplicated, broadcast or unallocated";
            return false;
        }
        seen[id.value] = true;
        return true;
    };
    for (const auto& [mac, id] : olt.registered())
        if (!note(id, "ONU")) return why;
    for (const auto& [name, row] : olt.table())
        if (!note(row.channel_llid, "channel")) return why;
    if (count != olt.pool().allocated())
        return "pool reports " + std::to_string(olt.pool().allocated()) + " LLIDs, tables hold " +
               std::to_string(count);
    if (count > kAllocatableLlids) return "more than 32767 LLIDs allocated";

    for (std::uint32_t i = 0; i < net.n_onus(); ++i) {
        const Onu& onu = net.onu(i);
        auto reg = olt.registered().find(onu.mac());
        const bool registered = reg != olt.registered().end();
        if (registered != onu.llid().has_value() || (registered && reg->second != *onu.llid()))
            return "ONU " + std::to_string(i) + " LLID disagrees with OLT registration";
        if (!registered && !onu.table().empty())
            return "unregistered ONU " + std::to_string(i) + " has table rows";
    }

    // Multicast exactly the subscribed channels.
    std::size_t memberships = 0;
    for (const auto& [name, row] : olt.table()) {
        if (row.onu_llids.empty())
            return "channel " + name + " has a CLLID but no subscribed ONU";
        memberships += row.onu_llids.size();
    }

    // Per ONU: rows <=> OLT subscription <=> joined users, and frame acceptance.
    // Both tables are ordered by channel name, so one merge pass covers each ONU.
    std::size_t matched = 0;
    for (std::uint32_t i = 0; i < net.n_onus(); ++i) {
        const Onu& onu = net.onu(i);
        auto r = onu.table().begin();
        const auto r_end = onu.table().end();
        for (const auto& [name, row] : olt.table()) {
            if (r != r_end && r->first.first < name)
                return "ONU " + std::to_string(i) + " carries " + r->first.first + " unknown to OLT";
            bool has_users = false;
            for (; r != r_end && r->first.first == name; ++r) {
                if (r->second.channel_llid != row.channel_llid)
                    return "ONU " + std::to_string(i) + " CLLID for " + name + " disagrees with OLT";
                has_users = true;
            }
            const bool subscribed = onu.llid() && row.onu_llids.count(*onu.llid());
            if (has_users && !subscribed)
                return "ONU " + std::to_string(i) + " has users on " + name + " but is not subscribed at the OLT";
            if (subscribed && !has_users)
                return "OLT subscribes ONU " + std::to_string(i) + " to " + name + " without users";
            if (onu.frame_accept(FramePreamble{false, row.channel_llid}) != subscribed)
                return "ONU " + std::to_string(i) + (subscribed ? " rejects " : " accepts ") + "frames of " + name;
            matched += subscribed;
        }
        if (r != r_end) return "ONU " + std::to_string(i) + " carries " + r->first.first + " unknown to OLT";
    }
    if (matched != memberships) return "OLT channel table lists an unknown ONU LLID";
    return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<ProtocolOp> random_protocol_ops(std::uint64_t seed, std::size_t n,
                                            const ProtocolDims& dims) {
    std::mt19937_64 rng(seed);
    const std::uint32_t n_users = dims.n_onus * dims.users_per_onu;
    auto pick = [&](std::uint32_t k) {
        return std::min(static_cast<std::uint32_t>(uniform01(rng) * k), k - 1);
    };
    // Shadow membership so most leaves target real subscriptions.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> joined;

    std::vector<ProtocolOp> ops;
    ops.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = uniform01(rng);
        ProtocolOp op;
        if (r < 0.05) {
            op.kind = ProtocolOp::Kind::Register;
            op.target = pick(dims.n_onus);
        } else if (r < 0.50) {
            op.kind = ProtocolOp::Kind::Join;
            op.target = pick(n_users);
            const auto ch = pick(dims.n_channels);
            op.channel = channel_name(ch);
            joined.emplace_back(op.target, ch);
        } else if (r < 0.90) {
            op.kind = ProtocolOp::Kind::Leave;
            if (!joined.empty() && uniform01(rng) < 0.9) {
                const auto k = pick(static_cast<std::uint32_t>(joined.size()));
                op.target = joined[k].first;
                op.channel = channel_name(joined[k].second);
                joined[k] = joined.back();
                joined.pop_back();
            } else {
                op.target = pick(n_users);
                op.channel = channel_name(pick(dims.n_channels));
            }
        } else if (r < 0.95) {
            op.kind = ProtocolOp::Kind::Revoke;
            op.target = pick(n_users);
            op.channel = channel_name(pick(dims.n_channels));
        } else {
            op.kind = ProtocolOp::Kind::Grant;
            op.target = pick(n_users);
            op.channel = channel_name(pick(dims.n_channels));
        }
        ops.push_back(std::move(op));
    }
    return ops;
}

namespace {

std::string_view op_name(ProtocolOp::Kind k) {
    switch (k) {
    case ProtocolOp::Kind::Register: return "register";
    case ProtocolOp::Kind::Join: return "join";
    case ProtocolOp::Kind::Leave: return "leave";
    case ProtocolOp::Kind::Revoke: return "revoke";
    case ProtocolOp::Kind::Grant: return "grant";
    }
    return "?";
}

}  // namespace

std::vector<ProtocolOp> parse_protocol_ops(std::istream& in) {
    std::vector<ProtocolOp> ops;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            if (line != "op,target,channel")
                throw std::invalid_argument("line " + std::to_string(lineno) +
                                            ": expected header 'op,target,channel'");
            have_header = true;
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
            throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 3 fields");
        const std::string name = line.substr(0, c1);
        auto target = parse_number<std::uint32_t>(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
        if (!target) throw std::invalid_argument("line " + std::to_string(lineno) + ": bad target");

        ProtocolOp op;
        op.target = *target;
        op.channel = line.substr(c2 + 1);
        if (name == "register") op.kind = ProtocolOp::Kind::Register;
        else if (name == "join") op.kind = ProtocolOp::Kind::Join;
        else if (name == "leave") op.kind = ProtocolOp::Kind::Leave;
        else if (name == "revoke") op.kind = ProtocolOp::Kind::Revoke;
        else if (name == "grant") op.kind = ProtocolOp::Kind::Grant;
        else throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown op '" + name + "'");
        if (op.kind != ProtocolOp::Kind::Register && op.channel.empty())
            throw std::invalid_argument("line " + std::to_string(lineno) + ": channel required");
        ops.push_back(std::move(op));
    }
    return ops;
}

void write_protocol_ops(std::ostream& out, const std::vector<ProtocolOp>& ops) {
    out << "op,target,channel\n";
    for (const auto& op : ops) out << op_name(op.kind) << ',' << op.target << ',' << op.channel << '\n';
}

ProtocolCheckResult run_protocol_check(const std::vector<ProtocolOp>& ops, const ProtocolDims& dims) {
    IptvNetwork net(dims.n_onus, dims.users_per_onu);
    ProtocolCheckResult result;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const auto& op = ops[i];
        try {
            switch (op.kind) {
            case ProtocolOp::Kind::Register: net.register_onu(op.target); break;
            case ProtocolOp::Kind::Join: net.join_channel(op.target, op.channel); break;
            case ProtocolOp::Kind::Leave: net.leave_channel(op.target, op.channel); break;
            case ProtocolOp::Kind::Revoke: net.revoke(op.target, op.channel); break;
            case ProtocolOp::Kind::Grant: net.grant(op.target, op.channel); break;
            }
        } catch (const ProtocolError&) {
            ++result.rejected;
        } catch (const std::exception& e) {
            result.ok = false;
            result.failing_step = i;
            result.message = std::string(op_name(op.kind)) + " raised: " + e.what();
            result.steps = i + 1;
            return result;
        }
        result.steps = i + 1;
        if (auto violation = check_invariants(net)) {
            result.ok = false;
            result.failing_step = i;
            result.message = *violation;
            return result;
        }
    }
    return result;
}

}  // namespace iptvpon
