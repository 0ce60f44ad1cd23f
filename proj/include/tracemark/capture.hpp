#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "tracemark/common.hpp"
#include "tracemark/pcapio.hpp"
#include "tracemark/record.hpp"

namespace tracemark {

enum class VisibilityMode : uint8_t { Napt = 0, Vpn = 1 };

inline const char* visibility_mode_name(VisibilityMode m) {
    return m == VisibilityMode::Napt ? "napt" : "vpn";
}

inline VisibilityMode visibility_mode_from_name(const std::string& s) {
    if (s == "napt") return VisibilityMode::Napt;
    if (s == "vpn") return VisibilityMode::Vpn;
    throw UsageError("unknown visibility mode: " + s + " (expected napt|vpn)");
}

struct LoadResult {
    std::vector<PacketRecord> records;
    size_t skipped = 0;
};

/// Parses a pcap/pcapng file into normalized records, sorted by timestamp
/// (stable: equal stamps keep file order). Malformed frames are dropped and
/// counted.
inline LoadResult load_capture(const std::string& path, Side side) {
    auto cap = pcapio::read_file(path);
    LoadResult out;
    out.skipped = cap.skipped;
    out.records.reserve(cap.frames.size());
    for (const auto& f : cap.frames) {
        auto rec = pcapio::parse_frame(f, side);
        if (rec)
            out.records.push_back(std::move(*rec));
        else
            ++out.skipped;
    }
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
    return out;
}

/// Direction rule: the endpoint inside the manifest's LAN subnet is the local
/// one; frames whose addressing carries no LAN IP (outer captures) fall back
/// to the gateway MAC. Works identically on synthetic and real captures.
inline Direction compute_direction(const PacketRecord& r, const DeviceManifest& m) {
    if (r.src_ip && m.lan_cidr.contains(*r.src_ip)) return Direction::Outbound;
    if (r.dst_ip && m.lan_cidr.contains(*r.dst_ip)) return Direction::Inbound;
    if (r.src_mac && *r.src_mac == m.gateway_mac)
        return r.side == Side::Outer ? Direction::Outbound : Direction::Inbound;
    if (r.dst_mac && *r.dst_mac == m.gateway_mac)
        return r.side == Side::Outer ? Direction::Inbound : Direction::Outbound;
    return Direction::Outbound;
}

inline void assign_directions(std::vector<PacketRecord>& records, const DeviceManifest& m) {
    for (auto& r : records) r.direction = compute_direction(r, m);
}

/// Labels inner-side records with the manifest device owning the non-gateway
/// MAC. Unmatched packets get the `unknown` label.
inline void assign_labels(std::vector<PacketRecord>& records, const DeviceManifest& m) {
    for (auto& r : records) {
        const DeviceManifest::Entry* hit = nullptr;
        // direction-appropriate endpoint first
        const auto& first = r.direction == Direction::Outbound ? r.src_mac : r.dst_mac;
        const auto& second = r.direction == Direction::Outbound ? r.dst_mac : r.src_mac;
        if (first && !(*first == m.gateway_mac)) hit = m.find_mac(*first);
        if (!hit && second && !(*second == m.gateway_mac)) hit = m.find_mac(*second);
        r.label = hit ? hit->device_id : kUnknownLabel;
    }
}

// ---------------------------------------------------------------------------
// Visibility morphing: rewrite an inner capture into what the adversary sees
// on the WAN side of the gateway.

struct NaptConfig {
    IpAddr wan_ip = IpAddr::parse("203.0.113.2");
    MacAddr upstream_mac = MacAddr::parse("02:00:5e:00:00:01");
    uint16_t ephemeral_base = 49152;
};

struct VpnConfig {
    IpAddr server_ip = IpAddr::parse("198.51.100.7");
    uint16_t tunnel_port = 1194;
    uint16_t local_port = 52000;
    // UDP-mode tunnel arithmetic: outer = overhead + ceil((len+pad_min)/block)*block.
    // Defaults model AES-128-CBC; all configurable.
    uint32_t block_size = 16;
    uint32_t header_overhead = 53;
    uint32_t pad_min = 1;
    double delay_min = 0.001;
    double delay_max = 0.015;
};

struct VisibilitySpec {
    VisibilityMode mode = VisibilityMode::Napt;
    NaptConfig napt;
    VpnConfig vpn;
    uint64_t seed = 1;
};

struct VisibilityResult {
    std::vector<PacketRecord> records;            // outer view, timestamp-sorted
    std::vector<size_t> source_index;             // outer i -> index into the input
};

inline uint32_t vpn_outer_length(uint32_t inner_length, const VpnConfig& cfg) {
    uint32_t padded = (inner_length + cfg.pad_min + cfg.block_size - 1) / cfg.block_size * cfg.block_size;
    return cfg.header_overhead + padded;
}

inline VisibilityResult apply_visibility(const std::vector<PacketRecord>& inner,
                                         const DeviceManifest& m, const VisibilitySpec& spec) {
    VisibilityResult out;
    out.records.reserve(inner.size());
    out.source_index.reserve(inner.size());
    Rng rng(spec.seed);

    // NAPT translation table: device-side (ip, port) x remote (ip, port, proto)
    // -> ephemeral port, assigned sequentially.
    std::map<std::tuple<uint32_t, uint16_t, uint32_t, uint16_t, int>, uint16_t> table;
    uint16_t next_ephemeral = spec.napt.ephemeral_base;

    for (size_t i = 0; i < inner.size(); ++i) {
        PacketRecord r = inner[i];
        bool outbound = r.direction == Direction::Outbound;
        r.side = Side::Outer;
        r.label.reset();  // ground truth travels out-of-band

        if (spec.mode == VisibilityMode::Napt) {
            auto local_ip = outbound ? r.src_ip : r.dst_ip;
            auto local_port = outbound ? r.src_port : r.dst_port;
            auto remote_ip = outbound ? r.dst_ip : r.src_ip;
            auto remote_port = outbound ? r.dst_port : r.src_port;
            int proto = r.protocol_stack.count(Protocol::TCP) ? 6
                        : r.protocol_stack.count(Protocol::UDP) ? 17
                                                                : 0;
            std::optional<uint16_t> mapped;
            if (local_ip && local_port && remote_ip && remote_port) {
                auto key = std::make_tuple(local_ip->value, *local_port, remote_ip->value,
                                           *remote_port, proto);
                auto it = table.find(key);
                if (it == table.end()) it = table.emplace(key, next_ephemeral++).first;
                mapped = it->second;
            }
            if (outbound) {
                r.src_mac = m.gateway_mac;
                r.src_ip = spec.napt.wan_ip;
                if (mapped) r.src_port = mapped;
                r.dst_mac = spec.napt.upstream_mac;
            } else {
                r.dst_mac = m.gateway_mac;
                r.dst_ip = spec.napt.wan_ip;
                if (mapped) r.dst_port = mapped;
                r.src_mac = spec.napt.upstream_mac;
            }
        } else {
            // VPN: every inner packet rides in exactly one tunnel datagram.
            double delay = rng.uniform(spec.vpn.delay_min, spec.vpn.delay_max);
            r.frame_length = vpn_outer_length(inner[i].frame_length, spec.vpn);
            r.protocol_stack = {Protocol::IPv4, Protocol::UDP};
            if (outbound) {
                // inner observed at wlan0 first, tunnel datagram leaves later
                r.timestamp = inner[i].timestamp + delay;
                r.src_mac = m.gateway_mac;
                r.dst_mac = spec.napt.upstream_mac;
                r.src_ip = spec.napt.wan_ip;
                r.dst_ip = spec.vpn.server_ip;
                r.src_port = spec.vpn.local_port;
                r.dst_port = spec.vpn.tunnel_port;
            } else {
                // tunnel datagram arrives before the decapsulated inner copy
                r.timestamp = inner[i].timestamp - delay;
                r.src_mac = spec.napt.upstream_mac;
                r.dst_mac = m.gateway_mac;
                r.src_ip = spec.vpn.server_ip;
                r.dst_ip = spec.napt.wan_ip;
                r.src_port = spec.vpn.tunnel_port;
                r.dst_port = spec.vpn.local_port;
            }
        }
        out.records.push_back(std::move(r));
        out.source_index.push_back(i);
    }

    // restore capture order after VPN timestamp shifts
    std::vector<size_t> order(out.records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return out.records[a].timestamp < out.records[b].timestamp;
    });
    VisibilityResult sorted;
    sorted.records.reserve(out.records.size());
    sorted.source_index.reserve(out.records.size());
    for (size_t idx : order) {
        sorted.records.push_back(std::move(out.records[idx]));
        sorted.source_index.push_back(out.source_index[idx]);
    }
    return sorted;
}

}  // namespace tracemark
