#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracemark/common.hpp"

namespace tracemark {

// Protocol universe measured at network/transport/application layers.
// Bit positions everywhere follow this order.
enum class Protocol : uint8_t { IPv4 = 0, TCP, UDP, TLS, HTTP, DNS, OTHER };
inline constexpr int kProtocolCount = 7;

inline const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::IPv4: return "IPv4";
        case Protocol::TCP: return "TCP";
        case Protocol::UDP: return "UDP";
        case Protocol::TLS: return "TLS";
        case Protocol::HTTP: return "HTTP";
        case Protocol::DNS: return "DNS";
        case Protocol::OTHER: return "OTHER";
    }
    return "OTHER";
}

inline std::optional<Protocol> protocol_from_name(const std::string& s) {
    for (int i = 0; i < kProtocolCount; ++i) {
        auto p = static_cast<Protocol>(i);
        if (s == protocol_name(p)) return p;
    }
    return std::nullopt;
}

using ProtocolSet = std::set<Protocol>;

// Port value one past the valid range marks "no transport port" (e.g. ICMP),
// giving downstream encoders a dedicated symbol.
inline constexpr uint32_t kNoPort = 65536;
inline constexpr uint32_t kPortSpan = 65537;  // 0..65535 plus the sentinel

// ---------------------------------------------------------------------------

struct MacAddr {
    std::array<uint8_t, 6> bytes{};

    auto operator<=>(const MacAddr&) const = default;

    std::string to_string() const {
        char buf[18];
        std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1],
                      bytes[2], bytes[3], bytes[4], bytes[5]);
        return buf;
    }

    static MacAddr parse(const std::string& s) {
        MacAddr m;
        unsigned v[6];
        if (std::sscanf(s.c_str(), "%x:%x:%x:%x:%x:%x", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5]) != 6)
            throw DataError("bad MAC address: " + s);
        for (int i = 0; i < 6; ++i) {
            if (v[i] > 0xff) throw DataError("bad MAC address: " + s);
            m.bytes[i] = static_cast<uint8_t>(v[i]);
        }
        return m;
    }
};

// IPv4 address in host byte order.
struct IpAddr {
    uint32_t value = 0;

    auto operator<=>(const IpAddr&) const = default;

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (value >> 24) & 0xff, (value >> 16) & 0xff,
                      (value >> 8) & 0xff, value & 0xff);
        return buf;
    }

    static IpAddr parse(const std::string& s) {
        unsigned a, b, c, d;
        if (std::sscanf(s.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d) != 4 || a > 255 || b > 255 ||
            c > 255 || d > 255)
            throw DataError("bad IPv4 address: " + s);
        return IpAddr{(a << 24) | (b << 16) | (c << 8) | d};
    }
};

// IPv4 CIDR block, e.g. 192.168.0.0/24.
struct Cidr {
    IpAddr base;
    int prefix = 0;

    bool contains(IpAddr ip) const {
        if (prefix == 0) return true;
        uint32_t mask = prefix >= 32 ? 0xffffffffu : ~((1u << (32 - prefix)) - 1);
        return (ip.value & mask) == (base.value & mask);
    }

    std::string to_string() const { return base.to_string() + "/" + std::to_string(prefix); }

    static Cidr parse(const std::string& s) {
        auto slash = s.find('/');
        if (slash == std::string::npos) throw DataError("bad CIDR: " + s);
        Cidr c;
        c.base = IpAddr::parse(s.substr(0, slash));
        c.prefix = std::stoi(s.substr(slash + 1));
        if (c.prefix < 0 || c.prefix > 32) throw DataError("bad CIDR prefix: " + s);
        return c;
    }
};

enum class Direction : uint8_t { Inbound = 0, Outbound = 1 };
enum class Side : uint8_t { Inner = 0, Outer = 1 };

enum class DeviceCategory : uint8_t { VoiceAssistant, Hub, Camera, Plug, Interactive, NonIot };

inline const char* category_name(DeviceCategory c) {
    switch (c) {
        case DeviceCategory::VoiceAssistant: return "voice_assistant";
        case DeviceCategory::Hub: return "hub";
        case DeviceCategory::Camera: return "camera";
        case DeviceCategory::Plug: return "plug";
        case DeviceCategory::Interactive: return "interactive";
        case DeviceCategory::NonIot: return "non_iot";
    }
    return "non_iot";
}

inline DeviceCategory category_from_name(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(DeviceCategory::NonIot); ++i) {
        auto c = static_cast<DeviceCategory>(i);
        if (s == category_name(c)) return c;
    }
    throw DataError("unknown device category: " + s);
}

inline const std::string kUnknownLabel = "unknown";

// ---------------------------------------------------------------------------

/// One captured packet, normalized. timestamp is seconds since epoch with
/// microsecond precision.
struct PacketRecord {
    double timestamp = 0.0;
    uint32_t frame_length = 0;
    std::optional<MacAddr> src_mac, dst_mac;
    std::optional<IpAddr> src_ip, dst_ip;
    std::optional<uint16_t> src_port, dst_port;
    ProtocolSet protocol_stack;
    Direction direction = Direction::Outbound;
    std::optional<std::string> label;
    Side side = Side::Inner;
};

/// Maps LAN identity (MACs, subnet) to device ids; drives labeling and the
/// direction rule.
struct DeviceManifest {
    struct Entry {
        std::string device_id;
        MacAddr mac;
        DeviceCategory category = DeviceCategory::NonIot;
    };

    MacAddr gateway_mac;
    Cidr lan_cidr;
    std::vector<Entry> devices;

    void validate() const {
        if (devices.empty()) throw DataError("device manifest has no entries");
        std::set<std::string> ids;
        std::set<MacAddr> macs;
        for (const auto& e : devices) {
            if (!ids.insert(e.device_id).second)
                throw DataError("duplicate device_id in manifest: " + e.device_id);
            if (!macs.insert(e.mac).second)
                throw DataError("duplicate MAC in manifest: " + e.mac.to_string());
        }
    }

    const Entry* find_mac(const MacAddr& mac) const {
        for (const auto& e : devices)
            if (e.mac == mac) return &e;
        return nullptr;
    }

    const Entry* find_id(const std::string& id) const {
        for (const auto& e : devices)
            if (e.device_id == id) return &e;
        return nullptr;
    }
};

// --- manifest JSON ---------------------------------------------------------

inline nlohmann::json manifest_to_json(const DeviceManifest& m) {
    nlohmann::json j;
    j["gateway_mac"] = m.gateway_mac.to_string();
    j["lan_cidr"] = m.lan_cidr.to_string();
    j["devices"] = nlohmann::json::array();
    for (const auto& e : m.devices) {
        j["devices"].push_back(
            {{"id", e.device_id}, {"mac", e.mac.to_string()}, {"category", category_name(e.category)}});
    }
    return j;
}

inline DeviceManifest manifest_from_json(const nlohmann::json& j) {
    DeviceManifest m;
    try {
        m.gateway_mac = MacAddr::parse(j.at("gateway_mac").get<std::string>());
        m.lan_cidr = Cidr::parse(j.at("lan_cidr").get<std::string>());
        for (const auto& d : j.at("devices")) {
            DeviceManifest::Entry e;
            e.device_id = d.at("id").get<std::string>();
            e.mac = MacAddr::parse(d.at("mac").get<std::string>());
            e.category = category_from_name(d.at("category").get<std::string>());
            m.devices.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("bad device manifest: ") + ex.what());
    }
    m.validate();
    return m;
}

inline DeviceManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    in >> j;
    return manifest_from_json(j);
}

inline void save_manifest(const DeviceManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << manifest_to_json(m).dump(2) << "\n";
}

// --- record JSONL ----------------------------------------------------------
// One record per line, keys in lexicographic order (nlohmann's default map
// ordering); golden files in the tests pin the exact bytes.

inline nlohmann::json record_to_json(const PacketRecord& r) {
    nlohmann::json j;
    j["direction"] = r.direction == Direction::Outbound ? "outbound" : "inbound";
    if (r.dst_ip) j["dst_ip"] = r.dst_ip->to_string();
    if (r.dst_mac) j["dst_mac"] = r.dst_mac->to_string();
    if (r.dst_port) j["dst_port"] = *r.dst_port;
    j["frame_length"] = r.frame_length;
    if (r.label) j["label"] = *r.label;
    auto protocols = nlohmann::json::array();
    for (int i = 0; i < kProtocolCount; ++i) {
        auto p = static_cast<Protocol>(i);
        if (r.protocol_stack.count(p)) protocols.push_back(protocol_name(p));
    }
    j["protocols"] = std::move(protocols);
    j["side"] = r.side == Side::Inner ? "inner" : "outer";
    if (r.src_ip) j["src_ip"] = r.src_ip->to_string();
    if (r.src_mac) j["src_mac"] = r.src_mac->to_string();
    if (r.src_port) j["src_port"] = *r.src_port;
    j["timestamp"] = r.timestamp;
    return j;
}

inline PacketRecord record_from_json(const nlohmann::json& j) {
    PacketRecord r;
    r.direction = j.at("direction").get<std::string>() == "outbound" ? Direction::Outbound
                                                                     : Direction::Inbound;
    if (j.contains("dst_ip")) r.dst_ip = IpAddr::parse(j["dst_ip"].get<std::string>());
    if (j.contains("dst_mac")) r.dst_mac = MacAddr::parse(j["dst_mac"].get<std::string>());
    if (j.contains("dst_port")) r.dst_port = j["dst_port"].get<uint16_t>();
    r.frame_length = j.at("frame_length").get<uint32_t>();
    if (j.contains("label")) r.label = j["label"].get<std::string>();
    for (const auto& p : j.at("protocols")) {
        auto proto = protocol_from_name(p.get<std::string>());
        if (proto) r.protocol_stack.insert(*proto);
    }
    r.side = j.at("side").get<std::string>() == "inner" ? Side::Inner : Side::Outer;
    if (j.contains("src_ip")) r.src_ip = IpAddr::parse(j["src_ip"].get<std::string>());
    if (j.contains("src_mac")) r.src_mac = MacAddr::parse(j["src_mac"].get<std::string>());
    if (j.contains("src_port")) r.src_port = j["src_port"].get<uint16_t>();
    r.timestamp = j.at("timestamp").get<double>();
    return r;
}

inline void save_records_jsonl(const std::vector<PacketRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write records: " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

inline std::vector<PacketRecord> load_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open records: " + path);
    std::vector<PacketRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad record: " + ex.what());
        }
    }
    return records;
}

}  // namespace tracemark
