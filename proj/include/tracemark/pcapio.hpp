#pragma once

// Minimal pcap / pcapng I/O for Ethernet captures, plus IPv4/TCP/UDP frame
// crafting and parsing. Only what the toolkit needs: classic pcap (µs and ns
// magics, both byte orders) and the pcapng SHB/IDB/EPB subset with µs
// timestamps.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tracemark/common.hpp"
#include "tracemark/record.hpp"

namespace tracemark {

struct RawFrame {
    double timestamp = 0.0;  // seconds since epoch
    std::vector<uint8_t> bytes;
};

struct CaptureFile {
    std::vector<RawFrame> frames;
    size_t skipped = 0;  // truncated or malformed entries dropped
};

namespace pcapio {

inline constexpr uint32_t kPcapMagicUs = 0xa1b2c3d4;
inline constexpr uint32_t kPcapMagicNs = 0xa1b23c4d;
inline constexpr uint32_t kPcapngShb = 0x0a0d0d0a;
inline constexpr uint32_t kPcapngByteOrder = 0x1a2b3c4d;

namespace detail {

inline uint16_t get16(const uint8_t* p, bool swap) {
    uint16_t v = static_cast<uint16_t>(p[0]) | static_cast<uint16_t>(p[1]) << 8;
    return swap ? static_cast<uint16_t>(v >> 8 | v << 8) : v;
}

inline uint32_t get32(const uint8_t* p, bool swap) {
    uint32_t v = static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
                 static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    if (!swap) return v;
    return v >> 24 | (v >> 8 & 0xff00) | (v << 8 & 0xff0000) | v << 24;
}

inline std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open capture file: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

// --- readers ---------------------------------------------------------------

inline CaptureFile read_pcap_bytes(const std::vector<uint8_t>& data) {
    using namespace detail;
    if (data.size() < 24) throw DataError("pcap file too short for global header");
    uint32_t magic_raw = get32(data.data(), false);
    bool swap = false;
    bool nanos = false;
    if (magic_raw == kPcapMagicUs) {
    } else if (magic_raw == kPcapMagicNs) {
        nanos = true;
    } else if (get32(data.data(), true) == kPcapMagicUs) {
        swap = true;
    } else if (get32(data.data(), true) == kPcapMagicNs) {
        swap = true;
        nanos = true;
    } else {
        throw DataError("not a pcap file (bad magic)");
    }

    CaptureFile out;
    size_t off = 24;
    while (off < data.size()) {
        if (off + 16 > data.size()) {
            ++out.skipped;  // partial record header at EOF
            break;
        }
        uint32_t ts_sec = get32(data.data() + off, swap);
        uint32_t ts_frac = get32(data.data() + off + 4, swap);
        uint32_t incl = get32(data.data() + off + 8, swap);
        off += 16;
        if (off + incl > data.size()) {
            ++out.skipped;  // truncated final record
            break;
        }
        RawFrame f;
        f.timestamp = ts_sec + ts_frac * (nanos ? 1e-9 : 1e-6);
        f.bytes.assign(data.begin() + off, data.begin() + off + incl);
        out.frames.push_back(std::move(f));
        off += incl;
    }
    return out;
}

inline CaptureFile read_pcapng_bytes(const std::vector<uint8_t>& data) {
    using namespace detail;
    CaptureFile out;
    bool swap = false;
    double tsresol = 1e-6;  // default per spec is 10^-6
    size_t off = 0;
    bool have_shb = false;
    while (off + 12 <= data.size()) {
        uint32_t type = get32(data.data() + off, swap);
        if (!have_shb) {
            if (type != kPcapngShb) throw DataError("not a pcapng file (no section header)");
            uint32_t bom = get32(data.data() + off + 8, false);
            if (bom == kPcapngByteOrder) {
                swap = false;
            } else if (get32(data.data() + off + 8, true) == kPcapngByteOrder) {
                swap = true;
            } else {
                throw DataError("pcapng: bad byte-order magic");
            }
            have_shb = true;
            type = get32(data.data() + off, swap);
        }
        uint32_t total_len = get32(data.data() + off + 4, swap);
        if (total_len < 12 || total_len % 4 != 0 || off + total_len > data.size()) {
            ++out.skipped;  // truncated trailing block
            break;
        }
        const uint8_t* body = data.data() + off + 8;
        uint32_t body_len = total_len - 12;
        if (type == 0x00000001 && body_len >= 8) {  // IDB: scan options for if_tsresol
            tsresol = 1e-6;
            size_t opt = 8;
            while (opt + 4 <= body_len) {
                uint16_t code = get16(body + opt, swap);
                uint16_t len = get16(body + opt + 2, swap);
                if (code == 0) break;
                if (code == 9 && len >= 1) {
                    uint8_t r = body[opt + 4];
                    tsresol = (r & 0x80) ? std::pow(2.0, -(r & 0x7f)) : std::pow(10.0, -r);
                }
                opt += 4 + (len + 3u) / 4u * 4u;
            }
        } else if (type == 0x00000006 && body_len >= 20) {  // EPB
            uint64_t ts = (static_cast<uint64_t>(get32(body + 4, swap)) << 32) | get32(body + 8, swap);
            uint32_t caplen = get32(body + 12, swap);
            if (20 + caplen > body_len) {
                ++out.skipped;
                off += total_len;
                continue;
            }
            RawFrame f;
            f.timestamp = static_cast<double>(ts) * tsresol;
            f.bytes.assign(body + 20, body + 20 + caplen);
            out.frames.push_back(std::move(f));
        }
        // other block types (NRB, ISB, SPB...) are skipped
        off += total_len;
    }
    if (!have_shb) throw DataError("not a pcapng file (empty)");
    return out;
}

/// Reads a capture file, auto-detecting pcap vs pcapng by magic.
inline CaptureFile read_file(const std::string& path) {
    auto data = detail::slurp(path);
    if (data.size() < 4) throw DataError("capture file too short: " + path);
    uint32_t first = detail::get32(data.data(), false);
    if (first == kPcapngShb) return read_pcapng_bytes(data);
    return read_pcap_bytes(data);
}

// --- writers ---------------------------------------------------------------

inline void write_pcapng(const std::vector<RawFrame>& frames, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write capture file: " + path);
    auto u32 = [&](uint32_t v) { io::write_le<uint32_t>(out, v); };
    auto u16 = [&](uint16_t v) { io::write_le<uint16_t>(out, v); };
    // SHB
    u32(kPcapngShb);
    u32(28);
    u32(kPcapngByteOrder);
    u16(1);
    u16(0);
    io::write_le<uint64_t>(out, 0xffffffffffffffffull);
    u32(28);
    // IDB: Ethernet, default µs resolution, no snap limit
    u32(0x00000001);
    u32(20);
    u16(1);
    u16(0);
    u32(0);
    u32(20);
    for (const auto& f : frames) {
        uint64_t ts = static_cast<uint64_t>(std::llround(f.timestamp * 1e6));
        uint32_t caplen = static_cast<uint32_t>(f.bytes.size());
        uint32_t padded = (caplen + 3u) / 4u * 4u;
        uint32_t total = 32 + padded;
        u32(0x00000006);
        u32(total);
        u32(0);
        u32(static_cast<uint32_t>(ts >> 32));
        u32(static_cast<uint32_t>(ts & 0xffffffffu));
        u32(caplen);
        u32(caplen);
        out.write(reinterpret_cast<const char*>(f.bytes.data()), caplen);
        for (uint32_t i = caplen; i < padded; ++i) out.put('\0');
        u32(total);
    }
}

inline void write_pcap(const std::vector<RawFrame>& frames, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write capture file: " + path);
    auto u32 = [&](uint32_t v) { io::write_le<uint32_t>(out, v); };
    u32(kPcapMagicUs);
    io::write_le<uint16_t>(out, 2);
    io::write_le<uint16_t>(out, 4);
    u32(0);
    u32(0);
    u32(65535);
    u32(1);  // LINKTYPE_ETHERNET
    for (const auto& f : frames) {
        uint64_t us = static_cast<uint64_t>(std::llround(f.timestamp * 1e6));
        u32(static_cast<uint32_t>(us / 1000000));
        u32(static_cast<uint32_t>(us % 1000000));
        u32(static_cast<uint32_t>(f.bytes.size()));
        u32(static_cast<uint32_t>(f.bytes.size()));
        out.write(reinterpret_cast<const char*>(f.bytes.data()), static_cast<std::streamsize>(f.bytes.size()));
    }
}

// --- frame crafting --------------------------------------------------------

enum class Transport : uint8_t { None, Tcp, Udp };

// Application payload classes the generator can emit. Recognition on the
// parse side maps them back into the 7-protocol universe.
enum class AppKind : uint8_t { Raw, Tls, Http, Dns, Ntp };

struct FrameSpec {
    MacAddr src_mac, dst_mac;
    IpAddr src_ip, dst_ip;
    Transport transport = Transport::Tcp;
    uint16_t src_port = 0, dst_port = 0;
    AppKind app = AppKind::Raw;
    uint32_t frame_length = 60;  // total Ethernet frame bytes to emit
};

namespace detail {

inline void put16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

inline void put32(std::vector<uint8_t>& v, uint32_t x) {
    put16(v, static_cast<uint16_t>(x >> 16));
    put16(v, static_cast<uint16_t>(x & 0xffff));
}

inline uint16_t ip_checksum(const uint8_t* data, size_t len) {
    uint32_t sum = 0;
    for (size_t i = 0; i + 1 < len; i += 2) sum += static_cast<uint32_t>(data[i]) << 8 | data[i + 1];
    if (len & 1) sum += static_cast<uint32_t>(data[len - 1]) << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

}  // namespace detail

/// Builds an Ethernet/IPv4 frame of exactly spec.frame_length bytes (payload
/// is stuffed with a deterministic filler). Minimum lengths: 54 for TCP, 42
/// for UDP, 34 for bare IPv4.
inline std::vector<uint8_t> craft_frame(const FrameSpec& spec) {
    using namespace detail;
    uint32_t header_len = 14 + 20;
    if (spec.transport == Transport::Tcp) header_len += 20;
    if (spec.transport == Transport::Udp) header_len += 8;
    if (spec.frame_length < header_len)
        throw DataError("frame_length " + std::to_string(spec.frame_length) + " below header size " +
                        std::to_string(header_len));
    uint32_t payload_len = spec.frame_length - header_len;

    std::vector<uint8_t> payload;
    payload.reserve(payload_len);
    switch (spec.app) {
        case AppKind::Tls:
            if (payload_len >= 5) {
                payload.push_back(0x17);  // application_data
                payload.push_back(0x03);
                payload.push_back(0x03);
                put16(payload, static_cast<uint16_t>(payload_len - 5));
            }
            break;
        case AppKind::Http: {
            const std::string req = "GET / HTTP/1.1\r\n";
            for (char c : req) {
                if (payload.size() >= payload_len) break;
                payload.push_back(static_cast<uint8_t>(c));
            }
            break;
        }
        default:
            break;
    }
    uint8_t filler = 0x5a;
    while (payload.size() < payload_len) payload.push_back(filler++);

    std::vector<uint8_t> frame;
    frame.reserve(spec.frame_length);
    // Ethernet
    frame.insert(frame.end(), spec.dst_mac.bytes.begin(), spec.dst_mac.bytes.end());
    frame.insert(frame.end(), spec.src_mac.bytes.begin(), spec.src_mac.bytes.end());
    put16(frame, 0x0800);
    // IPv4
    size_t ip_off = frame.size();
    frame.push_back(0x45);
    frame.push_back(0);
    put16(frame, static_cast<uint16_t>(spec.frame_length - 14));
    put16(frame, 0);
    put16(frame, 0x4000);  // DF
    frame.push_back(64);
    frame.push_back(spec.transport == Transport::Udp   ? 17
                    : spec.transport == Transport::Tcp ? 6
                                                       : 253);
    put16(frame, 0);  // checksum, filled below
    put32(frame, spec.src_ip.value);
    put32(frame, spec.dst_ip.value);
    uint16_t csum = ip_checksum(frame.data() + ip_off, 20);
    frame[ip_off + 10] = static_cast<uint8_t>(csum >> 8);
    frame[ip_off + 11] = static_cast<uint8_t>(csum & 0xff);
    // transport
    if (spec.transport == Transport::Tcp) {
        put16(frame, spec.src_port);
        put16(frame, spec.dst_port);
        put32(frame, 0);
        put32(frame, 0);
        frame.push_back(0x50);
        frame.push_back(payload.empty() ? 0x10 : 0x18);  // ACK / PSH+ACK
        put16(frame, 0xffff);
        put16(frame, 0);
        put16(frame, 0);
    } else if (spec.transport == Transport::Udp) {
        put16(frame, spec.src_port);
        put16(frame, spec.dst_port);
        put16(frame, static_cast<uint16_t>(8 + payload.size()));
        put16(frame, 0);
    }
    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

// --- frame parsing ---------------------------------------------------------

/// Decodes an Ethernet frame into a PacketRecord, tagging protocols from the
/// network/transport/application layers only. Returns nullopt for frames too
/// short to carry the headers they claim (counted as malformed by callers).
inline std::optional<PacketRecord> parse_frame(const RawFrame& raw, Side side) {
    const auto& b = raw.bytes;
    if (b.size() < 14) return std::nullopt;
    PacketRecord r;
    r.timestamp = raw.timestamp;
    r.frame_length = static_cast<uint32_t>(b.size());
    r.side = side;
    MacAddr dst, src;
    std::copy(b.begin(), b.begin() + 6, dst.bytes.begin());
    std::copy(b.begin() + 6, b.begin() + 12, src.bytes.begin());
    r.dst_mac = dst;
    r.src_mac = src;
    uint16_t ethertype = static_cast<uint16_t>(b[12]) << 8 | b[13];

    if (ethertype != 0x0800) {
        // ARP, IPv6, ...: outside the recognized universe
        r.protocol_stack.insert(Protocol::OTHER);
        return r;
    }
    if (b.size() < 14 + 20) return std::nullopt;
    const uint8_t* ip = b.data() + 14;
    if ((ip[0] >> 4) != 4) {
        r.protocol_stack.insert(Protocol::OTHER);
        return r;
    }
    uint32_t ihl = static_cast<uint32_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || b.size() < 14 + ihl) return std::nullopt;
    r.protocol_stack.insert(Protocol::IPv4);
    r.src_ip = IpAddr{static_cast<uint32_t>(ip[12]) << 24 | static_cast<uint32_t>(ip[13]) << 16 |
                      static_cast<uint32_t>(ip[14]) << 8 | ip[15]};
    r.dst_ip = IpAddr{static_cast<uint32_t>(ip[16]) << 24 | static_cast<uint32_t>(ip[17]) << 16 |
                      static_cast<uint32_t>(ip[18]) << 8 | ip[19]};
    uint8_t proto = ip[9];
    const uint8_t* tp = ip + ihl;
    size_t tp_len = b.size() - 14 - ihl;

    const uint8_t* payload = nullptr;
    size_t payload_len = 0;
    if (proto == 6) {  // TCP
        if (tp_len < 20) return std::nullopt;
        uint32_t data_off = static_cast<uint32_t>(tp[12] >> 4) * 4;
        if (data_off < 20 || tp_len < data_off) return std::nullopt;
        r.protocol_stack.insert(Protocol::TCP);
        r.src_port = static_cast<uint16_t>(tp[0] << 8 | tp[1]);
        r.dst_port = static_cast<uint16_t>(tp[2] << 8 | tp[3]);
        payload = tp + data_off;
        payload_len = tp_len - data_off;
    } else if (proto == 17) {  // UDP
        if (tp_len < 8) return std::nullopt;
        r.protocol_stack.insert(Protocol::UDP);
        r.src_port = static_cast<uint16_t>(tp[0] << 8 | tp[1]);
        r.dst_port = static_cast<uint16_t>(tp[2] << 8 | tp[3]);
        payload = tp + 8;
        payload_len = tp_len - 8;
    } else {
        // ICMP and friends
        r.protocol_stack.insert(Protocol::OTHER);
        return r;
    }

    if (payload_len > 0) {
        uint16_t sp = *r.src_port, dp = *r.dst_port;
        bool is_tls = payload_len >= 5 && payload[0] >= 0x14 && payload[0] <= 0x17 &&
                      payload[1] == 0x03 && payload[2] <= 0x04;
        if (sp == 53 || dp == 53) {
            r.protocol_stack.insert(Protocol::DNS);
        } else if (proto == 6 && is_tls) {
            r.protocol_stack.insert(Protocol::TLS);
        } else if (proto == 6 && (sp == 80 || dp == 80)) {
            r.protocol_stack.insert(Protocol::HTTP);
        } else if (sp == 123 || dp == 123 || sp == 1900 || dp == 1900) {
            // NTP / SSDP: recognized, outside the 6-protocol set
            r.protocol_stack.insert(Protocol::OTHER);
        }
        // opaque payloads add no application tag
    }
    return r;
}

}  // namespace pcapio
}  // namespace tracemark
