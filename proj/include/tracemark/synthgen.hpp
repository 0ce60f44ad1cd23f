#pragma once

// Deterministic synthetic smart-home traffic: per-device emission models
// (heartbeats, triggered bursts, bulk streams) merged into a labeled inner
// capture, plus the NAPT/VPN-morphed outer capture and the ground-truth
// outer->inner map.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracemark/capture.hpp"
#include "tracemark/common.hpp"
#include "tracemark/pcapio.hpp"
#include "tracemark/record.hpp"

namespace tracemark {

// Timestamps are quantized to the capture resolution at emission so a
// write/load round trip reproduces field values bit-exactly.
inline double quantize_us(double seconds) {
    return static_cast<double>(std::llround(seconds * 1e6)) * 1e-6;
}

struct HeartbeatSpec {
    double period_s = 30.0;
    double jitter_frac = 0.02;  // period perturbed by ±2% uniform
    std::vector<uint32_t> outbound_sizes;
    std::vector<uint32_t> inbound_sizes;  // responses, after the outbound run
    double intra_gap = 0.05;              // gap between packets of one beat
    pcapio::Transport transport = pcapio::Transport::Tcp;
    pcapio::AppKind app = pcapio::AppKind::Tls;
    uint16_t remote_port = 443;
};

struct BurstSpec {
    double trigger_rate = 0.05;  // Poisson triggers per second
    std::vector<std::pair<Direction, uint32_t>> sequence;
    std::vector<double> gaps;  // |sequence|-1 entries
    pcapio::Transport transport = pcapio::Transport::Tcp;
    pcapio::AppKind app = pcapio::AppKind::Raw;
    uint16_t remote_port = 443;
};

// One independently drawn packet shape inside a bulk stream.
struct PacketTemplate {
    Direction dir = Direction::Outbound;
    uint32_t size = 200;
    pcapio::Transport transport = pcapio::Transport::Udp;
    pcapio::AppKind app = pcapio::AppKind::Raw;
    uint16_t remote_port = 443;
    double weight = 1.0;
};

struct BulkSpec {
    double rate_pps = 10.0;  // Poisson arrivals
    std::vector<PacketTemplate> templates;
};

struct DeviceProfile {
    std::string device_id;
    DeviceCategory category = DeviceCategory::Plug;
    MacAddr mac;
    std::optional<HeartbeatSpec> heartbeat;
    std::optional<BurstSpec> burst;
    std::optional<BulkSpec> bulk;
    std::array<double, kProtocolCount> protocol_mix{};  // measured 7-way ratio

    void validate() const {
        double sum = 0.0;
        for (double p : protocol_mix) sum += p;
        if (std::abs(sum - 1.0) > 1e-6)
            throw DataError("profile " + device_id + ": protocol_mix must sum to 1");
        auto check_size = [&](uint32_t size, pcapio::Transport t, pcapio::AppKind app) {
            uint32_t min_len = t == pcapio::Transport::Tcp ? 54u : t == pcapio::Transport::Udp ? 42u : 34u;
            if (app == pcapio::AppKind::Tls) min_len = std::max(min_len, 59u);
            if (size < min_len)
                throw DataError("profile " + device_id + ": frame size " + std::to_string(size) +
                                " below minimum " + std::to_string(min_len));
        };
        if (heartbeat) {
            if (heartbeat->period_s <= 0.0) throw DataError("profile " + device_id + ": period must be > 0");
            for (auto s : heartbeat->outbound_sizes) check_size(s, heartbeat->transport, heartbeat->app);
            for (auto s : heartbeat->inbound_sizes) check_size(s, heartbeat->transport, heartbeat->app);
        }
        if (burst) {
            for (auto& [d, s] : burst->sequence) check_size(s, burst->transport, burst->app);
            if (!burst->sequence.empty() && burst->gaps.size() + 1 != burst->sequence.size())
                throw DataError("profile " + device_id + ": burst gaps must be |sequence|-1");
        }
        if (bulk)
            for (auto& t : bulk->templates) check_size(t.size, t.transport, t.app);
    }

    // Expected packets per active second, for sizing activations.
    double rate_estimate() const {
        double rate = 0.0;
        if (heartbeat)
            rate += (heartbeat->outbound_sizes.size() + heartbeat->inbound_sizes.size()) /
                    heartbeat->period_s;
        if (burst) rate += burst->trigger_rate * static_cast<double>(burst->sequence.size());
        if (bulk) rate += bulk->rate_pps;
        return rate;
    }
};

struct ActiveInterval {
    std::string device_id;
    double start = 0.0;
    double end = 0.0;
};

struct ScenarioConfig {
    double duration_s = 600.0;
    std::vector<ActiveInterval> activations;
    VisibilityMode mode = VisibilityMode::Napt;
    VpnConfig vpn;
    NaptConfig napt;
    double base_time = 1700000000.0;  // epoch seconds of t=0
    uint64_t seed = 1;

    void validate() const {
        if (duration_s <= 0.0) throw DataError("scenario duration must be > 0");
        for (const auto& a : activations) {
            if (a.start < 0.0 || a.end > duration_s || a.start >= a.end)
                throw DataError("activation for " + a.device_id + " outside scenario duration");
        }
        if (vpn.delay_min <= 0.0 || vpn.delay_max > 0.02 || vpn.delay_min > vpn.delay_max)
            throw DataError("vpn delay distribution must satisfy 0 < min <= max <= 0.02");
        if (vpn.block_size != 8 && vpn.block_size != 16)
            throw DataError("vpn block_size must be 8 or 16");
    }
};

// --- scenario JSON ----------------------------------------------------------

inline nlohmann::json scenario_to_json(const ScenarioConfig& s) {
    nlohmann::json j;
    j["duration"] = s.duration_s;
    j["mode"] = visibility_mode_name(s.mode);
    j["seed"] = s.seed;
    j["base_time"] = s.base_time;
    j["vpn"] = {{"block_size", s.vpn.block_size},
                {"header_overhead", s.vpn.header_overhead},
                {"pad_min", s.vpn.pad_min},
                {"delay_min", s.vpn.delay_min},
                {"delay_max", s.vpn.delay_max}};
    j["activations"] = nlohmann::json::array();
    for (const auto& a : s.activations)
        j["activations"].push_back({{"device", a.device_id}, {"start", a.start}, {"end", a.end}});
    return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig s;
    try {
        s.duration_s = j.at("duration").get<double>();
        s.mode = visibility_mode_from_name(j.at("mode").get<std::string>());
        if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
        if (j.contains("base_time")) s.base_time = j["base_time"].get<double>();
        if (j.contains("vpn")) {
            const auto& v = j["vpn"];
            if (v.contains("block_size")) s.vpn.block_size = v["block_size"].get<uint32_t>();
            if (v.contains("header_overhead")) s.vpn.header_overhead = v["header_overhead"].get<uint32_t>();
            if (v.contains("pad_min")) s.vpn.pad_min = v["pad_min"].get<uint32_t>();
            if (v.contains("delay_min")) s.vpn.delay_min = v["delay_min"].get<double>();
            if (v.contains("delay_max")) s.vpn.delay_max = v["delay_max"].get<double>();
        }
        for (const auto& a : j.at("activations"))
            s.activations.push_back({a.at("device").get<std::string>(), a.at("start").get<double>(),
                                     a.at("end").get<double>()});
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("bad scenario file: ") + ex.what());
    }
    s.validate();
    return s;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scenario: " + path);
    nlohmann::json j;
    in >> j;
    return scenario_from_json(j);
}

// --- builtin profiles -------------------------------------------------------

/// Device library modeled on measured smart-home behavior: fixed-size
/// periodic heartbeats, app-triggered bursts, high-rate camera streams and
/// chatty non-IoT endpoints.
inline std::vector<DeviceProfile> builtin_profiles() {
    using pcapio::AppKind;
    using pcapio::Transport;
    std::vector<DeviceProfile> out;

    {  // 95 B TLS heartbeat every 30 s; voice bursts open with a 120 B leader
        DeviceProfile d;
        d.device_id = "echo_dot";
        d.category = DeviceCategory::VoiceAssistant;
        d.mac = MacAddr::parse("88:71:e5:ed:be:c7");
        d.heartbeat = HeartbeatSpec{30.0, 0.02, {95}, {66}, 0.05, Transport::Tcp, AppKind::Tls, 443};
        BurstSpec b;
        b.trigger_rate = 1.0 / 45.0;
        b.sequence = {{Direction::Outbound, 120}, {Direction::Outbound, 66}, {Direction::Outbound, 66},
                      {Direction::Inbound, 1388}, {Direction::Inbound, 1388}};
        b.gaps = {0.04, 0.03, 0.08, 0.02};
        b.transport = Transport::Tcp;
        b.app = AppKind::Tls;
        b.remote_port = 443;
        d.burst = b;
        d.protocol_mix = {0.5, 0.35, 0.0, 0.15, 0.0, 0.0, 0.0};
        out.push_back(d);
    }
    {  // two consecutive heartbeat packets, 135 B then 104 B, every 60 s
        DeviceProfile d;
        d.device_id = "google_home";
        d.category = DeviceCategory::VoiceAssistant;
        d.mac = MacAddr::parse("f4:f5:d8:db:61:84");
        d.heartbeat = HeartbeatSpec{60.0, 0.02, {135, 104}, {}, 0.05, Transport::Tcp, AppKind::Tls, 5228};
        BurstSpec b;
        b.trigger_rate = 1.0 / 45.0;
        b.sequence = {{Direction::Outbound, 131}, {Direction::Outbound, 66}, {Direction::Outbound, 66},
                      {Direction::Inbound, 108}, {Direction::Inbound, 105}};
        b.gaps = {0.04, 0.03, 0.08, 0.02};
        b.transport = Transport::Tcp;
        b.app = AppKind::Tls;
        b.remote_port = 5228;
        d.burst = b;
        d.protocol_mix = {0.5, 0.3, 0.01, 0.13, 0.0, 0.006, 0.054};
        out.push_back(d);
    }
    {
        DeviceProfile d;
        d.device_id = "tmall_assist";
        d.category = DeviceCategory::VoiceAssistant;
        d.mac = MacAddr::parse("18:bc:5a:19:eb:7d");
        d.heartbeat = HeartbeatSpec{45.0, 0.02, {121}, {88}, 0.05, Transport::Tcp, AppKind::Tls, 443};
        BurstSpec b;
        b.trigger_rate = 1.0 / 50.0;
        b.sequence = {{Direction::Outbound, 210}, {Direction::Inbound, 540}, {Direction::Outbound, 210}};
        b.gaps = {0.05, 0.05};
        b.transport = Transport::Tcp;
        b.app = AppKind::Http;
        b.remote_port = 80;
        d.burst = b;
        d.protocol_mix = {0.45, 0.3, 0.0, 0.12, 0.08, 0.0, 0.05};
        out.push_back(d);
    }
    {  // UDP-only hub, steady small datagrams
        DeviceProfile d;
        d.device_id = "xiaomi_hub";
        d.category = DeviceCategory::Hub;
        d.mac = MacAddr::parse("78:11:dc:e1:f0:6b");
        d.heartbeat = HeartbeatSpec{5.0, 0.02, {106}, {90}, 0.03, Transport::Udp, AppKind::Raw, 54321};
        d.protocol_mix = {0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0};
        out.push_back(d);
    }
    {  // WAN-mode camera: high-rate UDP stream, 224 B frames dominate
        DeviceProfile d;
        d.device_id = "camera_360";
        d.category = DeviceCategory::Camera;
        d.mac = MacAddr::parse("b0:59:47:34:16:ff");
        BulkSpec bk;
        bk.rate_pps = 40.0;
        bk.templates = {{Direction::Outbound, 224, Transport::Udp, AppKind::Raw, 8600, 0.55},
                        {Direction::Outbound, 1400, Transport::Udp, AppKind::Raw, 8600, 0.25},
                        {Direction::Outbound, 1180, Transport::Udp, AppKind::Raw, 8600, 0.12},
                        {Direction::Inbound, 70, Transport::Udp, AppKind::Raw, 8600, 0.08}};
        d.bulk = bk;
        d.protocol_mix = {0.5, 0.0005, 0.4995, 0.0, 0.0, 0.0, 0.0};
        out.push_back(d);
    }
    {
        DeviceProfile d;
        d.device_id = "xiaobai_camera";
        d.category = DeviceCategory::Camera;
        d.mac = MacAddr::parse("78:11:dc:cf:c8:f1");
        BulkSpec bk;
        bk.rate_pps = 25.0;
        bk.templates = {{Direction::Outbound, 532, Transport::Udp, AppKind::Raw, 8700, 0.6},
                        {Direction::Outbound, 1024, Transport::Udp, AppKind::Raw, 8700, 0.3},
                        {Direction::Inbound, 86, Transport::Udp, AppKind::Raw, 8700, 0.1}};
        d.bulk = bk;
        d.protocol_mix = {0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0};
        out.push_back(d);
    }
    {  // sparse TLS heartbeat plug
        DeviceProfile d;
        d.device_id = "tplink_plug";
        d.category = DeviceCategory::Plug;
        d.mac = MacAddr::parse("30:20:10:fb:7c:05");
        d.heartbeat = HeartbeatSpec{60.0, 0.02, {83}, {71}, 0.06, Transport::Tcp, AppKind::Tls, 50443};
        d.protocol_mix = {0.5, 0.245, 0.0005, 0.25, 0.0, 0.0, 0.0045};
        out.push_back(d);
    }
    {  // 192/176 B heartbeat pair plus the 224/54/240 control triple
        DeviceProfile d;
        d.device_id = "orvibo_plug";
        d.category = DeviceCategory::Plug;
        d.mac = MacAddr::parse("b4:e6:2d:08:63:0c");
        d.heartbeat = HeartbeatSpec{30.0, 0.02, {192}, {176}, 0.06, Transport::Tcp, AppKind::Raw, 10002};
        BurstSpec b;
        b.trigger_rate = 1.0 / 12.0;
        b.sequence = {{Direction::Outbound, 224}, {Direction::Outbound, 54}, {Direction::Outbound, 240}};
        b.gaps = {0.8, 0.9};  // triple lands inside two seconds
        b.transport = Transport::Tcp;
        b.app = AppKind::Raw;
        b.remote_port = 10002;
        d.burst = b;
        d.protocol_mix = {0.5, 0.497, 0.001, 0.0, 0.0, 0.0, 0.002};
        out.push_back(d);
    }
    {  // UDP plug
        DeviceProfile d;
        d.device_id = "broadlink_plug";
        d.category = DeviceCategory::Plug;
        d.mac = MacAddr::parse("78:0f:77:1b:00:8c");
        d.heartbeat = HeartbeatSpec{15.0, 0.02, {74}, {74}, 0.04, Transport::Udp, AppKind::Raw, 16384};
        d.protocol_mix = {0.5, 0.0, 0.4985, 0.0, 0.0, 0.0, 0.0015};
        out.push_back(d);
    }
    {  // interactive story teller: TCP content bursts
        DeviceProfile d;
        d.device_id = "mitu_story";
        d.category = DeviceCategory::Interactive;
        d.mac = MacAddr::parse("28:6c:07:87:54:b0");
        BurstSpec b;
        b.trigger_rate = 1.0 / 20.0;
        b.sequence = {{Direction::Outbound, 180}, {Direction::Inbound, 1460}, {Direction::Inbound, 1460},
                      {Direction::Inbound, 980}, {Direction::Outbound, 60}};
        b.gaps = {0.05, 0.02, 0.02, 0.03};
        b.transport = Transport::Tcp;
        b.app = AppKind::Tls;
        b.remote_port = 443;
        d.burst = b;
        d.protocol_mix = {0.5, 0.35, 0.0, 0.15, 0.0, 0.0, 0.0};
        out.push_back(d);
    }
    {  // phone: high-volume mixed HTTP/TLS plus DNS and NTP
        DeviceProfile d;
        d.device_id = "xiaomi_mobile";
        d.category = DeviceCategory::NonIot;
        d.mac = MacAddr::parse("a4:50:46:06:80:43");
        BulkSpec bk;
        bk.rate_pps = 8.0;
        bk.templates = {{Direction::Outbound, 583, Transport::Tcp, AppKind::Tls, 443, 0.3},
                        {Direction::Inbound, 1420, Transport::Tcp, AppKind::Tls, 443, 0.25},
                        {Direction::Outbound, 412, Transport::Tcp, AppKind::Http, 80, 0.15},
                        {Direction::Inbound, 1180, Transport::Tcp, AppKind::Http, 80, 0.12},
                        {Direction::Outbound, 77, Transport::Udp, AppKind::Dns, 53, 0.06},
                        {Direction::Inbound, 150, Transport::Udp, AppKind::Dns, 53, 0.06},
                        {Direction::Outbound, 90, Transport::Udp, AppKind::Ntp, 123, 0.06}};
        d.bulk = bk;
        d.protocol_mix = {0.44, 0.4, 0.03, 0.02, 0.01, 0.01, 0.09};
        out.push_back(d);
    }
    {  // tablet: TCP-heavy, bursts of bare 54 B segments at 15 packets / 0.1 s
        DeviceProfile d;
        d.device_id = "xiaomi_tablet";
        d.category = DeviceCategory::NonIot;
        d.mac = MacAddr::parse("20:a6:0c:5a:42:10");
        BurstSpec b;
        b.trigger_rate = 0.5;
        b.sequence.assign(15, {Direction::Outbound, 54});
        b.gaps.assign(14, 0.0066);
        b.transport = Transport::Tcp;
        b.app = AppKind::Raw;
        b.remote_port = 443;
        d.burst = b;
        BulkSpec bk;
        bk.rate_pps = 3.0;
        bk.templates = {{Direction::Outbound, 620, Transport::Tcp, AppKind::Tls, 443, 0.5},
                        {Direction::Inbound, 1360, Transport::Tcp, AppKind::Tls, 443, 0.5}};
        d.bulk = bk;
        d.protocol_mix = {0.435, 0.432, 0.0025, 0.003, 0.0005, 0.0005, 0.065};
        out.push_back(d);
    }

    for (auto& p : out) p.validate();
    return out;
}

inline const DeviceProfile& find_profile(const std::vector<DeviceProfile>& profiles,
                                         const std::string& id) {
    for (const auto& p : profiles)
        if (p.device_id == id) return p;
    throw DataError("no profile for device: " + id);
}

// --- generation -------------------------------------------------------------

struct GenerateResult {
    DeviceManifest manifest;
    std::vector<PacketRecord> inner;       // labeled, timestamp-sorted
    std::vector<PacketRecord> outer;       // morphed view
    std::vector<size_t> outer_to_inner;    // ground truth
};

namespace synth_detail {

struct Endpoints {
    IpAddr device_ip, remote_ip;
    MacAddr device_mac, gateway_mac;
    uint16_t device_port;
};

inline PacketRecord emit(const Endpoints& ep, double t, Direction dir, uint32_t size,
                         pcapio::Transport transport, uint16_t remote_port,
                         const std::string& label, const ProtocolSet& stack) {
    PacketRecord r;
    r.timestamp = quantize_us(t);
    r.frame_length = size;
    r.direction = dir;
    r.side = Side::Inner;
    r.label = label;
    r.protocol_stack = stack;
    bool outbound = dir == Direction::Outbound;
    r.src_mac = outbound ? ep.device_mac : ep.gateway_mac;
    r.dst_mac = outbound ? ep.gateway_mac : ep.device_mac;
    r.src_ip = outbound ? ep.device_ip : ep.remote_ip;
    r.dst_ip = outbound ? ep.remote_ip : ep.device_ip;
    if (transport != pcapio::Transport::None) {
        r.src_port = outbound ? ep.device_port : remote_port;
        r.dst_port = outbound ? remote_port : ep.device_port;
    }
    return r;
}

inline ProtocolSet stack_for(pcapio::Transport transport, pcapio::AppKind app, uint32_t size) {
    ProtocolSet s{Protocol::IPv4};
    uint32_t header = 14 + 20 + (transport == pcapio::Transport::Tcp ? 20u : 8u);
    bool has_payload = size > header;
    switch (transport) {
        case pcapio::Transport::Tcp: s.insert(Protocol::TCP); break;
        case pcapio::Transport::Udp: s.insert(Protocol::UDP); break;
        default: s = {Protocol::IPv4, Protocol::OTHER}; return s;
    }
    if (!has_payload) return s;
    switch (app) {
        case pcapio::AppKind::Tls: s.insert(Protocol::TLS); break;
        case pcapio::AppKind::Http: s.insert(Protocol::HTTP); break;
        case pcapio::AppKind::Dns: s.insert(Protocol::DNS); break;
        case pcapio::AppKind::Ntp: s.insert(Protocol::OTHER); break;
        case pcapio::AppKind::Raw: break;
    }
    return s;
}

}  // namespace synth_detail

/// Manifest for the devices a scenario activates (gateway is a fixed RPi-like
/// identity on 192.168.0.0/24).
inline DeviceManifest scenario_manifest(const ScenarioConfig& scenario,
                                        const std::vector<DeviceProfile>& profiles) {
    DeviceManifest m;
    m.gateway_mac = MacAddr::parse("b8:27:eb:11:22:33");
    m.lan_cidr = Cidr::parse("192.168.0.0/24");
    std::vector<std::string> seen;
    for (const auto& a : scenario.activations) {
        if (std::find(seen.begin(), seen.end(), a.device_id) != seen.end()) continue;
        seen.push_back(a.device_id);
        const auto& p = find_profile(profiles, a.device_id);
        m.devices.push_back({p.device_id, p.mac, p.category});
    }
    m.validate();
    return m;
}

inline GenerateResult generate(const ScenarioConfig& scenario,
                               const std::vector<DeviceProfile>& profiles) {
    using namespace synth_detail;
    scenario.validate();
    GenerateResult result;
    result.manifest = scenario_manifest(scenario, profiles);

    for (const auto& a : scenario.activations) {
        const auto& profile = find_profile(profiles, a.device_id);
        size_t dev_idx = 0;
        for (; dev_idx < result.manifest.devices.size(); ++dev_idx)
            if (result.manifest.devices[dev_idx].device_id == a.device_id) break;

        Endpoints ep;
        ep.device_mac = profile.mac;
        ep.gateway_mac = result.manifest.gateway_mac;
        ep.device_ip = IpAddr{IpAddr::parse("192.168.0.10").value + static_cast<uint32_t>(dev_idx)};
        ep.remote_ip = IpAddr{IpAddr::parse("52.0.20.10").value + static_cast<uint32_t>(dev_idx)};
        ep.device_port = static_cast<uint16_t>(40000 + dev_idx);

        double t0 = scenario.base_time + a.start;
        double t1 = scenario.base_time + a.end;

        if (profile.heartbeat) {
            const auto& hb = *profile.heartbeat;
            Rng rng(scenario.seed ^ (0x9e3779b97f4a7c15ull * (dev_idx * 8 + 1)));
            double t = t0 + rng.uniform(0.0, hb.period_s);  // phase
            while (t < t1) {
                double pt = t;
                for (uint32_t size : hb.outbound_sizes) {
                    if (pt >= t1) break;
                    result.inner.push_back(emit(ep, pt, Direction::Outbound, size, hb.transport,
                                                hb.remote_port, profile.device_id,
                                                stack_for(hb.transport, hb.app, size)));
                    pt += hb.intra_gap;
                }
                for (uint32_t size : hb.inbound_sizes) {
                    if (pt >= t1) break;
                    result.inner.push_back(emit(ep, pt, Direction::Inbound, size, hb.transport,
                                                hb.remote_port, profile.device_id,
                                                stack_for(hb.transport, hb.app, size)));
                    pt += hb.intra_gap;
                }
                t += hb.period_s * (1.0 + hb.jitter_frac * rng.uniform(-1.0, 1.0));
            }
        }
        if (profile.burst) {
            const auto& b = *profile.burst;
            Rng rng(scenario.seed ^ (0x9e3779b97f4a7c15ull * (dev_idx * 8 + 2)));
            double t = t0 + rng.exp_gap(b.trigger_rate);
            while (t < t1) {
                double pt = t;
                for (size_t k = 0; k < b.sequence.size(); ++k) {
                    if (pt >= t1) break;
                    auto [dir, size] = b.sequence[k];
                    result.inner.push_back(emit(ep, pt, dir, size, b.transport, b.remote_port,
                                                profile.device_id, stack_for(b.transport, b.app, size)));
                    if (k + 1 < b.sequence.size()) pt += b.gaps[k];
                }
                t += rng.exp_gap(b.trigger_rate);
            }
        }
        if (profile.bulk) {
            const auto& bk = *profile.bulk;
            Rng rng(scenario.seed ^ (0x9e3779b97f4a7c15ull * (dev_idx * 8 + 3)));
            double total_weight = 0.0;
            for (const auto& tpl : bk.templates) total_weight += tpl.weight;
            double t = t0 + rng.exp_gap(bk.rate_pps);
            while (t < t1) {
                double pick = rng.uniform(0.0, total_weight);
                const PacketTemplate* chosen = &bk.templates.back();
                for (const auto& tpl : bk.templates) {
                    if (pick < tpl.weight) {
                        chosen = &tpl;
                        break;
                    }
                    pick -= tpl.weight;
                }
                result.inner.push_back(emit(ep, t, chosen->dir, chosen->size, chosen->transport,
                                            chosen->remote_port, profile.device_id,
                                            stack_for(chosen->transport, chosen->app, chosen->size)));
                t += rng.exp_gap(bk.rate_pps);
            }
        }
    }

    std::stable_sort(result.inner.begin(), result.inner.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });

    VisibilitySpec vis;
    vis.mode = scenario.mode;
    vis.napt = scenario.napt;
    vis.vpn = scenario.vpn;
    vis.seed = scenario.seed ^ 0xd1b54a32d192ed03ull;
    auto morph = apply_visibility(result.inner, result.manifest, vis);
    result.outer = std::move(morph.records);
    result.outer_to_inner = std::move(morph.source_index);
    return result;
}

// --- canned scenarios -------------------------------------------------------

/// One device active at a time, activation length sized so each device can
/// fill about `windows_per_device` windows of `window_size` packets.
inline ScenarioConfig pure_scenario(const std::vector<std::string>& device_ids,
                                    const std::vector<DeviceProfile>& profiles,
                                    size_t windows_per_device, size_t window_size,
                                    VisibilityMode mode, uint64_t seed) {
    ScenarioConfig s;
    s.mode = mode;
    s.seed = seed;
    double t = 0.0;
    for (const auto& id : device_ids) {
        const auto& p = find_profile(profiles, id);
        double rate = p.rate_estimate();
        if (rate <= 0.0) throw DataError("profile " + id + " emits no traffic");
        double span = static_cast<double>(windows_per_device * window_size) / rate * 1.12 + 60.0;
        s.activations.push_back({id, t, t + span});
        t += span;
    }
    s.duration_s = t;
    return s;
}

/// Every listed device active for the whole run (interleaved traffic).
inline ScenarioConfig noisy_scenario(const std::vector<std::string>& device_ids,
                                     double duration_s, VisibilityMode mode, uint64_t seed) {
    ScenarioConfig s;
    s.duration_s = duration_s;
    s.mode = mode;
    s.seed = seed;
    for (const auto& id : device_ids) s.activations.push_back({id, 0.0, duration_s});
    return s;
}

/// Scarce-traffic regression scene: orvibo triples drowned by camera UDP and
/// tablet 54 B chatter, so plug packets fall under 3% of a 100-packet window.
inline ScenarioConfig dilution_scenario(double duration_s = 2400.0, VisibilityMode mode = VisibilityMode::Napt,
                                        uint64_t seed = 11) {
    return noisy_scenario({"orvibo_plug", "camera_360", "xiaomi_tablet"}, duration_s, mode, seed);
}

// --- capture emission -------------------------------------------------------

inline pcapio::FrameSpec record_to_frame_spec(const PacketRecord& r) {
    pcapio::FrameSpec fs;
    if (r.src_mac) fs.src_mac = *r.src_mac;
    if (r.dst_mac) fs.dst_mac = *r.dst_mac;
    if (r.src_ip) fs.src_ip = *r.src_ip;
    if (r.dst_ip) fs.dst_ip = *r.dst_ip;
    fs.transport = r.protocol_stack.count(Protocol::TCP)   ? pcapio::Transport::Tcp
                   : r.protocol_stack.count(Protocol::UDP) ? pcapio::Transport::Udp
                                                           : pcapio::Transport::None;
    if (r.src_port) fs.src_port = *r.src_port;
    if (r.dst_port) fs.dst_port = *r.dst_port;
    if (r.protocol_stack.count(Protocol::TLS))
        fs.app = pcapio::AppKind::Tls;
    else if (r.protocol_stack.count(Protocol::HTTP))
        fs.app = pcapio::AppKind::Http;
    else if (r.protocol_stack.count(Protocol::DNS))
        fs.app = pcapio::AppKind::Dns;
    else
        fs.app = pcapio::AppKind::Raw;
    fs.frame_length = r.frame_length;
    return fs;
}

inline void write_capture_pcapng(const std::vector<PacketRecord>& records, const std::string& path) {
    std::vector<RawFrame> frames;
    frames.reserve(records.size());
    for (const auto& r : records)
        frames.push_back({r.timestamp, pcapio::craft_frame(record_to_frame_spec(r))});
    pcapio::write_pcapng(frames, path);
}

/// Writes inner.pcapng / outer.pcapng / truth.jsonl / manifest.json (and the
/// scenario echo) under dir.
inline void write_generate_outputs(const GenerateResult& result, const ScenarioConfig& scenario,
                                   const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_capture_pcapng(result.inner, (fs::path(dir) / "inner.pcapng").string());
    write_capture_pcapng(result.outer, (fs::path(dir) / "outer.pcapng").string());
    save_manifest(result.manifest, (fs::path(dir) / "manifest.json").string());
    std::ofstream truth(fs::path(dir) / "truth.jsonl");
    if (!truth) throw DataError("cannot write truth sidecar in " + dir);
    for (size_t o = 0; o < result.outer_to_inner.size(); ++o) {
        size_t i = result.outer_to_inner[o];
        nlohmann::json j;
        j["device_id"] = result.inner[i].label.value_or(kUnknownLabel);
        j["inner_idx"] = i;
        j["outer_idx"] = o;
        truth << j.dump() << "\n";
    }
    std::ofstream sc(fs::path(dir) / "scenario.json");
    sc << scenario_to_json(scenario).dump(2) << "\n";
}

struct TruthEntry {
    size_t outer_idx, inner_idx;
    std::string device_id;
};

inline std::vector<TruthEntry> load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open truth sidecar: " + path);
    std::vector<TruthEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        out.push_back({j.at("outer_idx").get<size_t>(), j.at("inner_idx").get<size_t>(),
                       j.at("device_id").get<std::string>()});
    }
    return out;
}

}  // namespace tracemark
