#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tracemark/common.hpp"
#include "tracemark/record.hpp"

namespace tracemark {

// ---------------------------------------------------------------------------
// 7-bit protocol encoding, positions (IPv4, TCP, UDP, TLS, HTTP, DNS, OTHER).

struct ProtocolBits {
    std::array<uint8_t, kProtocolCount> bits{};

    bool operator==(const ProtocolBits&) const = default;

    std::string to_string() const {
        std::string s(kProtocolCount, '0');
        for (int i = 0; i < kProtocolCount; ++i) s[i] = bits[i] ? '1' : '0';
        return s;
    }
};

inline ProtocolBits encode_protocol(const PacketRecord& r) {
    ProtocolBits b;
    for (Protocol p : r.protocol_stack) b.bits[static_cast<int>(p)] = 1;
    return b;
}

// ---------------------------------------------------------------------------

/// The per-packet representation <dport, protocol, direction, frame length,
/// time interval>. The label travels alongside, never inside.
struct FeatureVector {
    uint32_t dport = kNoPort;  // [0, 65536], 65536 = no-port sentinel
    ProtocolBits protocol;
    uint8_t direction = 1;  // 0 inbound, 1 outbound
    uint32_t frame_length = 0;
    double time_interval = 0.0;  // gap to the previous packet in the stream
};

struct FeatureStream {
    std::vector<FeatureVector> vectors;
    std::vector<std::string> labels;  // parallel; empty string when unlabeled
};

/// One vector per record; time_interval is the gap to the previous packet of
/// the stream (0 for the first). Records must be timestamp-sorted.
inline FeatureStream extract_features(const std::vector<PacketRecord>& records) {
    FeatureStream out;
    out.vectors.reserve(records.size());
    out.labels.reserve(records.size());
    double prev_ts = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        FeatureVector v;
        v.dport = r.dst_port ? *r.dst_port : kNoPort;
        v.protocol = encode_protocol(r);
        v.direction = r.direction == Direction::Outbound ? 1 : 0;
        v.frame_length = r.frame_length;
        v.time_interval = i == 0 ? 0.0 : r.timestamp - prev_ts;
        prev_ts = r.timestamp;
        out.vectors.push_back(v);
        out.labels.push_back(r.label.value_or(""));
    }
    return out;
}

/// Exactly one nonzero entry (=1) at index dport.
inline Eigen::VectorXd onehot_port(uint32_t dport, size_t dim = kPortSpan) {
    if (dport >= dim)
        throw DataError("dport " + std::to_string(dport) + " out of range [0, " +
                        std::to_string(dim - 1) + "]");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    v[static_cast<Eigen::Index>(dport)] = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// Bounded monotone normalization for the two numeric fields. frame_length is
// scaled against a 1500-byte MTU and clipped at 4 (jumbo tolerance);
// time_interval is log-compressed with a 300 s cap. Both transforms invert
// exactly below their caps.

struct Normalizer {
    double frame_scale = 1.0 / 1500.0;
    double frame_clip = 4.0;
    double interval_cap = 300.0;
    double interval_scale = 1.0 / std::log1p(300.0);

    double norm_frame(double bytes) const {
        double v = bytes * frame_scale;
        return v > frame_clip ? frame_clip : (v < 0.0 ? 0.0 : v);
    }
    double denorm_frame(double x) const { return x / frame_scale; }

    double norm_interval(double seconds) const {
        double v = seconds > interval_cap ? interval_cap : (seconds < 0.0 ? 0.0 : seconds);
        return std::log1p(v) * interval_scale;
    }
    double denorm_interval(double x) const { return std::expm1(x / interval_scale); }

    // The transforms are fixed by construction; fitting exists so folds own
    // their preprocessing state like they own the PCA basis.
    static Normalizer fit(const std::vector<FeatureVector>&) { return Normalizer{}; }
};

// ---------------------------------------------------------------------------
// Model-facing assemblies.

inline constexpr int kVpnFeatureDim = 3;

/// VPN-mode features: [direction, frame_length', time_interval'].
inline Eigen::VectorXd vpn_features(const FeatureVector& v, const Normalizer& norm) {
    Eigen::VectorXd out(kVpnFeatureDim);
    out[0] = v.direction;
    out[1] = norm.norm_frame(v.frame_length);
    out[2] = norm.norm_interval(v.time_interval);
    return out;
}

// ---------------------------------------------------------------------------
// Feature matrix serialization: CSV with a header row, and the compact
// binary form (magic "TMFV", u16 version, u32 rows, u32 cols, LE f32
// row-major payload).

inline const std::array<std::string, 11> kRawFeatureColumns = {
    "dport",      "proto_ipv4", "proto_tcp", "proto_udp",    "proto_tls",    "proto_http",
    "proto_dns",  "proto_other", "direction", "frame_length", "time_interval"};

inline Eigen::MatrixXf raw_feature_matrix(const std::vector<FeatureVector>& vectors) {
    Eigen::MatrixXf m(static_cast<Eigen::Index>(vectors.size()), 11);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto& v = vectors[static_cast<size_t>(i)];
        m(i, 0) = static_cast<float>(v.dport);
        for (int b = 0; b < kProtocolCount; ++b) m(i, 1 + b) = v.protocol.bits[b];
        m(i, 8) = v.direction;
        m(i, 9) = static_cast<float>(v.frame_length);
        m(i, 10) = static_cast<float>(v.time_interval);
    }
    return m;
}

inline std::vector<FeatureVector> feature_matrix_to_vectors(const Eigen::MatrixXf& m) {
    if (m.cols() != 11) throw DataError("raw feature matrix must have 11 columns");
    std::vector<FeatureVector> out(static_cast<size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto& v = out[static_cast<size_t>(i)];
        v.dport = static_cast<uint32_t>(m(i, 0));
        for (int b = 0; b < kProtocolCount; ++b) v.protocol.bits[b] = m(i, 1 + b) != 0.0f;
        v.direction = m(i, 8) != 0.0f;
        v.frame_length = static_cast<uint32_t>(m(i, 9));
        v.time_interval = m(i, 10);
    }
    return out;
}

inline void save_matrix_tmfv(const Eigen::MatrixXf& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature file: " + path);
    out.write("TMFV", 4);
    io::write_le<uint16_t>(out, 1);
    io::write_le<uint32_t>(out, static_cast<uint32_t>(m.rows()));
    io::write_le<uint32_t>(out, static_cast<uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_le<float>(out, m(i, j));
}

inline Eigen::MatrixXf load_matrix_tmfv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "TMFV") throw DataError("bad TMFV magic in " + path);
    auto version = io::read_le<uint16_t>(in);
    if (version != 1) throw DataError("unsupported TMFV version in " + path);
    auto rows = io::read_le<uint32_t>(in);
    auto cols = io::read_le<uint32_t>(in);
    Eigen::MatrixXf m(rows, cols);
    for (uint32_t i = 0; i < rows; ++i)
        for (uint32_t j = 0; j < cols; ++j) m(i, j) = io::read_le<float>(in);
    return m;
}

inline void save_matrix_csv(const Eigen::MatrixXf& m, const std::vector<std::string>& columns,
                            const std::string& path) {
    if (static_cast<Eigen::Index>(columns.size()) != m.cols())
        throw DataError("csv column count mismatch");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write csv: " + path);
    for (size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j];
    out << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(m(i, j)));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
}

inline void save_labels(const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write labels: " + path);
    for (const auto& l : labels) out << l << "\n";
}

inline std::vector<std::string> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels: " + path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) labels.push_back(line);
    return labels;
}

}  // namespace tracemark
