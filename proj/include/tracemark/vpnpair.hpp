#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracemark/common.hpp"
#include "tracemark/record.hpp"

namespace tracemark {

struct PairingResult {
    std::vector<std::pair<size_t, size_t>> pairs;  // (outer index, inner index)
    std::vector<size_t> unmatched_outer;
    double pairing_rate = 0.0;
};

/// Pairs each tunnel packet with its pre-tunnel counterpart. For an outer
/// packet at time t the candidates are same-direction inner packets of
/// strictly smaller size in (t, t+max_delay] when inbound, [t-max_delay, t)
/// when outbound. Greedy left-to-right, no inner reuse; ties resolve to the
/// nearest in time, then the largest inner frame, then the lowest index.
inline PairingResult pair_packets(const std::vector<PacketRecord>& inner,
                                  const std::vector<PacketRecord>& outer,
                                  double max_delay = 0.02) {
    PairingResult result;
    std::vector<char> used(inner.size(), 0);

    // inner is timestamp-sorted; locate windows by binary search
    std::vector<double> inner_ts(inner.size());
    for (size_t i = 0; i < inner.size(); ++i) inner_ts[i] = inner[i].timestamp;

    for (size_t o = 0; o < outer.size(); ++o) {
        const auto& op = outer[o];
        double t = op.timestamp;
        double lo, hi;
        bool lo_open, hi_open;
        if (op.direction == Direction::Inbound) {
            lo = t;
            hi = t + max_delay;
            lo_open = true;
            hi_open = false;
        } else {
            lo = t - max_delay;
            hi = t;
            lo_open = false;
            hi_open = true;
        }
        size_t begin = std::lower_bound(inner_ts.begin(), inner_ts.end(), lo) - inner_ts.begin();
        size_t end = std::upper_bound(inner_ts.begin(), inner_ts.end(), hi) - inner_ts.begin();

        size_t best = inner.size();
        double best_dt = 0.0;
        for (size_t j = begin; j < end; ++j) {
            if (used[j]) continue;
            const auto& ip = inner[j];
            if (ip.direction != op.direction) continue;
            if (ip.frame_length >= op.frame_length) continue;
            if (lo_open && ip.timestamp <= lo) continue;
            if (hi_open && ip.timestamp >= hi) continue;
            double dt = std::abs(ip.timestamp - t);
            if (best == inner.size() || dt < best_dt ||
                (dt == best_dt && ip.frame_length > inner[best].frame_length)) {
                best = j;
                best_dt = dt;
            }
        }
        if (best < inner.size()) {
            used[best] = 1;
            result.pairs.emplace_back(o, best);
        } else {
            result.unmatched_outer.push_back(o);
        }
    }
    result.pairing_rate =
        outer.empty() ? 0.0 : static_cast<double>(result.pairs.size()) / static_cast<double>(outer.size());
    return result;
}

/// Paired outer packets inherit their inner counterpart's label; unmatched
/// ones become `unknown`.
inline std::vector<PacketRecord> label_outer(const std::vector<PacketRecord>& outer,
                                             const PairingResult& pairing,
                                             const std::vector<PacketRecord>& inner) {
    std::vector<PacketRecord> labeled = outer;
    for (auto& r : labeled) r.label = kUnknownLabel;
    for (const auto& [o, i] : pairing.pairs)
        labeled[o].label = inner[i].label.value_or(kUnknownLabel);
    return labeled;
}

inline nlohmann::json pairing_report(const PairingResult& pairing,
                                     const std::vector<PacketRecord>& labeled_outer) {
    nlohmann::json j;
    j["pairs_count"] = pairing.pairs.size();
    j["unmatched_count"] = pairing.unmatched_outer.size();
    j["pairing_rate"] = pairing.pairing_rate;
    std::map<std::string, size_t> counts;
    for (const auto& r : labeled_outer) ++counts[r.label.value_or(kUnknownLabel)];
    j["label_counts"] = counts;
    return j;
}

}  // namespace tracemark
