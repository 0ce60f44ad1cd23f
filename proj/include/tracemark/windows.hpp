#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracemark/common.hpp"
#include "tracemark/features.hpp"

namespace tracemark {

enum class Scenario : uint8_t { Pure = 0, Noisy = 1 };

inline const char* scenario_name(Scenario s) { return s == Scenario::Pure ? "pure" : "noisy"; }

inline Scenario scenario_from_name(const std::string& s) {
    if (s == "pure") return Scenario::Pure;
    if (s == "noisy") return Scenario::Noisy;
    throw UsageError("unknown scenario: " + s + " (expected pure|noisy)");
}

/// n consecutive feature vectors with their per-packet labels, in capture
/// order.
struct TrafficWindow {
    std::vector<FeatureVector> vectors;
    std::vector<std::string> labels;

    size_t size() const { return vectors.size(); }
};

struct WindowedDataset {
    std::vector<TrafficWindow> windows;
    std::vector<std::string> class_list;  // sorted, stable across folds
    Scenario scenario = Scenario::Pure;
    std::string mode = "napt";
    size_t window_size = 100;
    size_t stride = 100;

    size_t packet_count() const {
        size_t n = 0;
        for (const auto& w : windows) n += w.size();
        return n;
    }
};

/// Cuts windows starting at 0, stride, 2*stride, ...; a trailing remainder
/// shorter than n is discarded. Window contents are bit-identical slices of
/// the input.
inline std::vector<TrafficWindow> make_windows(const std::vector<FeatureVector>& vectors,
                                               const std::vector<std::string>& labels, size_t n,
                                               size_t stride) {
    if (n < 1 || stride < 1) throw UsageError("window size and stride must be >= 1");
    if (vectors.size() != labels.size()) throw DataError("vector/label length mismatch");
    std::vector<TrafficWindow> out;
    for (size_t start = 0; start + n <= vectors.size(); start += stride) {
        TrafficWindow w;
        w.vectors.assign(vectors.begin() + start, vectors.begin() + start + n);
        w.labels.assign(labels.begin() + start, labels.begin() + start + n);
        out.push_back(std::move(w));
    }
    return out;
}

inline std::vector<std::string> collect_class_list(const std::vector<TrafficWindow>& windows) {
    std::set<std::string> classes;
    for (const auto& w : windows)
        for (const auto& l : w.labels)
            if (!l.empty()) classes.insert(l);
    return {classes.begin(), classes.end()};
}

/// Pure-IoT dataset: windows cut per single-device stream, capped per device
/// by seeded uniform sampling (devices under the cap keep everything).
inline WindowedDataset build_dataset_ind(const std::vector<FeatureStream>& device_streams,
                                         size_t n, size_t stride, size_t cap = 5000,
                                         uint64_t seed = 1) {
    WindowedDataset ds;
    ds.scenario = Scenario::Pure;
    ds.window_size = n;
    ds.stride = stride;
    Rng rng(seed);
    for (const auto& stream : device_streams) {
        auto windows = make_windows(stream.vectors, stream.labels, n, stride);
        if (windows.size() > cap) {
            auto keep = rng.sample_indices(windows.size(), cap);
            std::vector<TrafficWindow> sampled;
            sampled.reserve(cap);
            for (size_t idx : keep) sampled.push_back(std::move(windows[idx]));
            windows = std::move(sampled);
        }
        for (auto& w : windows) ds.windows.push_back(std::move(w));
    }
    ds.class_list = collect_class_list(ds.windows);
    return ds;
}

/// Distinct-device-count histogram over windows (device-combination report).
inline std::map<size_t, size_t> combination_histogram(const std::vector<TrafficWindow>& windows) {
    std::map<size_t, size_t> hist;
    for (const auto& w : windows) {
        std::set<std::string> devices(w.labels.begin(), w.labels.end());
        devices.erase("");
        ++hist[devices.size()];
    }
    return hist;
}

/// Noisy dataset: windows cut straight from the interleaved multi-device
/// stream.
inline WindowedDataset build_dataset_noise(const FeatureStream& merged, size_t n, size_t stride) {
    WindowedDataset ds;
    ds.scenario = Scenario::Noisy;
    ds.window_size = n;
    ds.stride = stride;
    ds.windows = make_windows(merged.vectors, merged.labels, n, stride);
    ds.class_list = collect_class_list(ds.windows);
    return ds;
}

// ---------------------------------------------------------------------------
// Directory layout: manifest.json + windows.tmfv + labels.txt.

inline void save_dataset(const WindowedDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json j;
    j["scenario"] = scenario_name(ds.scenario);
    j["mode"] = ds.mode;
    j["n"] = ds.window_size;
    j["stride"] = ds.stride;
    j["class_list"] = ds.class_list;
    std::map<std::string, size_t> counts;
    for (const auto& w : ds.windows)
        for (const auto& l : w.labels)
            if (!l.empty()) ++counts[l];
    j["counts"] = counts;
    j["window_count"] = ds.windows.size();
    std::ofstream mout(fs::path(dir) / "manifest.json");
    if (!mout) throw DataError("cannot write dataset manifest in " + dir);
    mout << j.dump(2) << "\n";

    std::vector<FeatureVector> flat;
    std::vector<std::string> labels;
    flat.reserve(ds.windows.size() * ds.window_size);
    for (const auto& w : ds.windows) {
        flat.insert(flat.end(), w.vectors.begin(), w.vectors.end());
        labels.insert(labels.end(), w.labels.begin(), w.labels.end());
    }
    save_matrix_tmfv(raw_feature_matrix(flat), (fs::path(dir) / "windows.tmfv").string());
    save_labels(labels, (fs::path(dir) / "labels.txt").string());
}

inline WindowedDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) throw DataError("cannot open dataset manifest in " + dir);
    nlohmann::json j;
    min >> j;
    WindowedDataset ds;
    ds.scenario = scenario_from_name(j.at("scenario").get<std::string>());
    ds.mode = j.at("mode").get<std::string>();
    ds.window_size = j.at("n").get<size_t>();
    ds.stride = j.at("stride").get<size_t>();
    ds.class_list = j.at("class_list").get<std::vector<std::string>>();

    auto m = load_matrix_tmfv((fs::path(dir) / "windows.tmfv").string());
    auto labels = load_labels((fs::path(dir) / "labels.txt").string());
    auto vectors = feature_matrix_to_vectors(m);
    if (labels.size() != vectors.size()) throw DataError("dataset labels/vectors mismatch in " + dir);
    if (ds.window_size == 0 || vectors.size() % ds.window_size != 0)
        throw DataError("dataset row count not divisible by window size in " + dir);
    for (size_t start = 0; start < vectors.size(); start += ds.window_size) {
        TrafficWindow w;
        w.vectors.assign(vectors.begin() + start, vectors.begin() + start + ds.window_size);
        w.labels.assign(labels.begin() + start, labels.begin() + start + ds.window_size);
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

}  // namespace tracemark
