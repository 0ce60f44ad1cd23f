#pragma once

// Random forest baseline: bagged CART trees, Gini impurity, midpoint
// thresholds, sqrt(d) feature subsampling, majority vote over leaf
// histograms. Deterministic under a fixed seed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tracemark/common.hpp"
#include "tracemark/features.hpp"
#include "tracemark/pca.hpp"

namespace tracemark {

struct TreeNode {
    int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int32_t left = -1, right = -1;
    std::vector<double> histogram;  // leaf class counts
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    const std::vector<double>& leaf_histogram(const Eigen::VectorXd& x) const {
        int32_t idx = 0;
        while (nodes[idx].feature >= 0)
            idx = x[nodes[idx].feature] <= nodes[idx].threshold ? nodes[idx].left : nodes[idx].right;
        return nodes[idx].histogram;
    }
};

struct ForestConfig {
    int n_trees = 100;
    int max_depth = -1;  // unlimited
    int min_leaf = 1;
    uint64_t seed = 1;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<std::string> class_list;
    ForestConfig config;
    int feature_dim = 0;
    Eigen::VectorXd importance;  // mean impurity decrease, sums to 1
    // preprocessing state, so a checkpoint is a complete packet->label function
    std::string mode = "napt";
    std::optional<PcaBasis> pca;
    Normalizer normalizer;
};

namespace forest_detail {

inline double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double g = 1.0;
    for (double c : counts) {
        double p = c / total;
        g -= p * p;
    }
    return g;
}

struct BuildContext {
    const Eigen::MatrixXd& features;
    const std::vector<int>& labels;
    int n_classes;
    const ForestConfig& cfg;
    int mtry;
    Rng& rng;
    std::vector<double>* importance;  // impurity-decrease accumulator
    double n_total;
};

struct PendingNode {
    int32_t index;
    std::vector<int> samples;  // bootstrap row indices
    int depth;
};

inline void build_tree(DecisionTree& tree, BuildContext& ctx, std::vector<int> root_samples) {
    tree.nodes.clear();
    tree.nodes.emplace_back();
    std::vector<PendingNode> stack;
    stack.push_back({0, std::move(root_samples), 0});

    while (!stack.empty()) {
        PendingNode node = std::move(stack.back());
        stack.pop_back();
        const auto& samples = node.samples;
        const double n = static_cast<double>(samples.size());

        std::vector<double> counts(ctx.n_classes, 0.0);
        for (int s : samples) counts[ctx.labels[s]] += 1.0;
        double node_gini = gini(counts, n);

        auto make_leaf = [&]() { tree.nodes[node.index].histogram = counts; };

        bool depth_capped = ctx.cfg.max_depth >= 0 && node.depth >= ctx.cfg.max_depth;
        if (node_gini <= 0.0 || samples.size() < 2 * static_cast<size_t>(ctx.cfg.min_leaf) ||
            depth_capped) {
            make_leaf();
            continue;
        }

        // sqrt(d) candidate features, drawn without replacement, scanned in
        // ascending order for a stable tie-break
        std::vector<int> candidates;
        {
            std::vector<int> all(ctx.features.cols());
            std::iota(all.begin(), all.end(), 0);
            for (int k = 0; k < ctx.mtry; ++k) {
                size_t j = k + ctx.rng.below(all.size() - k);
                std::swap(all[k], all[j]);
            }
            candidates.assign(all.begin(), all.begin() + ctx.mtry);
            std::sort(candidates.begin(), candidates.end());
        }

        int best_feature = -1;
        double best_threshold = 0.0, best_decrease = 0.0;
        std::vector<std::pair<double, int>> values(samples.size());
        std::vector<double> left_counts(ctx.n_classes);

        for (int f : candidates) {
            for (size_t i = 0; i < samples.size(); ++i)
                values[i] = {ctx.features(samples[i], f), ctx.labels[samples[i]]};
            std::sort(values.begin(), values.end());
            if (values.front().first == values.back().first) continue;

            std::fill(left_counts.begin(), left_counts.end(), 0.0);
            double n_left = 0.0;
            for (size_t i = 0; i + 1 < values.size(); ++i) {
                left_counts[values[i].second] += 1.0;
                n_left += 1.0;
                if (values[i].first == values[i + 1].first) continue;
                if (n_left < ctx.cfg.min_leaf || n - n_left < ctx.cfg.min_leaf) continue;
                double gl = 1.0, gr = 1.0;
                double n_right = n - n_left;
                for (int c = 0; c < ctx.n_classes; ++c) {
                    double pl = left_counts[c] / n_left;
                    double pr = (counts[c] - left_counts[c]) / n_right;
                    gl -= pl * pl;
                    gr -= pr * pr;
                }
                double decrease = node_gini - (n_left / n) * gl - (n_right / n) * gr;
                if (decrease > best_decrease + 1e-12) {
                    best_decrease = decrease;
                    best_feature = f;
                    best_threshold = (values[i].first + values[i + 1].first) / 2.0;
                }
            }
        }

        if (best_feature < 0) {
            make_leaf();
            continue;
        }

        std::vector<int> left, right;
        for (int s : samples)
            (ctx.features(s, best_feature) <= best_threshold ? left : right).push_back(s);
        if (left.empty() || right.empty()) {  // numeric edge, give up on the split
            make_leaf();
            continue;
        }

        if (ctx.importance)
            (*ctx.importance)[best_feature] += (n / ctx.n_total) * best_decrease;

        auto& parent = tree.nodes[node.index];
        parent.feature = best_feature;
        parent.threshold = best_threshold;
        parent.left = static_cast<int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        parent.right = static_cast<int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        int32_t li = tree.nodes[node.index].left, ri = tree.nodes[node.index].right;
        stack.push_back({ri, std::move(right), node.depth + 1});
        stack.push_back({li, std::move(left), node.depth + 1});
    }
}

}  // namespace forest_detail

/// Trains on a row-per-sample feature matrix. Labels must span at least two
/// classes; each tree sees a same-size bootstrap resample.
inline ForestModel train_forest(const Eigen::MatrixXd& features,
                                const std::vector<std::string>& labels, const ForestConfig& cfg) {
    if (features.rows() != static_cast<Eigen::Index>(labels.size()))
        throw DataError("forest: features/labels length mismatch");
    if (features.rows() == 0) throw DataError("forest: empty training set");
    if (!features.allFinite()) throw DataError("forest: non-finite feature values");

    ForestModel model;
    model.config = cfg;
    model.feature_dim = static_cast<int>(features.cols());
    {
        std::set<std::string> classes(labels.begin(), labels.end());
        model.class_list.assign(classes.begin(), classes.end());
    }
    if (model.class_list.size() < 2)
        throw DataError("forest: training set is single-class (degenerate)");

    std::map<std::string, int> class_index;
    for (size_t i = 0; i < model.class_list.size(); ++i) class_index[model.class_list[i]] = static_cast<int>(i);
    std::vector<int> y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) y[i] = class_index[labels[i]];

    const int n = static_cast<int>(features.rows());
    const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(features.cols()))));

    std::vector<double> acc(features.cols(), 0.0);
    model.trees.resize(cfg.n_trees);
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * (t + 1)));
        std::vector<int> bootstrap(n);
        for (int i = 0; i < n; ++i) bootstrap[i] = static_cast<int>(rng.below(n));
        forest_detail::BuildContext ctx{features, y, static_cast<int>(model.class_list.size()),
                                        cfg,      mtry, rng, &acc, static_cast<double>(n)};
        forest_detail::build_tree(model.trees[t], ctx, std::move(bootstrap));
    }
    model.importance.resize(features.cols());
    double total = std::accumulate(acc.begin(), acc.end(), 0.0);
    for (Eigen::Index f = 0; f < model.importance.size(); ++f)
        model.importance[f] = total > 0.0 ? acc[f] / total : 1.0 / static_cast<double>(features.cols());
    return model;
}

struct ForestPrediction {
    std::string label;
    Eigen::VectorXd probabilities;
};

/// Mean of normalized leaf histograms across trees; argmax with lowest-index
/// tie-break.
inline ForestPrediction predict_forest(const ForestModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.feature_dim)
        throw DataError("forest: feature dimension mismatch (" + std::to_string(x.size()) +
                        " vs " + std::to_string(model.feature_dim) + ")");
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.class_list.size()));
    for (const auto& tree : model.trees) {
        const auto& hist = tree.leaf_histogram(x);
        double total = std::accumulate(hist.begin(), hist.end(), 0.0);
        if (total <= 0.0) continue;
        for (size_t c = 0; c < hist.size(); ++c) probs[static_cast<Eigen::Index>(c)] += hist[c] / total;
    }
    probs /= static_cast<double>(model.trees.size());
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return {model.class_list[static_cast<size_t>(best)], probs};
}

/// Mean impurity decrease, accumulated over all splits at training time and
/// normalized to sum 1.
inline const Eigen::VectorXd& feature_importance(const ForestModel& model) {
    if (model.importance.size() != model.feature_dim)
        throw DataError("forest: model carries no importance data");
    return model.importance;
}

/// Four-way breakdown comparable across modes: the PCA block reports as
/// "dport", the 7 bits as "protocol".
inline std::map<std::string, double> grouped_importance(const Eigen::VectorXd& importance,
                                                        const std::string& mode, int pca_k = kPcaComponents) {
    std::map<std::string, double> g;
    if (mode == "vpn") {
        if (importance.size() != kVpnFeatureDim) throw DataError("grouped_importance: bad vpn layout");
        g["direction"] = importance[0];
        g["frame_length"] = importance[1];
        g["time_interval"] = importance[2];
        return g;
    }
    if (importance.size() != pca_k + kProtocolCount + 3)
        throw DataError("grouped_importance: bad napt layout");
    g["dport"] = importance.head(pca_k).sum();
    g["protocol"] = importance.segment(pca_k, kProtocolCount).sum();
    g["direction"] = importance[pca_k + kProtocolCount];
    g["frame_length"] = importance[pca_k + kProtocolCount + 1];
    g["time_interval"] = importance[pca_k + kProtocolCount + 2];
    return g;
}

// --- checkpoint (magic "TMRF") ----------------------------------------------

inline void save_forest(const ForestModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write forest checkpoint: " + path);
    out.write("TMRF", 4);
    io::write_le<uint16_t>(out, 1);
    io::write_le<uint8_t>(out, model.mode == "vpn" ? 1 : 0);
    io::write_le<uint32_t>(out, static_cast<uint32_t>(model.class_list.size()));
    for (const auto& c : model.class_list) io::write_string(out, c);
    io::write_le<int32_t>(out, model.config.n_trees);
    io::write_le<int32_t>(out, model.config.max_depth);
    io::write_le<int32_t>(out, model.config.min_leaf);
    io::write_le<uint64_t>(out, model.config.seed);
    io::write_le<int32_t>(out, model.feature_dim);
    for (int f = 0; f < model.feature_dim; ++f)
        io::write_le<double>(out, model.importance.size() == model.feature_dim ? model.importance[f] : 0.0);
    io::write_le<double>(out, model.normalizer.frame_scale);
    io::write_le<double>(out, model.normalizer.frame_clip);
    io::write_le<double>(out, model.normalizer.interval_cap);
    io::write_le<double>(out, model.normalizer.interval_scale);
    io::write_le<uint8_t>(out, model.pca ? 1 : 0);
    if (model.pca) {
        const auto& p = *model.pca;
        io::write_le<uint32_t>(out, static_cast<uint32_t>(p.k()));
        io::write_le<uint32_t>(out, static_cast<uint32_t>(p.dim()));
        for (Eigen::Index i = 0; i < p.mean.size(); ++i) io::write_le<float>(out, static_cast<float>(p.mean[i]));
        for (Eigen::Index r = 0; r < p.components.rows(); ++r)
            for (Eigen::Index c = 0; c < p.components.cols(); ++c)
                io::write_le<float>(out, static_cast<float>(p.components(r, c)));
        for (Eigen::Index i = 0; i < p.explained_variance_ratio.size(); ++i)
            io::write_le<float>(out, static_cast<float>(p.explained_variance_ratio[i]));
    }
    io::write_le<uint32_t>(out, static_cast<uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        io::write_le<uint32_t>(out, static_cast<uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            io::write_le<int32_t>(out, n.feature);
            io::write_le<double>(out, n.threshold);
            io::write_le<int32_t>(out, n.left);
            io::write_le<int32_t>(out, n.right);
            io::write_le<uint32_t>(out, static_cast<uint32_t>(n.histogram.size()));
            for (double h : n.histogram) io::write_le<double>(out, h);
        }
    }
}

inline ForestModel load_forest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open forest checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "TMRF") throw DataError("bad TMRF magic in " + path);
    if (io::read_le<uint16_t>(in) != 1) throw DataError("unsupported TMRF version in " + path);
    ForestModel model;
    model.mode = io::read_le<uint8_t>(in) == 1 ? "vpn" : "napt";
    auto n_classes = io::read_le<uint32_t>(in);
    for (uint32_t i = 0; i < n_classes; ++i) model.class_list.push_back(io::read_string(in));
    model.config.n_trees = io::read_le<int32_t>(in);
    model.config.max_depth = io::read_le<int32_t>(in);
    model.config.min_leaf = io::read_le<int32_t>(in);
    model.config.seed = io::read_le<uint64_t>(in);
    model.feature_dim = io::read_le<int32_t>(in);
    model.importance.resize(model.feature_dim);
    for (int f = 0; f < model.feature_dim; ++f) model.importance[f] = io::read_le<double>(in);
    model.normalizer.frame_scale = io::read_le<double>(in);
    model.normalizer.frame_clip = io::read_le<double>(in);
    model.normalizer.interval_cap = io::read_le<double>(in);
    model.normalizer.interval_scale = io::read_le<double>(in);
    if (io::read_le<uint8_t>(in)) {
        PcaBasis p;
        auto k = io::read_le<uint32_t>(in);
        auto dim = io::read_le<uint32_t>(in);
        p.mean.resize(dim);
        for (uint32_t i = 0; i < dim; ++i) p.mean[i] = io::read_le<float>(in);
        p.components.resize(k, dim);
        for (uint32_t r = 0; r < k; ++r)
            for (uint32_t c = 0; c < dim; ++c) p.components(r, c) = io::read_le<float>(in);
        p.explained_variance_ratio.resize(k);
        for (uint32_t i = 0; i < k; ++i) p.explained_variance_ratio[i] = io::read_le<float>(in);
        p.finalize();
        model.pca = std::move(p);
    }
    auto n_trees = io::read_le<uint32_t>(in);
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
        auto n_nodes = io::read_le<uint32_t>(in);
        tree.nodes.resize(n_nodes);
        for (auto& n : tree.nodes) {
            n.feature = io::read_le<int32_t>(in);
            n.threshold = io::read_le<double>(in);
            n.left = io::read_le<int32_t>(in);
            n.right = io::read_le<int32_t>(in);
            auto h = io::read_le<uint32_t>(in);
            n.histogram.resize(h);
            for (auto& v : n.histogram) v = io::read_le<double>(in);
        }
    }
    return model;
}

}  // namespace tracemark
