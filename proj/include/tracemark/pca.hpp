#pragma once

// PCA over one-hot port vectors. The covariance of one-hot data is
// diag(p) - p p^T with p the per-port frequencies, and coordinates never
// observed (or constant) carry zero variance, so the eigenproblem is solved
// densely on the active coordinates only; the restriction is exact.

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracemark/common.hpp"
#include "tracemark/features.hpp"

namespace tracemark {

struct PcaBasis {
    Eigen::VectorXd mean;                       // d
    Eigen::MatrixXd components;                 // k x d, rows orthonormal
    Eigen::VectorXd explained_variance_ratio;   // k, non-increasing
    Eigen::VectorXd mean_projection;            // components * mean (cached)

    Eigen::Index dim() const { return mean.size(); }
    Eigen::Index k() const { return components.rows(); }

    void finalize() { mean_projection = components * mean; }
};

namespace pca_detail {

// Components have a sign ambiguity; make the entry of largest magnitude
// positive (first index on ties) so fits are comparable across routes.
inline void canonicalize_signs(Eigen::MatrixXd& components) {
    for (Eigen::Index r = 0; r < components.rows(); ++r) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index c = 0; c < components.cols(); ++c) {
            double a = std::abs(components(r, c));
            if (a > best_abs + 1e-15) {
                best_abs = a;
                best = c;
            }
        }
        if (components(r, best) < 0.0) components.row(r) *= -1.0;
    }
}

// Shared tail: eigen-decompose an active-coordinate covariance block and
// embed the top-k directions back into d dimensions.
inline PcaBasis from_active_covariance(const Eigen::VectorXd& mean,
                                       const std::vector<Eigen::Index>& active,
                                       const Eigen::MatrixXd& cov_active, double total_variance,
                                       int k) {
    const Eigen::Index d = mean.size();
    PcaBasis basis;
    basis.mean = mean;
    basis.components = Eigen::MatrixXd::Zero(k, d);
    basis.explained_variance_ratio = Eigen::VectorXd::Zero(k);

    const Eigen::Index a = static_cast<Eigen::Index>(active.size());
    Eigen::Index filled = 0;
    if (a > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_active);
        if (solver.info() != Eigen::Success) throw DataError("pca: eigensolver failed");
        // ascending order from Eigen; take the top-k from the back
        const auto& values = solver.eigenvalues();
        const auto& vectors = solver.eigenvectors();
        Eigen::Index take = std::min<Eigen::Index>(k, a);
        for (Eigen::Index i = 0; i < take; ++i) {
            Eigen::Index src = a - 1 - i;
            for (Eigen::Index j = 0; j < a; ++j) basis.components(i, active[j]) = vectors(j, src);
            double ev = std::max(0.0, values(src));
            basis.explained_variance_ratio(i) = total_variance > 0.0 ? ev / total_variance : 0.0;
        }
        filled = take;
    }
    // degenerate spectrum: pad with canonical axes from inactive coordinates
    if (filled < k) {
        std::vector<char> is_active(d, 0);
        for (auto idx : active) is_active[idx] = 1;
        Eigen::Index next = 0;
        for (Eigen::Index i = filled; i < k; ++i) {
            while (next < d && is_active[next]) ++next;
            if (next >= d) throw DataError("pca: cannot complete basis, k exceeds dimension");
            basis.components(i, next++) = 1.0;
        }
    }
    canonicalize_signs(basis.components);
    basis.finalize();
    return basis;
}

}  // namespace pca_detail

/// Fits a k-component basis on raw sample vectors (n x d). Population
/// covariance (divide by n). Errors when fewer samples than k.
inline PcaBasis pca_fit(const Eigen::MatrixXd& data, int k) {
    const Eigen::Index n = data.rows(), d = data.cols();
    if (n < k) throw DataError("pca: need at least k=" + std::to_string(k) + " samples, got " +
                               std::to_string(n));
    Eigen::VectorXd mean = data.colwise().mean();
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (data(i, j) != mean(j)) {
                active.push_back(j);
                break;
            }
        }
    }
    Eigen::MatrixXd centered(n, static_cast<Eigen::Index>(active.size()));
    for (size_t j = 0; j < active.size(); ++j)
        centered.col(static_cast<Eigen::Index>(j)) = data.col(active[j]).array() - mean(active[j]);
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
    return pca_detail::from_active_covariance(mean, active, cov, cov.trace(), k);
}

/// One-hot specialization: fits directly from the dport column using the
/// closed-form covariance diag(p) - p p^T on observed ports.
inline PcaBasis pca_fit_ports(const std::vector<uint32_t>& ports, int k, size_t dim = kPortSpan) {
    const auto n = ports.size();
    if (n < static_cast<size_t>(k))
        throw DataError("pca: need at least k=" + std::to_string(k) + " samples, got " +
                        std::to_string(n));
    std::vector<double> counts(dim, 0.0);
    for (uint32_t p : ports) {
        if (p >= dim) throw DataError("pca: dport " + std::to_string(p) + " out of range");
        counts[p] += 1.0;
    }
    Eigen::VectorXd mean(static_cast<Eigen::Index>(dim));
    for (size_t j = 0; j < dim; ++j) mean(static_cast<Eigen::Index>(j)) = counts[j] / static_cast<double>(n);

    std::vector<Eigen::Index> active;
    for (size_t j = 0; j < dim; ++j) {
        double p = counts[j] / static_cast<double>(n);
        if (p > 0.0 && p < 1.0) active.push_back(static_cast<Eigen::Index>(j));
    }
    const Eigen::Index a = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd cov(a, a);
    double total_variance = 0.0;
    for (Eigen::Index i = 0; i < a; ++i) {
        double pi = mean(active[i]);
        for (Eigen::Index j = 0; j < a; ++j) {
            double pj = mean(active[j]);
            cov(i, j) = (i == j ? pi : 0.0) - pi * pj;
        }
        total_variance += cov(i, i);
    }
    return pca_detail::from_active_covariance(mean, active, cov, total_variance, k);
}

/// components * (x - mean), for arbitrary vectors.
inline Eigen::VectorXd pca_project(const PcaBasis& basis, const Eigen::VectorXd& x) {
    if (x.size() != basis.dim()) throw DataError("pca: vector dimension mismatch");
    return basis.components * x - basis.mean_projection;
}

/// Fast path for one-hot inputs: column lookup minus the cached mean term.
inline Eigen::VectorXd pca_project_port(const PcaBasis& basis, uint32_t port) {
    if (static_cast<Eigen::Index>(port) >= basis.dim())
        throw DataError("pca: dport out of range");
    return basis.components.col(port) - basis.mean_projection;
}

/// Back-projection into the original space (offset by mean).
inline Eigen::VectorXd pca_reconstruct(const PcaBasis& basis, const Eigen::VectorXd& projected) {
    return basis.components.transpose() * projected;
}

// ---------------------------------------------------------------------------

inline constexpr int kPcaComponents = 50;

/// Forest feature layout: [pca_0..pca_{k-1}, proto_0..proto_6, direction,
/// frame_length', time_interval'].
inline Eigen::VectorXd forest_features(const FeatureVector& v, const PcaBasis& basis,
                                       const Normalizer& norm) {
    Eigen::Index k = basis.k();
    Eigen::VectorXd out(k + kProtocolCount + 3);
    out.head(k) = pca_project_port(basis, v.dport);
    for (int b = 0; b < kProtocolCount; ++b) out[k + b] = v.protocol.bits[b];
    out[k + kProtocolCount] = v.direction;
    out[k + kProtocolCount + 1] = norm.norm_frame(v.frame_length);
    out[k + kProtocolCount + 2] = norm.norm_interval(v.time_interval);
    return out;
}

}  // namespace tracemark
