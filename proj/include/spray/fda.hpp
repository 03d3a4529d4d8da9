#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/io.hpp"
#include "spray/kmeans.hpp"
#include "spray/linalg.hpp"

namespace spray {

/// Within- and between-cluster scatter matrices. S_b sums the unweighted
/// outer products of (cluster mean - grand mean); cluster sizes do not enter.
struct ScatterMatrices {
    Matrix within;   // S_w
    Matrix between;  // S_b
};

inline ScatterMatrices scatter_matrices(const Matrix& points, const std::vector<int>& labels) {
    const std::size_t n = points.rows(), dims = points.cols();
    if (labels.size() != n) throw std::invalid_argument("scatter_matrices: label count mismatch");
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    if (k < 2) throw std::invalid_argument("scatter_matrices: need at least 2 clusters");
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("scatter_matrices: negative label");
        ++counts[static_cast<std::size_t>(l)];
    }
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0) throw std::invalid_argument("scatter_matrices: empty cluster");

    Matrix means(static_cast<std::size_t>(k), dims, 0.0);
    std::vector<double> grand(dims, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dims; ++d) {
            means(static_cast<std::size_t>(labels[i]), d) += points(i, d);
            grand[d] += points(i, d);
        }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
        for (std::size_t d = 0; d < dims; ++d) means(c, d) /= static_cast<double>(counts[c]);
    for (std::size_t d = 0; d < dims; ++d) grand[d] /= static_cast<double>(n);

    ScatterMatrices out;
    out.within = Matrix(dims, dims, 0.0);
    out.between = Matrix(dims, dims, 0.0);
    std::vector<double> diff(dims);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        for (std::size_t d = 0; d < dims; ++d) diff[d] = points(i, d) - means(c, d);
        for (std::size_t a = 0; a < dims; ++a)
            for (std::size_t b = a; b < dims; ++b) out.within(a, b) += diff[a] * diff[b];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
        for (std::size_t d = 0; d < dims; ++d) diff[d] = means(c, d) - grand[d];
        for (std::size_t a = 0; a < dims; ++a)
            for (std::size_t b = a; b < dims; ++b) out.between(a, b) += diff[a] * diff[b];
    }
    for (std::size_t a = 0; a < dims; ++a)
        for (std::size_t b = 0; b < a; ++b) {
            out.within(a, b) = out.within(b, a);
            out.between(a, b) = out.between(b, a);
        }
    return out;
}

/// Largest generalized eigenvalue of S_b v = lambda (S_w + ridge I) v: the
/// Fisher separability along the single most discriminative direction.
/// Solved by Cholesky whitening of the regularized within-scatter followed
/// by a standard symmetric eigenproblem.
inline double separability(const Matrix& points, const std::vector<int>& labels, double ridge) {
    const ScatterMatrices s = scatter_matrices(points, labels);
    const std::size_t dims = points.cols();
    Matrix sw = s.within;
    for (std::size_t d = 0; d < dims; ++d) sw(d, d) += ridge;
    const Matrix L = cholesky(sw);

    // M = L^{-1} S_b L^{-T}, assembled column by column.
    Matrix M(dims, dims);
    std::vector<double> col(dims);
    for (std::size_t j = 0; j < dims; ++j) {
        for (std::size_t i = 0; i < dims; ++i) col[i] = s.between(i, j);
        col = solve_lower(L, col);
        for (std::size_t i = 0; i < dims; ++i) M(i, j) = col[i];
    }
    Matrix M2(dims, dims);
    std::vector<double> row(dims);
    for (std::size_t i = 0; i < dims; ++i) {
        for (std::size_t j = 0; j < dims; ++j) row[j] = M(i, j);
        row = solve_lower(L, row);
        for (std::size_t j = 0; j < dims; ++j) M2(i, j) = row[j];
    }
    for (std::size_t i = 0; i < dims; ++i)
        for (std::size_t j = i + 1; j < dims; ++j) {
            const double v = 0.5 * (M2(i, j) + M2(j, i));
            M2(i, j) = v;
            M2(j, i) = v;
        }
    const SymEigenResult eig = sym_eigen(M2);
    const double score = eig.values.back();
    if (!std::isfinite(score)) throw std::runtime_error("separability: non-finite score");
    return score > 0.0 ? score : 0.0;
}

/// Default ridge used by tau_score: a small fraction of the mean diagonal
/// within-scatter, floored so duplicate points cannot make S_w singular.
inline double default_ridge(const Matrix& points, const std::vector<int>& labels) {
    const ScatterMatrices s = scatter_matrices(points, labels);
    double trace = 0.0;
    for (std::size_t d = 0; d < points.cols(); ++d) trace += s.within(d, d);
    return std::max(1e-6 * trace / static_cast<double>(points.cols()), 1e-12);
}

/// Per-class separability over a k-range plus its mean tau.
struct SeparabilityReport {
    int class_id = 0;
    std::map<int, double> per_k_scores;
    double tau = 0.0;
    bool k_max_clamped = false;
};

struct TauParams {
    int k_min = 2;
    int k_max = 30;
    std::uint64_t seed = 0;
    double ridge = -1.0;  // negative: use default_ridge per clustering
    int kmeans_max_iter = 300;
    int kmeans_restarts = 5;
};

/// Runs k-means for every k in [k_min, k_max] on the spectral embedding and
/// averages the separability scores. k_max is clamped to n-1 (with a
/// warning) when the class has too few samples.
inline SeparabilityReport tau_score(const Matrix& phi, int class_id, const TauParams& params = {}) {
    const std::size_t n = phi.rows();
    if (params.k_min < 2) throw std::invalid_argument("tau_score: k_min must be >= 2");
    int k_max = params.k_max;
    SeparabilityReport report;
    report.class_id = class_id;
    if (static_cast<std::size_t>(k_max) >= n) {
        k_max = static_cast<int>(n) - 1;
        report.k_max_clamped = true;
        std::fprintf(stderr, "warning: k_max clamped to %d (class %d has %zu samples)\n", k_max,
                     class_id, n);
    }
    if (k_max < params.k_min) throw std::invalid_argument("tau_score: empty k range after clamping");

    double sum = 0.0;
    for (int k = params.k_min; k <= k_max; ++k) {
        const ClusterAssignment ca =
            kmeans(phi, k, mix_seed(params.seed, static_cast<std::uint64_t>(k)), params.kmeans_max_iter,
                   params.kmeans_restarts);
        const double ridge = params.ridge >= 0.0 ? params.ridge : default_ridge(phi, ca.labels);
        const double score = separability(phi, ca.labels, ridge);
        report.per_k_scores[k] = score;
        sum += score;
    }
    report.tau = sum / static_cast<double>(report.per_k_scores.size());
    return report;
}

/// Descending by tau, ties by ascending class id.
inline std::vector<SeparabilityReport> rank_classes(std::vector<SeparabilityReport> reports) {
    if (reports.empty()) throw std::invalid_argument("rank_classes: no reports");
    std::stable_sort(reports.begin(), reports.end(),
                     [](const SeparabilityReport& a, const SeparabilityReport& b) {
                         if (a.tau != b.tau) return a.tau > b.tau;
                         return a.class_id < b.class_id;
                     });
    return reports;
}

/// CSV export: class_id,tau,score_k2,...,score_k30. Missing k cells (clamped
/// classes) are left empty.
inline void save_tau_ranking(const std::filesystem::path& path, const std::vector<SeparabilityReport>& ranked,
                             int k_min = 2, int k_max = 30) {
    auto os = io::open_out(path, /*binary=*/false);
    os << "class_id,tau";
    for (int k = k_min; k <= k_max; ++k) os << ",score_k" << k;
    os << '\n';
    for (const auto& r : ranked) {
        os << r.class_id << ',' << io::fmt9(r.tau);
        for (int k = k_min; k <= k_max; ++k) {
            os << ',';
            const auto it = r.per_k_scores.find(k);
            if (it != r.per_k_scores.end()) os << io::fmt9(it->second);
        }
        os << '\n';
    }
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace spray
