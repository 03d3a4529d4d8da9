#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"

namespace spray {

struct ClusterAssignment {
    std::vector<int> labels;  // length n, values in [0, k)
    int k = 0;
    double inertia = 0.0;  // sum of squared distances to assigned centroids
    std::uint64_t seed = 0;
    Matrix centroids;  // k x dims
};

namespace detail {

inline double sq_dist(const Matrix& points, std::size_t row, const std::vector<double>& center) {
    double s = 0.0;
    for (std::size_t d = 0; d < points.cols(); ++d) s += sqr(points(row, d) - center[d]);
    return s;
}

struct LloydResult {
    std::vector<int> labels;
    Matrix centroids;
    double inertia = 0.0;
};

inline LloydResult lloyd_once(const Matrix& points, int k, Rng& rng, int max_iter) {
    const std::size_t n = points.rows(), dims = points.cols();
    const std::size_t ku = static_cast<std::size_t>(k);

    // k-means++ seeding.
    std::vector<std::vector<double>> centers(ku, std::vector<double>(dims));
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    {
        const std::size_t first = static_cast<std::size_t>(uniform_index(rng, n));
        for (std::size_t d = 0; d < dims; ++d) centers[0][d] = points(first, d);
        for (std::size_t c = 1; c < ku; ++c) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                min_sq[i] = std::min(min_sq[i], sq_dist(points, i, centers[c - 1]));
                total += min_sq[i];
            }
            std::size_t chosen = 0;
            if (total > 0.0) {
                const double target = uniform01(rng) * total;
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += min_sq[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                // all mass at the existing centers (duplicate points); pick
                // deterministically so every cluster id still gets a center
                chosen = static_cast<std::size_t>(uniform_index(rng, n));
            }
            for (std::size_t d = 0; d < dims; ++d) centers[c][d] = points(chosen, d);
        }
    }

    std::vector<int> labels(n, -1);
    std::vector<std::size_t> counts(ku, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        // Assign: nearest center, ties to the smaller index.
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points, i, centers[0]);
            for (std::size_t c = 1; c < ku; ++c) {
                const double d = sq_dist(points, i, centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(labels[i])];

        // Repair empty clusters: move the globally farthest point into one.
        for (std::size_t c = 0; c < ku; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far_i = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] <= 1) continue;
                const double d = sq_dist(points, i, centers[static_cast<std::size_t>(labels[i])]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            --counts[static_cast<std::size_t>(labels[far_i])];
            labels[far_i] = static_cast<int>(c);
            ++counts[c];
            changed = true;
        }

        // Update means.
        for (auto& ctr : centers) std::fill(ctr.begin(), ctr.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dims; ++d) centers[static_cast<std::size_t>(labels[i])][d] += points(i, d);
        for (std::size_t c = 0; c < ku; ++c)
            for (std::size_t d = 0; d < dims; ++d) centers[c][d] /= static_cast<double>(counts[c]);

        if (!changed && it > 0) break;
    }

    LloydResult out;
    out.labels = std::move(labels);
    out.centroids = Matrix(ku, dims);
    for (std::size_t c = 0; c < ku; ++c)
        for (std::size_t d = 0; d < dims; ++d) out.centroids(c, d) = centers[c][d];
    out.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        out.inertia += sq_dist(points, i, centers[static_cast<std::size_t>(out.labels[i])]);
    return out;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding, run `restarts` times with
/// substream seeds derived from `seed`; the lowest-inertia run wins (earliest
/// on ties). Every cluster id appears at least once (empty clusters are
/// repaired by reassigning the farthest point).
inline ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter = 300,
                                int restarts = 5) {
    const std::size_t n = points.rows();
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("kmeans: need 1 <= k <= n");
    detail::LloydResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(r) + 1);
        detail::LloydResult run = detail::lloyd_once(points, k, rng, max_iter);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    ClusterAssignment out;
    out.labels = std::move(best.labels);
    out.k = k;
    out.inertia = best.inertia;
    out.seed = seed;
    out.centroids = std::move(best.centroids);
    return out;
}

/// Adjusted Rand index between two labelings (shared test/report utility).
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: size mismatch");
    const std::size_t n = a.size();
    const int ka = *std::max_element(a.begin(), a.end()) + 1;
    const int kb = *std::max_element(b.begin(), b.end()) + 1;
    Matrix table(static_cast<std::size_t>(ka), static_cast<std::size_t>(kb), 0.0);
    for (std::size_t i = 0; i < n; ++i) table(static_cast<std::size_t>(a[i]), static_cast<std::size_t>(b[i])) += 1.0;
    auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < ka; ++i) {
        double row = 0.0;
        for (int j = 0; j < kb; ++j) {
            sum_ij += comb2(table(i, j));
            row += table(i, j);
        }
        sum_a += comb2(row);
    }
    for (int j = 0; j < kb; ++j) {
        double col = 0.0;
        for (int i = 0; i < ka; ++i) col += table(i, j);
        sum_b += comb2(col);
    }
    const double total = comb2(static_cast<double>(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

}  // namespace spray
