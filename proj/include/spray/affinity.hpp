#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/io.hpp"
#include "spray/parallel.hpp"

namespace spray {

/// Sparse symmetric matrix stored as per-row (column, value) lists sorted by
/// column. Rows cover the full matrix (both triangles).
struct SparseSym {
    std::size_t n = 0;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;

    void matvec(const std::vector<double>& x, std::vector<double>& y) const {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (const auto& [j, v] : rows[i]) s += v * x[j];
            y[i] = s;
        }
    }

    Matrix dense() const {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [j, v] : rows[i]) m(i, j) = v;
        return m;
    }
};

/// KNN affinity graph after the symmetrization A <- (A + A^T)/2 applied to
/// the binary directed KNN marks: 1 for mutual neighbors, 0.5 when only one
/// direction held, 0 otherwise. No self-loops.
struct AffinityGraph {
    std::size_t n = 0;
    int k = 0;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;  // sorted by column

    double at(std::size_t i, std::size_t j) const {
        for (const auto& [c, v] : rows[i])
            if (c == j) return v;
        return 0.0;
    }

    Matrix dense() const {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [j, v] : rows[i]) m(i, j) = v;
        return m;
    }
};

/// Marks each sample's k nearest neighbors (self excluded, ties broken by
/// the smaller index) and symmetrizes. Each row ends up with between k and
/// 2k nonzeros.
inline AffinityGraph knn_affinity(const DistanceMatrix& dm, int k = 10, unsigned jobs = 1) {
    const std::size_t n = dm.n();
    if (k < 1) throw std::invalid_argument("knn_affinity: k must be >= 1");
    if (static_cast<std::size_t>(k) >= n)
        throw std::invalid_argument("knn_affinity: k must be smaller than the sample count");

    std::vector<std::vector<std::uint32_t>> neighbors(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        std::vector<std::uint32_t> order;
        order.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(static_cast<std::uint32_t>(j));
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](std::uint32_t a, std::uint32_t b) {
                              const double da = dm.values(i, a), db = dm.values(i, b);
                              if (da != db) return da < db;
                              return a < b;
                          });
        order.resize(k);
        std::sort(order.begin(), order.end());
        neighbors[i] = std::move(order);
    });

    AffinityGraph g;
    g.n = n;
    g.k = k;
    g.rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t j : neighbors[i]) {
            const bool mutual = std::binary_search(neighbors[j].begin(), neighbors[j].end(),
                                                   static_cast<std::uint32_t>(i));
            const double a = mutual ? 1.0 : 0.5;
            g.rows[i].emplace_back(j, a);
            if (!mutual) g.rows[j].emplace_back(static_cast<std::uint32_t>(i), 0.5);
        }
    }
    for (auto& row : g.rows) std::sort(row.begin(), row.end());
    return g;
}

struct Laplacians {
    SparseSym lap;        // L = D - A
    SparseSym lap_sym;    // D^{-1/2} L D^{-1/2}
    std::vector<double> degrees;
};

/// Degree, unnormalized and symmetric normalized graph Laplacians of an
/// affinity graph. Every vertex must have positive degree (KNN input
/// guarantees it, still checked).
inline Laplacians laplacians(const AffinityGraph& a) {
    const std::size_t n = a.n;
    Laplacians out;
    out.degrees.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [j, v] : a.rows[i]) out.degrees[i] += v;
    for (std::size_t i = 0; i < n; ++i)
        if (!(out.degrees[i] > 0.0))
            throw std::invalid_argument("laplacians: isolated vertex (zero degree)");

    out.lap.n = n;
    out.lap.rows.resize(n);
    out.lap_sym.n = n;
    out.lap_sym.rows.resize(n);
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(out.degrees[i]);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, v] : a.rows[i]) {
            out.lap.rows[i].emplace_back(j, -v);
            out.lap_sym.rows[i].emplace_back(j, -v * inv_sqrt[i] * inv_sqrt[j]);
        }
        out.lap.rows[i].emplace_back(static_cast<std::uint32_t>(i), out.degrees[i]);
        out.lap_sym.rows[i].emplace_back(static_cast<std::uint32_t>(i), 1.0);
        std::sort(out.lap.rows[i].begin(), out.lap.rows[i].end());
        std::sort(out.lap_sym.rows[i].begin(), out.lap_sym.rows[i].end());
    }
    return out;
}

/// Writes the nonzeros of an affinity graph as "i j value" lines (upper
/// triangle only), a debugging aid.
inline void save_affinity_coo(const std::filesystem::path& path, const AffinityGraph& g) {
    auto os = io::open_out(path, /*binary=*/false);
    for (std::size_t i = 0; i < g.n; ++i)
        for (const auto& [j, v] : g.rows[i])
            if (j > i) os << i << ' ' << j << ' ' << io::fmt9(v) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

/// Number of connected components of the affinity graph (test oracle for the
/// zero-eigenvalue multiplicity and a sanity check in the pipeline).
inline std::size_t connected_components(const AffinityGraph& g) {
    std::vector<char> seen(g.n, 0);
    std::size_t count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < g.n; ++s) {
        if (seen[s]) continue;
        ++count;
        stack.push_back(s);
        seen[s] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            for (const auto& [j, v] : g.rows[i]) {
                (void)v;
                if (!seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return count;
}

}  // namespace spray
