#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/measure.hpp"
#include "spray/sinkhorn.hpp"

namespace spray {

struct GromovParams {
    double epsilon = 1e-3;    // entropic regularization of the inner OT solves
    int outer_iter = 50;      // projected-gradient sweeps
    double cost_tol = 1e-8;   // stop when the cost decrease falls below this
    SinkhornParams inner;     // inner Sinkhorn settings (epsilon field ignored)
};

struct GromovResult {
    double cost = 0.0;
    Matrix plan;
    int outer_iterations = 0;
    bool converged = false;
};

namespace detail {

inline Matrix intra_distances(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::sqrt(sqr(cloud.coords[i].first - cloud.coords[j].first) +
                                       sqr(cloud.coords[i].second - cloud.coords[j].second));
            d(i, j) = v;
            d(j, i) = v;
        }
    return d;
}

}  // namespace detail

/// Entropic Gromov-Wasserstein discrepancy between two weighted point
/// clouds. The objective sum over (i,j,k,l) of (dA[i][k] - dB[j][l])^2 *
/// T[i][j] * T[k][l] is minimized by alternating between linearizing at the
/// current plan and solving the resulting OT problem with Sinkhorn, starting
/// from the product coupling. Invariant under isometries of either cloud,
/// since only intra-cloud distances enter.
inline GromovResult gromov_wasserstein(const PointCloud& cloud_a, const PointCloud& cloud_b,
                                       const GromovParams& params = {}) {
    if (cloud_a.size() == 0 || cloud_b.size() == 0)
        throw std::invalid_argument("gromov_wasserstein: empty point cloud");
    const std::size_t m = cloud_a.size(), k = cloud_b.size();
    const Matrix da = detail::intra_distances(cloud_a);
    const Matrix db = detail::intra_distances(cloud_b);
    const std::vector<double>& mu = cloud_a.masses;
    const std::vector<double>& nu = cloud_b.masses;

    // Marginal-weighted squared-distance row sums; constant across couplings
    // because the marginals are fixed.
    std::vector<double> a_const(m, 0.0), b_const(k, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) a_const[i] += sqr(da(i, j)) * mu[j];
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) b_const[i] += sqr(db(i, j)) * nu[j];
    double const_total = 0.0;
    for (std::size_t i = 0; i < m; ++i) const_total += a_const[i] * mu[i];
    for (std::size_t j = 0; j < k; ++j) const_total += b_const[j] * nu[j];

    Matrix plan(m, k);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) plan(i, j) = mu[i] * nu[j];

    auto cross_matrix = [&](const Matrix& t) {
        // (dA * T * dB)[i][j]
        Matrix tmp(m, k);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < m; ++l) s += da(i, l) * t(l, j);
                tmp(i, j) = s;
            }
        Matrix out(m, k);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < k; ++l) s += tmp(i, l) * db(l, j);
                out(i, j) = s;
            }
        return out;
    };

    auto objective = [&](const Matrix& t, const Matrix& cross) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) dot += cross(i, j) * t(i, j);
        return const_total - 2.0 * dot;
    };

    Matrix cross = cross_matrix(plan);
    double cost = objective(plan, cross);

    GromovResult result;
    result.converged = false;
    SinkhornParams inner = params.inner;
    inner.epsilon = params.epsilon;

    int it = 0;
    for (; it < params.outer_iter; ++it) {
        Matrix lin(m, k);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) lin(i, j) = a_const[i] + b_const[j] - 2.0 * cross(i, j);
        plan = sinkhorn(mu, nu, lin, inner).plan;
        cross = cross_matrix(plan);
        const double next_cost = objective(plan, cross);
        const double delta = std::fabs(cost - next_cost);
        cost = next_cost;
        if (delta < params.cost_tol) {
            result.converged = true;
            ++it;
            break;
        }
    }
    result.cost = cost > 0.0 ? cost : 0.0;
    result.plan = std::move(plan);
    result.outer_iterations = it;
    return result;
}

}  // namespace spray
