#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/measure.hpp"

namespace spray {

struct SinkhornParams {
    double epsilon = 1e-2;       // entropic regularization on the normalized ground cost
    double marginal_tol = 1e-7;  // max allowed marginal violation at termination
    int max_iter = 10000;
};

struct TransportPlan {
    Matrix plan;             // m x k coupling
    std::vector<double> mu;  // source marginal
    std::vector<double> nu;  // target marginal
    double cost = 0.0;       // sum plan[i][j] * C[i][j]
    int iterations_used = 0;
    bool converged = false;
    double marginal_violation = 0.0;
};

/// Entropic optimal transport between two discrete measures under the given
/// ground cost, solved by alternating marginal scaling in the log domain.
/// Zero-mass marginal entries are excluded from the support; their plan rows
/// and columns stay zero. Non-convergence within max_iter is flagged, not
/// fatal.
inline TransportPlan sinkhorn(const std::vector<double>& mu, const std::vector<double>& nu,
                              const Matrix& cost, const SinkhornParams& params = {}) {
    const std::size_t m = mu.size(), k = nu.size();
    if (cost.rows() != m || cost.cols() != k)
        throw std::invalid_argument("sinkhorn: cost shape does not match marginals");
    if (!(params.epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");

    std::vector<std::size_t> rows, cols;
    double mu_sum = 0.0, nu_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (mu[i] < 0.0) throw std::invalid_argument("sinkhorn: negative mass in mu");
        if (mu[i] > 0.0) rows.push_back(i);
        mu_sum += mu[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (nu[j] < 0.0) throw std::invalid_argument("sinkhorn: negative mass in nu");
        if (nu[j] > 0.0) cols.push_back(j);
        nu_sum += nu[j];
    }
    if (rows.empty() || cols.empty()) throw DegenerateMeasureError("sinkhorn: zero-mass marginal");
    if (std::fabs(mu_sum - 1.0) > 1e-6 || std::fabs(nu_sum - 1.0) > 1e-6)
        throw std::invalid_argument("sinkhorn: marginals must sum to 1");

    const std::size_t mr = rows.size(), kc = cols.size();
    const double inv_eps = 1.0 / params.epsilon;

    std::vector<double> log_mu(mr), log_nu(kc);
    for (std::size_t i = 0; i < mr; ++i) log_mu[i] = std::log(mu[rows[i]]);
    for (std::size_t j = 0; j < kc; ++j) log_nu[j] = std::log(nu[cols[j]]);

    // Support-restricted scaled cost: c[i][j] = C / eps.
    Matrix c(mr, kc);
    for (std::size_t i = 0; i < mr; ++i)
        for (std::size_t j = 0; j < kc; ++j) {
            const double v = cost(rows[i], cols[j]);
            if (!std::isfinite(v)) throw std::invalid_argument("sinkhorn: non-finite cost entry");
            c(i, j) = v * inv_eps;
        }

    // plan[i][j] = exp(phi[i] + psi[j] - c[i][j])
    std::vector<double> phi(mr, 0.0), psi(kc, 0.0);
    std::vector<double> row_lse(mr), buf(std::max(mr, kc));

    auto compute_row_lse = [&]() {
        for (std::size_t i = 0; i < mr; ++i) {
            for (std::size_t j = 0; j < kc; ++j) buf[j] = psi[j] - c(i, j);
            row_lse[i] = log_sum_exp(buf.data(), kc);
        }
    };

    int it = 0;
    bool converged = false;
    double violation = std::numeric_limits<double>::infinity();
    compute_row_lse();
    for (; it < params.max_iter; ++it) {
        // Row violation of the current scalings; column marginals are exact
        // right after the psi update below.
        violation = 0.0;
        for (std::size_t i = 0; i < mr; ++i) {
            const double row_mass = std::exp(phi[i] + row_lse[i]);
            violation = std::max(violation, std::fabs(row_mass - mu[rows[i]]));
        }
        if (it > 0 && violation <= params.marginal_tol) {
            converged = true;
            break;
        }
        for (std::size_t i = 0; i < mr; ++i) phi[i] = log_mu[i] - row_lse[i];
        for (std::size_t j = 0; j < kc; ++j) {
            for (std::size_t i = 0; i < mr; ++i) buf[i] = phi[i] - c(i, j);
            psi[j] = log_nu[j] - log_sum_exp(buf.data(), mr);
        }
        compute_row_lse();
    }

    TransportPlan out;
    out.mu = mu;
    out.nu = nu;
    out.plan = Matrix(m, k);
    out.iterations_used = it;
    out.converged = converged;
    out.marginal_violation = violation;
    double total_cost = 0.0;
    for (std::size_t i = 0; i < mr; ++i)
        for (std::size_t j = 0; j < kc; ++j) {
            const double p = std::exp(phi[i] + psi[j] - c(i, j));
            out.plan(rows[i], cols[j]) = p;
            total_cost += p * cost(rows[i], cols[j]);
        }
    out.cost = total_cost;
    return out;
}

namespace detail {

/// Support coordinates and masses of a grid measure, with coordinates scaled
/// so the grid diagonal has unit length.
struct GridSupport {
    std::vector<double> r, c, mass;
};

inline GridSupport grid_support(const Grid& measure) {
    GridSupport s;
    const double inv_diag = 1.0 / grid_diagonal(measure.rows(), measure.cols());
    for (std::size_t i = 0; i < measure.rows(); ++i)
        for (std::size_t j = 0; j < measure.cols(); ++j)
            if (measure(i, j) > 0.0) {
                s.r.push_back(static_cast<double>(i) * inv_diag);
                s.c.push_back(static_cast<double>(j) * inv_diag);
                s.mass.push_back(measure(i, j));
            }
    return s;
}

}  // namespace detail

/// Entropic Wasserstein distance between two attribution grids: both are
/// converted to measures, the ground cost is squared euclidean distance on
/// pixel coordinates normalized by the grid diagonal, and the returned value
/// is the transport cost of the Sinkhorn plan (clamped at zero; the entropic
/// bias can produce tiny negatives).
inline double wasserstein_distance(const Grid& map_a, const Grid& map_b,
                                   const SinkhornParams& params = {}, bool* converged = nullptr) {
    if (!map_a.same_shape(map_b)) throw std::invalid_argument("wasserstein_distance: grid shapes differ");
    const Grid pa = to_measure(map_a);
    const Grid pb = to_measure(map_b);
    const auto sa = detail::grid_support(pa);
    const auto sb = detail::grid_support(pb);
    Matrix cost(sa.mass.size(), sb.mass.size());
    for (std::size_t i = 0; i < sa.mass.size(); ++i)
        for (std::size_t j = 0; j < sb.mass.size(); ++j)
            cost(i, j) = sqr(sa.r[i] - sb.r[j]) + sqr(sa.c[i] - sb.c[j]);
    // Marginals renormalized over the support only.
    std::vector<double> mu = sa.mass, nu = sb.mass;
    const double ms = std::accumulate(mu.begin(), mu.end(), 0.0);
    const double ns = std::accumulate(nu.begin(), nu.end(), 0.0);
    for (double& v : mu) v /= ms;
    for (double& v : nu) v /= ns;
    const TransportPlan plan = sinkhorn(mu, nu, cost, params);
    if (converged) *converged = plan.converged;
    return plan.cost > 0.0 ? plan.cost : 0.0;
}

}  // namespace spray
