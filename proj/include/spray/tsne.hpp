#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spray/core.hpp"
#include "spray/parallel.hpp"

namespace spray {

struct TsneParams {
    double perplexity = 30.0;
    int iters = 1000;
    std::uint64_t seed = 0;
    double eta = 0.0;  // 0: auto, max(50, n/12)
    double early_exaggeration = 12.0;
    int exaggeration_until = 250;
    double momentum_start = 0.5;
    double momentum_final = 0.8;
    int momentum_switch = 250;
    int checkpoint_every = 50;
    unsigned jobs = 1;
};

struct PlanarEmbedding {
    Matrix coords;  // n x 2, centered
    double kl_divergence = 0.0;
    double perplexity = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::pair<int, double>> kl_checkpoints;
};

/// Conditional gaussian affinities with per-point bandwidths solved by
/// bisection so each row's entropy matches log(perplexity) within 1e-5.
/// Row i holds p(j|i); the diagonal stays zero.
inline Matrix tsne_input_affinities(const Matrix& phi, double perplexity, unsigned jobs = 1) {
    const std::size_t n = phi.rows(), dims = phi.cols();
    if (n < 4) throw std::invalid_argument("tsne: need at least 4 samples");
    if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n) / 3.0)
        throw std::invalid_argument("tsne: perplexity must be positive and below n/3");

    Matrix d2(n, n);
    parallel_for(n, jobs, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dims; ++k) s += sqr(phi(i, k) - phi(j, k));
            d2(i, j) = s;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d2(j, i) = d2(i, j);

    const double target_entropy = std::log(perplexity);
    Matrix p(n, n, 0.0);
    parallel_for(n, jobs, [&](std::size_t i) {
        double beta = 1.0, beta_lo = -std::numeric_limits<double>::infinity();
        double beta_hi = std::numeric_limits<double>::infinity();
        std::vector<double> row(n, 0.0);
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
                sum += row[j];
            }
            // entropy of the normalized row, in nats
            double h = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (row[j] > 0.0) h += beta * d2(i, j) * row[j];
            h = h / sum + std::log(sum);
            const double diff = h - target_entropy;
            if (std::fabs(diff) < 1e-5) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = std::isfinite(beta_hi) ? 0.5 * (beta + beta_hi) : beta * 2.0;
            } else {
                beta_hi = beta;
                beta = std::isfinite(beta_lo) ? 0.5 * (beta + beta_lo) : beta * 0.5;
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) p(i, j) = row[j] / sum;
    });
    return p;
}

/// Exact (dense) t-SNE to two dimensions: symmetrized gaussian input
/// affinities, Student-t output kernel, gradient descent with gains,
/// momentum switching and early exaggeration, seeded gaussian
/// initialization scaled by 1e-4. Deterministic for a fixed seed and jobs
/// count is irrelevant to the result.
inline PlanarEmbedding tsne(const Matrix& phi, const TsneParams& params = {}) {
    const std::size_t n = phi.rows();
    Matrix p = tsne_input_affinities(phi, params.perplexity, params.jobs);
    // Symmetrize and normalize to a joint distribution.
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = p(i, j) + p(j, i);
            p(i, j) = v;
            p(j, i) = v;
            total += 2.0 * v;
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p(i, j) = i == j ? 0.0 : std::max(p(i, j) / total, 1e-12);

    const double eta =
        params.eta > 0.0 ? params.eta : std::max(50.0, static_cast<double>(n) / params.early_exaggeration);
    Matrix y(n, 2), velocity(n, 2, 0.0), gains(n, 2, 1.0);
    Rng rng = make_rng(params.seed, 0x75E);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = 1e-4 * gaussian(rng);

    Matrix num(n, n, 0.0);
    std::vector<double> row_sums(n, 0.0);
    Matrix grad(n, 2, 0.0);

    auto compute_kernel = [&]() {
        parallel_for(n, params.jobs, [&](std::size_t i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    num(i, j) = 0.0;
                    continue;
                }
                const double d2 = sqr(y(i, 0) - y(j, 0)) + sqr(y(i, 1) - y(j, 1));
                num(i, j) = 1.0 / (1.0 + d2);
                rs += num(i, j);
            }
            row_sums[i] = rs;
        });
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += row_sums[i];
        return z;
    };

    auto kl_divergence = [&](double z) {
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = std::max(num(i, j) / z, 1e-12);
                kl += p(i, j) * std::log(p(i, j) / q);
            }
        return kl;
    };

    PlanarEmbedding out;
    out.perplexity = params.perplexity;
    out.seed = params.seed;

    for (int iter = 0; iter < params.iters; ++iter) {
        const double exaggeration = iter < params.exaggeration_until ? params.early_exaggeration : 1.0;
        const double momentum = iter < params.momentum_switch ? params.momentum_start : params.momentum_final;
        const double z = compute_kernel();

        parallel_for(n, params.jobs, [&](std::size_t i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = std::max(num(i, j) / z, 1e-12);
                const double coeff = 4.0 * (exaggeration * p(i, j) - q) * num(i, j);
                gx += coeff * (y(i, 0) - y(j, 0));
                gy += coeff * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = gx;
            grad(i, 1) = gy;
        });

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < 2; ++d) {
                const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) > 0.0);
                gains(i, d) = same_sign ? std::max(gains(i, d) * 0.8, 0.01) : gains(i, d) + 0.2;
                velocity(i, d) = momentum * velocity(i, d) - eta * gains(i, d) * grad(i, d);
                y(i, d) += velocity(i, d);
            }
        // re-center every iteration
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y(i, 0);
            my += y(i, 1);
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y(i, 0) -= mx;
            y(i, 1) -= my;
        }

        if ((iter + 1) % params.checkpoint_every == 0 || iter + 1 == params.iters) {
            const double zc = compute_kernel();
            out.kl_checkpoints.emplace_back(iter + 1, kl_divergence(zc));
        }
    }

    out.kl_divergence = out.kl_checkpoints.empty() ? 0.0 : out.kl_checkpoints.back().second;
    out.coords = std::move(y);
    return out;
}

}  // namespace spray
