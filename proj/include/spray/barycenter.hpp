#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spray/core.hpp"
#include "spray/measure.hpp"

namespace spray {

namespace detail {

/// Log-domain application of the Gibbs kernel exp(-((r-r')^2+(c-c')^2) /
/// (eps*diag^2)) to exp(x), exploiting the separability of the squared
/// euclidean ground cost: one pass over columns, one over rows.
class LogGridKernel {
public:
    LogGridKernel(std::size_t h, std::size_t w, double epsilon)
        : h_(h), w_(w), row_k_(h, h), col_k_(w, w) {
        const double diag = grid_diagonal(h, w);
        const double scale = -1.0 / (epsilon * diag * diag);
        for (std::size_t a = 0; a < h; ++a)
            for (std::size_t b = 0; b < h; ++b) row_k_(a, b) = scale * sqr(double(a) - double(b));
        for (std::size_t a = 0; a < w; ++a)
            for (std::size_t b = 0; b < w; ++b) col_k_(a, b) = scale * sqr(double(a) - double(b));
    }

    Grid apply(const Grid& x) const {
        Grid tmp(h_, w_);
        std::vector<double> buf(std::max(h_, w_));
        for (std::size_t r = 0; r < h_; ++r)
            for (std::size_t c = 0; c < w_; ++c) {
                for (std::size_t c2 = 0; c2 < w_; ++c2) buf[c2] = x(r, c2) + col_k_(c, c2);
                tmp(r, c) = log_sum_exp(buf.data(), w_);
            }
        Grid out(h_, w_);
        for (std::size_t c = 0; c < w_; ++c)
            for (std::size_t r = 0; r < h_; ++r) {
                for (std::size_t r2 = 0; r2 < h_; ++r2) buf[r2] = tmp(r2, c) + row_k_(r, r2);
                out(r, c) = log_sum_exp(buf.data(), h_);
            }
        return out;
    }

private:
    std::size_t h_, w_;
    Matrix row_k_, col_k_;
};

}  // namespace detail

/// Entropic Wasserstein barycenter of grid measures by iterative Bregman
/// projections: alternating Sinkhorn scaling against each input measure with a
/// weighted geometric mean as the shared marginal, all in the log domain.
/// Inputs are normalized via to_measure; the output sums to one.
inline Grid wasserstein_barycenter(const std::vector<Grid>& maps, const std::vector<double>& weights,
                                   double epsilon, int iterations = 200) {
    if (maps.empty()) throw std::invalid_argument("wasserstein_barycenter: no input measures");
    if (maps.size() != weights.size())
        throw std::invalid_argument("wasserstein_barycenter: weights/measures size mismatch");
    if (!(epsilon > 0.0)) throw std::invalid_argument("wasserstein_barycenter: epsilon must be positive");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("wasserstein_barycenter: negative weight");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("wasserstein_barycenter: weights must sum to 1");

    const std::size_t h = maps[0].rows(), w = maps[0].cols();
    const double neg_inf = -std::numeric_limits<double>::infinity();

    std::vector<Grid> log_p;
    std::vector<double> wts;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (weights[i] == 0.0) continue;  // zero-weight measures do not constrain the barycenter
        if (!maps[i].same_shape(maps[0]))
            throw std::invalid_argument("wasserstein_barycenter: grid shapes differ");
        const Grid p = to_measure(maps[i]);
        Grid lp(h, w);
        for (std::size_t j = 0; j < p.size(); ++j)
            lp.data()[j] = p.data()[j] > 0.0 ? std::log(p.data()[j]) : neg_inf;
        log_p.push_back(std::move(lp));
        wts.push_back(weights[i]);
    }

    const detail::LogGridKernel kernel(h, w, epsilon);
    const std::size_t nm = log_p.size();
    std::vector<Grid> psi(nm, Grid(h, w, 0.0));
    Grid log_b(h, w, 0.0);

    for (int it = 0; it < iterations; ++it) {
        Grid next_log_b(h, w, 0.0);
        std::vector<Grid> conv_phi;
        conv_phi.reserve(nm);
        for (std::size_t i = 0; i < nm; ++i) {
            const Grid s = kernel.apply(psi[i]);
            Grid phi(h, w);
            for (std::size_t j = 0; j < phi.size(); ++j) phi.data()[j] = log_p[i].data()[j] - s.data()[j];
            conv_phi.push_back(kernel.apply(phi));
            for (std::size_t j = 0; j < next_log_b.size(); ++j)
                next_log_b.data()[j] += wts[i] * conv_phi.back().data()[j];
        }
        for (std::size_t i = 0; i < nm; ++i)
            for (std::size_t j = 0; j < psi[i].size(); ++j)
                psi[i].data()[j] = next_log_b.data()[j] - conv_phi[i].data()[j];
        double delta = 0.0;
        for (std::size_t j = 0; j < log_b.size(); ++j)
            delta = std::max(delta, std::fabs(next_log_b.data()[j] - log_b.data()[j]));
        log_b = std::move(next_log_b);
        if (it > 0 && delta < 1e-12) break;
    }

    Grid out(h, w);
    double total = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out.data()[j] = std::exp(log_b.data()[j]);
        total += out.data()[j];
    }
    if (!(total > 0.0)) throw DegenerateMeasureError("wasserstein_barycenter: collapsed measure");
    for (std::size_t j = 0; j < out.size(); ++j) out.data()[j] /= total;
    return out;
}

/// Pixel-wise weighted average of the normalized inputs; the euclidean-metric
/// counterpart of the transport barycenter.
inline Grid linear_blend(const std::vector<Grid>& maps, const std::vector<double>& weights) {
    if (maps.empty() || maps.size() != weights.size())
        throw std::invalid_argument("linear_blend: bad inputs");
    Grid out(maps[0].rows(), maps[0].cols(), 0.0);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const Grid p = to_measure(maps[i]);
        for (std::size_t j = 0; j < out.size(); ++j) out.data()[j] += weights[i] * p.data()[j];
    }
    return out;
}

/// Interpolation weights for a position in the unit square relative to four
/// corner samples: each weight is max(0, 1 - chebyshev distance to the
/// corner), renormalized over the four corners.
inline std::array<double, 4> chebyshev_interpolation_weights(
    std::pair<double, double> position, const std::array<std::pair<double, double>, 4>& corners) {
    if (position.first < 0.0 || position.first > 1.0 || position.second < 0.0 || position.second > 1.0)
        throw std::invalid_argument("chebyshev_interpolation_weights: position outside unit square");
    std::array<double, 4> w{};
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double cheb = std::max(std::fabs(position.first - corners[i].first),
                                     std::fabs(position.second - corners[i].second));
        w[i] = std::max(0.0, 1.0 - cheb);
        total += w[i];
    }
    if (total <= 0.0)
        throw std::domain_error("chebyshev_interpolation_weights: no corner within unit chebyshev range");
    for (double& v : w) v /= total;
    return w;
}

}  // namespace spray
