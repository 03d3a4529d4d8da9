#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spray/affinity.hpp"
#include "spray/core.hpp"
#include "spray/io.hpp"
#include "spray/linalg.hpp"

namespace spray {

/// q smallest eigenpairs of the normalized Laplacian. Rows of phi are the
/// per-sample spectral embedding vectors; columns are orthonormal
/// eigenvectors ordered by ascending eigenvalue.
struct SpectralEmbedding {
    std::vector<double> eigenvalues;
    Matrix phi;  // n x q

    std::size_t n() const { return phi.rows(); }
    std::size_t q() const { return phi.cols(); }
};

struct LanczosParams {
    double tol = 1e-10;      // residual tolerance relative to ||L_sym||
    int max_iter = 0;        // total Krylov steps; 0 means 10*q
    std::uint64_t seed = 0x5eed;
};

struct LanczosError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lanczos iteration with full reorthogonalization for the q smallest
/// eigenpairs of a sparse symmetric Laplacian. Internally iterates on
/// B = 2I - L_sym so the wanted pairs are the fastest-converging extremal
/// ones of B; ||L_sym|| <= 2 bounds the spectrum, so the complement is p.s.d.
/// Deterministic: all-ones start vector, with seeded random restarts on
/// breakdown (an exhausted invariant subspace).
inline SpectralEmbedding lanczos_eigs(const SparseSym& lsym, std::size_t q, const LanczosParams& params = {}) {
    const std::size_t n = lsym.n;
    if (q == 0 || q > n) throw std::invalid_argument("lanczos_eigs: need 0 < q <= n");

    const std::size_t step_budget =
        params.max_iter > 0 ? static_cast<std::size_t>(params.max_iter) : 10 * q;
    const std::size_t max_basis = std::min(n, std::max(step_budget, q));
    const double residual_bound = params.tol * 2.0;  // ||L_sym|| <= 2

    std::vector<std::vector<double>> basis;  // orthonormal Lanczos vectors
    std::vector<double> alpha, beta;         // T diagonal / subdiagonal (beta[i] couples i and i+1)
    basis.reserve(max_basis);

    Rng rng = make_rng(params.seed);
    std::vector<double> work(n), v(n), w(n);

    auto matvec_b = [&](const std::vector<double>& x, std::vector<double>& y) {
        lsym.matvec(x, y);
        for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * x[i] - y[i];
    };

    auto orthogonalize = [&](std::vector<double>& x) {
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += b[i] * x[i];
                for (std::size_t i = 0; i < n; ++i) x[i] -= dot * b[i];
            }
        }
    };

    auto norm = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (double t : x) s += t * t;
        return std::sqrt(s);
    };

    // Fresh start vector orthogonal to the current basis; all-ones first,
    // seeded noise afterwards (or when the deterministic choice degenerates).
    auto fresh_vector = [&](std::vector<double>& x) -> bool {
        for (int attempt = 0; attempt < 8; ++attempt) {
            if (basis.empty() && attempt == 0) {
                std::fill(x.begin(), x.end(), 1.0);
            } else {
                for (std::size_t i = 0; i < n; ++i) x[i] = gaussian(rng);
            }
            orthogonalize(x);
            const double nm = norm(x);
            if (nm > 1e-8) {
                for (std::size_t i = 0; i < n; ++i) x[i] /= nm;
                return true;
            }
        }
        return false;
    };

    struct Ritz {
        std::vector<double> values;     // eigenvalues of L_sym, ascending
        Matrix vectors;                 // n x q
        std::vector<double> residuals;  // explicit ||L_sym y - lambda y||
    };

    auto extract_ritz = [&]() -> Ritz {
        const std::size_t m = basis.size();
        std::vector<double> d = alpha;
        std::vector<double> e(m, 0.0);
        for (std::size_t i = 1; i < m; ++i) e[i] = beta[i - 1];
        Matrix z(m, m);
        for (std::size_t i = 0; i < m; ++i) z(i, i) = 1.0;
        tridiag_ql(d, e, z);
        // Largest Ritz values of B are the smallest eigenvalues of L_sym.
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
        const std::size_t take = std::min(q, m);
        Ritz r;
        r.values.resize(take);
        r.vectors = Matrix(n, take);
        r.residuals.resize(take);
        for (std::size_t jj = 0; jj < take; ++jj) {
            const std::size_t col = order[jj];
            r.values[jj] = 2.0 - d[col];
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < m; ++t) s += basis[t][i] * z(t, col);
                r.vectors(i, jj) = s;
            }
        }
        for (std::size_t jj = 0; jj < take; ++jj) {
            for (std::size_t i = 0; i < n; ++i) work[i] = r.vectors(i, jj);
            lsym.matvec(work, w);
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i) res += sqr(w[i] - r.values[jj] * work[i]);
            r.residuals[jj] = std::sqrt(res);
        }
        return r;
    };

    if (!fresh_vector(v)) throw LanczosError("lanczos_eigs: cannot build a start vector");
    double beta_prev = 0.0;
    std::vector<double> v_prev(n, 0.0);
    const std::size_t check_every = std::max<std::size_t>(q, 8);

    while (true) {
        matvec_b(v, w);
        double a = 0.0;
        for (std::size_t i = 0; i < n; ++i) a += v[i] * w[i];
        for (std::size_t i = 0; i < n; ++i) w[i] -= a * v[i] + beta_prev * v_prev[i];
        basis.push_back(v);
        alpha.push_back(a);
        orthogonalize(w);
        const double b = norm(w);

        const bool basis_full = basis.size() >= max_basis;
        bool restarted = false;
        if (b < 1e-10 || basis_full) {
            beta.push_back(0.0);
            if (!basis_full) {
                v_prev.assign(n, 0.0);
                beta_prev = 0.0;
                if (!fresh_vector(v)) {
                    restarted = false;  // space exhausted; fall through to the final check
                } else {
                    restarted = true;
                }
            }
            if (!restarted) {
                Ritz r = extract_ritz();
                const double worst =
                    r.values.size() < q
                        ? std::numeric_limits<double>::infinity()
                        : *std::max_element(r.residuals.begin(), r.residuals.end());
                if (worst <= residual_bound || basis.size() >= n) {
                    SpectralEmbedding emb;
                    emb.eigenvalues = std::move(r.values);
                    emb.phi = std::move(r.vectors);
                    return emb;
                }
                std::ostringstream msg;
                msg << "lanczos_eigs: no convergence after " << basis.size()
                    << " steps; worst residual " << worst;
                throw LanczosError(msg.str());
            }
            continue;
        }

        beta.push_back(b);
        v_prev = basis.back();
        beta_prev = b;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;

        if (basis.size() % check_every == 0 && basis.size() >= q) {
            Ritz r = extract_ritz();
            if (r.values.size() == q) {
                const double worst = *std::max_element(r.residuals.begin(), r.residuals.end());
                if (worst <= residual_bound) {
                    SpectralEmbedding emb;
                    emb.eigenvalues = std::move(r.values);
                    emb.phi = std::move(r.vectors);
                    return emb;
                }
            }
        }
    }
}

/// Index i in [1, max_k] before the largest eigenvalue gap; the estimated
/// cluster count. Ties resolve toward the smaller index.
inline std::size_t eigengap_estimate(const std::vector<double>& eigenvalues, std::size_t max_k) {
    if (eigenvalues.size() < 3) throw std::invalid_argument("eigengap_estimate: need at least 3 eigenvalues");
    if (max_k + 1 > eigenvalues.size() || max_k < 1)
        throw std::invalid_argument("eigengap_estimate: max_k out of range");
    std::size_t best_i = 1;
    double best_gap = eigenvalues[1] - eigenvalues[0];
    for (std::size_t i = 2; i <= max_k; ++i) {
        const double gap = eigenvalues[i] - eigenvalues[i - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best_i = i;
        }
    }
    return best_i;
}

/// EMB1 container: magic; u32 n; u32 q; q f64 eigenvalues; n*q f64 phi
/// row-major.
inline void save_embedding(const std::filesystem::path& path, const SpectralEmbedding& emb) {
    auto os = io::open_out(path);
    os.write("EMB1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(emb.n()));
    io::write_u32(os, static_cast<std::uint32_t>(emb.q()));
    for (double ev : emb.eigenvalues) io::write_f64(os, ev);
    for (std::size_t i = 0; i < emb.n(); ++i)
        for (std::size_t j = 0; j < emb.q(); ++j) io::write_f64(os, emb.phi(i, j));
    if (!os) throw IoError("failed writing " + path.string());
}

inline SpectralEmbedding load_embedding(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "EMB1", "EMB1 embedding");
    const std::uint32_t n = io::read_u32(is);
    const std::uint32_t q = io::read_u32(is);
    SpectralEmbedding emb;
    emb.eigenvalues.resize(q);
    for (std::uint32_t j = 0; j < q; ++j) emb.eigenvalues[j] = io::read_f64(is);
    emb.phi = Matrix(n, q);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < q; ++j) emb.phi(i, j) = io::read_f64(is);
    return emb;
}

}  // namespace spray
