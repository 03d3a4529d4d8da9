#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"

namespace spray {

namespace detail {

inline double pythag(double a, double b) {
    const double absa = std::fabs(a);
    const double absb = std::fabs(b);
    if (absa > absb) return absa * std::sqrt(1.0 + sqr(absb / absa));
    return absb == 0.0 ? 0.0 : absb * std::sqrt(1.0 + sqr(absa / absb));
}

/// Householder reduction of the symmetric matrix `a` to tridiagonal form.
/// On exit `a` holds the accumulated orthogonal transform, `d` the diagonal
/// and `e` the subdiagonal (e[0] unused, e[i] couples rows i-1 and i).
inline void householder_tridiag(Matrix& a, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = a.rows();
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    for (std::size_t ii = n; ii-- > 1;) {
        const std::size_t i = ii;
        const std::size_t l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(a(i, k));
            if (scale == 0.0) {
                e[i] = a(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    a(j, i) = a(i, j) / h;
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    e[j] = g / h;
                    f += e[j] * a(i, j);
                }
                const double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a(i, j);
                    const double gj = e[j] - hh * f;
                    e[j] = gj;
                    for (std::size_t k = 0; k <= j; ++k) a(j, k) -= f * e[k] + gj * a(i, k);
                }
            }
        } else {
            e[i] = a(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] != 0.0) {
            for (std::size_t j = 0; j < i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k < i; ++k) g += a(i, k) * a(k, j);
                for (std::size_t k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
            }
        }
        d[i] = a(i, i);
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j) = 0.0;
    }
}

}  // namespace detail

/// QL iteration with implicit shifts on a symmetric tridiagonal matrix.
/// `d` holds the diagonal, `e` the subdiagonal with e[0] unused (e[i]
/// couples d[i-1] and d[i]); `z` accumulates the rotations and should enter
/// as the identity (plain tridiagonal problem) or as the Householder
/// transform. On exit d holds eigenvalues, columns of z the eigenvectors.
inline void tridiag_ql(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
    const std::size_t n = d.size();
    if (n == 0) return;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) + dd == dd) break;
            }
            if (m != l) {
                if (iter++ == 50) throw std::runtime_error("tridiag_ql: too many iterations");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = detail::pythag(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                bool underflow = false;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = detail::pythag(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (std::size_t k = 0; k < n; ++k) {
                        f = z(k, i + 1);
                        z(k, i + 1) = s * z(k, i) + c * f;
                        z(k, i) = c * z(k, i) - s * f;
                    }
                }
                if (underflow) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

struct SymEigenResult {
    std::vector<double> values;  // ascending
    Matrix vectors;              // columns correspond to values
};

/// Full eigendecomposition of a dense symmetric matrix (Householder
/// tridiagonalization followed by implicit-shift QL), eigenvalues ascending.
inline SymEigenResult sym_eigen(Matrix a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("sym_eigen: matrix must be square");
    std::vector<double> d, e;
    detail::householder_tridiag(a, d, e);
    tridiag_ql(d, e, a);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
    SymEigenResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = d[order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = a(i, order[j]);
    }
    return out;
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix& a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("cholesky: matrix must be square");
    Matrix L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
        if (!(diag > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        L(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

/// Solves L y = b with L lower triangular.
inline std::vector<double> solve_lower(const Matrix& L, const std::vector<double>& b) {
    const std::size_t n = L.rows();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
        y[i] = s / L(i, i);
    }
    return y;
}

/// Solves L^T x = y with L lower triangular.
inline std::vector<double> solve_lower_transposed(const Matrix& L, const std::vector<double>& y) {
    const std::size_t n = L.rows();
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
        x[i] = s / L(i, i);
    }
    return x;
}

}  // namespace spray
