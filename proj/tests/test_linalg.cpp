#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "spray/core.hpp"
#include "spray/linalg.hpp"

using namespace spray;

namespace {

Matrix random_symmetric(std::size_t n, Rng& rng) {
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = gaussian(rng);
            a(i, j) = v;
            a(j, i) = v;
        }
    return a;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

}  // namespace

TEST_CASE("sym_eigen matches the dense oracle on random symmetric matrices") {
    Rng rng = make_rng(1234);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(uniform_index(rng, 30));
        Matrix a = random_symmetric(n, rng);
        const SymEigenResult got = sym_eigen(a);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a));
        REQUIRE(es.info() == Eigen::Success);
        for (std::size_t i = 0; i < n; ++i)
            REQUIRE(got.values[i] == Catch::Approx(es.eigenvalues()(static_cast<long>(i))).margin(1e-9));

        // Residuals and orthonormality of the returned vectors.
        for (std::size_t j = 0; j < n; ++j) {
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double av = 0.0;
                for (std::size_t t = 0; t < n; ++t) av += a(i, t) * got.vectors(t, j);
                res += sqr(av - got.values[j] * got.vectors(i, j));
            }
            REQUIRE(std::sqrt(res) < 1e-8 * (1.0 + std::fabs(got.values[j])) * n);
        }
        for (std::size_t j1 = 0; j1 < n; ++j1)
            for (std::size_t j2 = j1; j2 < n; ++j2) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += got.vectors(i, j1) * got.vectors(i, j2);
                REQUIRE(dot == Catch::Approx(j1 == j2 ? 1.0 : 0.0).margin(1e-8));
            }
    }
}

TEST_CASE("sym_eigen handles repeated eigenvalues") {
    // diag(2, 2, 5) rotated by a fixed orthogonal transform.
    Matrix a(3, 3);
    const double c = std::cos(0.7), s = std::sin(0.7);
    // R = rotation in the (0,2) plane; A = R diag(2,2,5) R^T.
    double R[3][3] = {{c, 0, -s}, {0, 1, 0}, {s, 0, c}};
    double D[3] = {2, 2, 5};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double v = 0.0;
            for (int t = 0; t < 3; ++t) v += R[i][t] * D[t] * R[j][t];
            a(i, j) = v;
        }
    const SymEigenResult got = sym_eigen(a);
    REQUIRE(got.values[0] == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(got.values[1] == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(got.values[2] == Catch::Approx(5.0).margin(1e-10));
}

TEST_CASE("cholesky factors and triangular solves round-trip") {
    Rng rng = make_rng(99);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform_index(rng, 12));
        Matrix g(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g(i, j) = gaussian(rng);
        // a = g g^T + I is s.p.d.
        Matrix a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double v = i == j ? 1.0 : 0.0;
                for (std::size_t t = 0; t < n; ++t) v += g(i, t) * g(j, t);
                a(i, j) = v;
            }
        const Matrix L = cholesky(a);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double v = 0.0;
                for (std::size_t t = 0; t <= std::min(i, j); ++t) v += L(i, t) * L(j, t);
                REQUIRE(v == Catch::Approx(a(i, j)).margin(1e-9));
            }
        std::vector<double> b(n);
        for (double& x : b) x = gaussian(rng);
        const auto y = solve_lower(L, b);
        const auto x = solve_lower_transposed(L, y);
        // L L^T x should reproduce b.
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < n; ++j) v += a(i, j) * x[j];
            REQUIRE(v == Catch::Approx(b[i]).margin(1e-7));
        }
    }
}

TEST_CASE("cholesky rejects indefinite matrices") {
    Matrix a(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = -1.0;
    REQUIRE_THROWS_AS(cholesky(a), std::runtime_error);
}
