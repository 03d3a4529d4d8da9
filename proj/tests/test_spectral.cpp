#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "spray/affinity.hpp"
#include "spray/core.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/lanczos.hpp"

using namespace spray;

namespace {

DistanceMatrix euclidean_from_points(const std::vector<std::pair<double, double>>& pts) {
    Matrix x(pts.size(), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        x(i, 0) = pts[i].first;
        x(i, 1) = pts[i].second;
    }
    return pairwise_points_euclidean(x);
}

Matrix random_point_matrix(std::size_t n, std::size_t dims, Rng& rng) {
    Matrix x(n, dims);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = gaussian(rng);
    return x;
}

// Oracle: the normalized laplacian assembled with dense arithmetic.
Eigen::MatrixXd dense_lsym_oracle(const AffinityGraph& g) {
    const std::size_t n = g.n;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [j, v] : g.rows[i]) a(static_cast<long>(i), static_cast<long>(j)) = v;
    Eigen::VectorXd deg = a.rowwise().sum();
    Eigen::MatrixXd dinv = deg.cwiseInverse().cwiseSqrt().asDiagonal();
    Eigen::MatrixXd lap = Eigen::MatrixXd(deg.asDiagonal()) - a;
    return dinv * lap * dinv;
}

}  // namespace

TEST_CASE("knn affinity marks and symmetrizes neighbor relations") {
    SECTION("two tight pairs, k=1: ones inside pairs, zero across") {
        const DistanceMatrix d = euclidean_from_points({{0.0, 0.0}, {0.1, 0.0}, {5.0, 0.0}, {5.1, 0.0}});
        const AffinityGraph g = knn_affinity(d, 1);
        REQUIRE(g.at(0, 1) == 1.0);
        REQUIRE(g.at(1, 0) == 1.0);
        REQUIRE(g.at(2, 3) == 1.0);
        REQUIRE(g.at(0, 2) == 0.0);
        REQUIRE(g.at(0, 0) == 0.0);
    }
    SECTION("three collinear points produce a half edge") {
        const DistanceMatrix d = euclidean_from_points({{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}});
        const AffinityGraph g = knn_affinity(d, 1);
        REQUIRE(g.at(0, 1) == 1.0);
        REQUIRE(g.at(1, 2) == 0.5);
        REQUIRE(g.at(0, 2) == 0.0);
    }
    SECTION("k = n-1 connects everything with weight one") {
        Rng rng = make_rng(2);
        const DistanceMatrix d = pairwise_points_euclidean(random_point_matrix(7, 3, rng));
        const AffinityGraph g = knn_affinity(d, 6);
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 7; ++j)
                REQUIRE(g.at(i, j) == (i == j ? 0.0 : 1.0));
    }
    SECTION("row degrees stay between k and 2k, matrix is exactly symmetric") {
        Rng rng = make_rng(3);
        const DistanceMatrix d = pairwise_points_euclidean(random_point_matrix(40, 2, rng));
        const int k = 5;
        const AffinityGraph g = knn_affinity(d, k);
        const Matrix a = g.dense();
        for (std::size_t i = 0; i < g.n; ++i) {
            const std::size_t nz = g.rows[i].size();
            REQUIRE(nz >= static_cast<std::size_t>(k));
            REQUIRE(nz <= static_cast<std::size_t>(2 * k));
            for (std::size_t j = 0; j < g.n; ++j) {
                REQUIRE(a(i, j) == a(j, i));
                REQUIRE((a(i, j) == 0.0 || a(i, j) == 0.5 || a(i, j) == 1.0));
            }
            REQUIRE(a(i, i) == 0.0);
        }
        // Symmetrizing an already-symmetric affinity changes nothing.
        for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t j = 0; j < g.n; ++j) REQUIRE(0.5 * (a(i, j) + a(j, i)) == a(i, j));
    }
    SECTION("distance ties break toward the smaller index") {
        // Point 0 is equidistant from 1 and 2; its single neighbor must be 1.
        // Points 2 and 3 pair up so no half-edge reaches 0 from that side.
        const DistanceMatrix d =
            euclidean_from_points({{0.0, 0.0}, {1.0, 0.0}, {-1.0, 0.0}, {-1.1, 0.0}});
        const AffinityGraph g = knn_affinity(d, 1);
        REQUIRE(g.at(0, 1) == 1.0);
        REQUIRE(g.at(0, 2) == 0.0);
        REQUIRE(g.at(2, 3) == 1.0);
    }
    SECTION("k >= n is rejected") {
        const DistanceMatrix d = euclidean_from_points({{0, 0}, {1, 1}, {2, 2}});
        REQUIRE_THROWS_AS(knn_affinity(d, 3), std::invalid_argument);
    }
}

TEST_CASE("laplacians") {
    SECTION("K2 has normalized spectrum {0, 2}") {
        AffinityGraph g;
        g.n = 2;
        g.k = 1;
        g.rows = {{{1, 1.0}}, {{0, 1.0}}};
        const Laplacians lap = laplacians(g);
        const SymEigenResult eig = sym_eigen(lap.lap_sym.dense());
        REQUIRE(eig.values[0] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(eig.values[1] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("zero eigenvalue multiplicity equals the component count") {
        // Three disjoint triangles via a block distance matrix.
        std::vector<std::pair<double, double>> pts;
        for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 3; ++i)
                pts.emplace_back(10.0 * b + 0.1 * i, 0.3 * i);
        const AffinityGraph g = knn_affinity(euclidean_from_points(pts), 2);
        REQUIRE(connected_components(g) == 3);
        const SymEigenResult eig = sym_eigen(laplacians(g).lap_sym.dense());
        int zeros = 0;
        for (double v : eig.values)
            if (std::fabs(v) < 1e-9) ++zeros;
        REQUIRE(zeros == 3);
    }
    SECTION("matches dense arithmetic entrywise") {
        Rng rng = make_rng(5);
        const AffinityGraph g = knn_affinity(pairwise_points_euclidean(random_point_matrix(8, 2, rng)), 3);
        const Laplacians lap = laplacians(g);
        const Eigen::MatrixXd oracle = dense_lsym_oracle(g);
        const Matrix mine = lap.lap_sym.dense();
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                REQUIRE(mine(i, j) == Catch::Approx(oracle(static_cast<long>(i), static_cast<long>(j))).margin(1e-12));
        // Symmetric within 1e-12 and p.s.d. within -1e-9.
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) REQUIRE(std::fabs(mine(i, j) - mine(j, i)) < 1e-12);
        const SymEigenResult eig = sym_eigen(mine);
        REQUIRE(eig.values.front() > -1e-9);
        REQUIRE(eig.values.back() < 2.0 + 1e-9);
    }
}

TEST_CASE("lanczos eigensolver") {
    SECTION("full spectrum of a 10-node graph matches the dense oracle") {
        Rng rng = make_rng(8);
        const AffinityGraph g = knn_affinity(pairwise_points_euclidean(random_point_matrix(10, 2, rng)), 3);
        const Laplacians lap = laplacians(g);
        const SpectralEmbedding emb = lanczos_eigs(lap.lap_sym, 10);
        Eigen::MatrixXd lsym = dense_lsym_oracle(g);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lsym);
        for (std::size_t j = 0; j < 10; ++j)
            REQUIRE(emb.eigenvalues[j] == Catch::Approx(es.eigenvalues()(static_cast<long>(j))).margin(1e-8));
    }
    SECTION("two disjoint K2 blocks give (0, 0, 2, 2)") {
        const DistanceMatrix d = euclidean_from_points({{0, 0}, {0.1, 0}, {9, 9}, {9.1, 9}});
        const Laplacians lap = laplacians(knn_affinity(d, 1));
        const SpectralEmbedding emb = lanczos_eigs(lap.lap_sym, 4);
        REQUIRE(emb.eigenvalues[0] == Catch::Approx(0.0).margin(1e-10));
        REQUIRE(emb.eigenvalues[1] == Catch::Approx(0.0).margin(1e-10));
        REQUIRE(emb.eigenvalues[2] == Catch::Approx(2.0).margin(1e-10));
        REQUIRE(emb.eigenvalues[3] == Catch::Approx(2.0).margin(1e-10));
    }
    SECTION("random graphs: smallest-q agreement with the dense oracle") {
        Rng rng = make_rng(13);
        for (int trial = 0; trial < 6; ++trial) {
            const std::size_t n = 20 + uniform_index(rng, 60);
            const AffinityGraph g =
                knn_affinity(pairwise_points_euclidean(random_point_matrix(n, 3, rng)), 6);
            const Laplacians lap = laplacians(g);
            const std::size_t q = std::min<std::size_t>(16, n);
            const SpectralEmbedding emb = lanczos_eigs(lap.lap_sym, q);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_lsym_oracle(g));
            for (std::size_t j = 0; j < q; ++j)
                REQUIRE(emb.eigenvalues[j] ==
                        Catch::Approx(es.eigenvalues()(static_cast<long>(j))).margin(1e-8));
            // Explicit residuals and column orthonormality.
            const Matrix lsym = lap.lap_sym.dense();
            for (std::size_t j = 0; j < q; ++j) {
                double res = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double av = 0.0;
                    for (std::size_t t = 0; t < n; ++t) av += lsym(i, t) * emb.phi(t, j);
                    res += sqr(av - emb.eigenvalues[j] * emb.phi(i, j));
                }
                REQUIRE(std::sqrt(res) <= 1e-8);
            }
            for (std::size_t a = 0; a < q; ++a)
                for (std::size_t b = a; b < q; ++b) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n; ++i) dot += emb.phi(i, a) * emb.phi(i, b);
                    REQUIRE(dot == Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-6));
                }
            // Spectrum bounds for the normalized laplacian.
            REQUIRE(emb.eigenvalues.front() >= -1e-9);
            REQUIRE(emb.eigenvalues.back() <= 2.0 + 1e-9);
            // Ascending order.
            REQUIRE(std::is_sorted(emb.eigenvalues.begin(), emb.eigenvalues.end()));
        }
    }
    SECTION("permuting the samples permutes phi rows and keeps the spectrum") {
        Rng rng = make_rng(77);
        const std::size_t n = 24;
        const Matrix pts = random_point_matrix(n, 2, rng);
        const DistanceMatrix d = pairwise_points_euclidean(pts);
        const std::size_t q = 5;
        const SpectralEmbedding emb = lanczos_eigs(laplacians(knn_affinity(d, 4)).lap_sym, q);

        const auto perm = sample_without_replacement(rng, n, n);
        DistanceMatrix dp;
        dp.metric = d.metric;
        dp.values = Matrix(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) dp.values(i, j) = d.values(perm[i], perm[j]);
        const SpectralEmbedding emb_p = lanczos_eigs(laplacians(knn_affinity(dp, 4)).lap_sym, q);

        for (std::size_t j = 0; j < q; ++j)
            REQUIRE(emb_p.eigenvalues[j] == Catch::Approx(emb.eigenvalues[j]).margin(1e-8));
        // Guard against near-degenerate pairs that would make eigenvector
        // comparison ill-posed for this fixture.
        for (std::size_t j = 0; j + 1 < q; ++j)
            REQUIRE(emb.eigenvalues[j + 1] - emb.eigenvalues[j] > 1e-3);
        for (std::size_t j = 0; j < q; ++j) {
            // Align the sign on the largest-magnitude entry.
            std::size_t ref = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (std::fabs(emb.phi(i, j)) > std::fabs(emb.phi(ref, j))) ref = i;
            // Find where row ref landed in the permuted order.
            std::size_t ref_p = 0;
            while (perm[ref_p] != ref) ++ref_p;
            const double sign = emb.phi(ref, j) * emb_p.phi(ref_p, j) >= 0.0 ? 1.0 : -1.0;
            for (std::size_t i = 0; i < n; ++i)
                REQUIRE(emb_p.phi(i, j) * sign == Catch::Approx(emb.phi(perm[i], j)).margin(1e-5));
        }
    }
    SECTION("determinism: identical inputs give identical embeddings") {
        Rng rng = make_rng(99);
        const AffinityGraph g = knn_affinity(pairwise_points_euclidean(random_point_matrix(30, 2, rng)), 5);
        const Laplacians lap = laplacians(g);
        const SpectralEmbedding a = lanczos_eigs(lap.lap_sym, 6);
        const SpectralEmbedding b = lanczos_eigs(lap.lap_sym, 6);
        REQUIRE(a.eigenvalues == b.eigenvalues);
        REQUIRE(a.phi == b.phi);
    }
}

TEST_CASE("eigengap estimation") {
    SECTION("four flat values then a jump indicate four clusters") {
        REQUIRE(eigengap_estimate({0.0, 0.0, 0.0, 0.0, 0.6, 0.7, 0.75}, 6) == 4);
    }
    SECTION("a strictly linear spectrum gives one (tie toward the smallest index)") {
        std::vector<double> ev;
        for (int i = 0; i < 8; ++i) ev.push_back(0.125 * i);  // exact in binary, gaps tie exactly
        REQUIRE(eigengap_estimate(ev, 7) == 1);
    }
    SECTION("dominant first gap") {
        REQUIRE(eigengap_estimate({0.0, 0.5, 0.51, 0.52}, 3) == 1);
    }
    SECTION("input validation") {
        REQUIRE_THROWS_AS(eigengap_estimate({0.0, 1.0}, 1), std::invalid_argument);
    }
}

TEST_CASE("EMB1 files round-trip") {
    Rng rng = make_rng(123);
    SpectralEmbedding emb;
    emb.eigenvalues = {0.0, 0.1, 0.4};
    emb.phi = Matrix(5, 3);
    for (std::size_t i = 0; i < emb.phi.size(); ++i) emb.phi.data()[i] = gaussian(rng);
    const auto path = std::filesystem::temp_directory_path() / "spray_test_emb1.bin";
    save_embedding(path, emb);
    const SpectralEmbedding back = load_embedding(path);
    REQUIRE(back.eigenvalues == emb.eigenvalues);
    REQUIRE(back.phi == emb.phi);
    std::filesystem::remove(path);
}
