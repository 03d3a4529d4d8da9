#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spray/barycenter.hpp"
#include "spray/core.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/gromov.hpp"
#include "spray/measure.hpp"
#include "spray/sinkhorn.hpp"

using namespace spray;

namespace {

Grid random_grid(std::size_t h, std::size_t w, Rng& rng, bool positive = false) {
    Grid g(h, w);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = positive ? uniform01(rng) + 0.01 : gaussian(rng);
    return g;
}

// Independent oracle: naive double loop over pixels.
double euclidean_oracle(const Grid& a, const Grid& b) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
    return std::sqrt(s);
}

PointCloud cloud_from(std::vector<std::pair<double, double>> pts) {
    PointCloud c;
    c.coords = std::move(pts);
    c.masses.assign(c.coords.size(), 1.0 / static_cast<double>(c.coords.size()));
    return c;
}

// Oracle for 3-point clouds with uniform masses: exhaustive search over the
// six permutation couplings.
double gw_permutation_oracle(const PointCloud& a, const PointCloud& b) {
    const Matrix da = spray::detail::intra_distances(a);
    const Matrix db = spray::detail::intra_distances(b);
    std::vector<int> perm = {0, 1, 2};
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
                cost += sqr(da(i, k) - db(perm[i], perm[k])) / 9.0;
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("pairwise euclidean distances") {
    Rng rng = make_rng(7);
    SECTION("map against itself is zero") {
        const Grid g = random_grid(4, 4, rng);
        const DistanceMatrix d = pairwise_euclidean({g, g});
        REQUIRE(d.values(0, 1) == 0.0);
        REQUIRE(d.values(0, 0) == 0.0);
    }
    SECTION("single differing coordinate gives the absolute difference") {
        Grid a(3, 3), b(3, 3);
        a(1, 2) = 0.8;
        b(1, 2) = 0.3;
        const DistanceMatrix d = pairwise_euclidean({a, b});
        REQUIRE(d.values(0, 1) == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("five random maps match the naive loop") {
        std::vector<Grid> maps;
        for (int i = 0; i < 5; ++i) maps.push_back(random_grid(4, 4, rng));
        const DistanceMatrix d = pairwise_euclidean(maps);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                REQUIRE(d.values(i, j) == Catch::Approx(euclidean_oracle(maps[i], maps[j])).margin(1e-12));
                REQUIRE(d.values(i, j) == d.values(j, i));
            }
    }
    SECTION("triangle inequality holds on random triples") {
        std::vector<Grid> maps;
        for (int i = 0; i < 12; ++i) maps.push_back(random_grid(5, 5, rng));
        const DistanceMatrix d = pairwise_euclidean(maps);
        for (int t = 0; t < 200; ++t) {
            const std::size_t i = uniform_index(rng, 12), j = uniform_index(rng, 12), k = uniform_index(rng, 12);
            REQUIRE(d.values(i, j) <= d.values(i, k) + d.values(k, j) + 1e-12);
        }
    }
    SECTION("parallel build matches the sequential one") {
        std::vector<Grid> maps;
        for (int i = 0; i < 9; ++i) maps.push_back(random_grid(6, 6, rng));
        const DistanceMatrix a = pairwise_euclidean(maps, 1);
        const DistanceMatrix b = pairwise_euclidean(maps, 4);
        REQUIRE(a.values == b.values);
    }
}

TEST_CASE("to_measure clips and normalizes") {
    SECTION("all-positive map is divided by its sum") {
        Grid g(2, 2);
        g(0, 0) = 1;
        g(0, 1) = 1;
        g(1, 0) = 2;
        g(1, 1) = 1;
        const Grid m = to_measure(g);
        REQUIRE(m(1, 0) == Catch::Approx(0.4));
        REQUIRE(m.sum() == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("negatives are zeroed before normalization") {
        Grid g(1, 3);
        g(0, 0) = -5.0;
        g(0, 1) = 3.0;
        g(0, 2) = 1.0;
        const Grid m = to_measure(g);
        REQUIRE(m(0, 0) == 0.0);
        REQUIRE(m(0, 1) == Catch::Approx(0.75));
    }
    SECTION("random maps normalize to unit mass") {
        Rng rng = make_rng(3);
        for (int t = 0; t < 10; ++t) {
            const Grid m = to_measure(random_grid(6, 5, rng));
            REQUIRE(std::fabs(m.sum() - 1.0) < 1e-12);
        }
    }
    SECTION("zero positive mass is a degenerate measure") {
        Grid g(2, 2, -1.0);
        REQUIRE_THROWS_AS(to_measure(g), DegenerateMeasureError);
    }
}

TEST_CASE("extract_points takes the smallest prefix covering the mass fraction") {
    SECTION("single hot pixel") {
        Grid g(4, 4);
        g(2, 1) = 3.0;
        const PointCloud c = extract_points(g);
        REQUIRE(c.size() == 1);
        REQUIRE(c.masses[0] == Catch::Approx(1.0));
        REQUIRE(c.coords[0] == std::pair<double, double>(2.0, 1.0));
    }
    SECTION("100 equal pixels at fraction 0.99 keep exactly 99 points") {
        Grid g(10, 10, 1.0);
        const PointCloud c = extract_points(g, 0.99);
        REQUIRE(c.size() == 99);
    }
    SECTION("random sparse map matches the sort-and-accumulate oracle") {
        Rng rng = make_rng(17);
        Grid g(6, 6);
        for (std::size_t i = 0; i < g.size(); ++i)
            g.data()[i] = uniform01(rng) < 0.4 ? uniform01(rng) : 0.0;
        const double fraction = 0.9;
        const PointCloud c = extract_points(g, fraction);

        // Oracle: collect positive pixels, sort by (value desc, index asc),
        // accumulate until the fraction is reached.
        std::vector<std::pair<double, std::size_t>> px;
        double total = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.data()[i] > 0.0) {
                px.emplace_back(-g.data()[i], i);
                total += g.data()[i];
            }
        std::sort(px.begin(), px.end());
        std::size_t count = 0;
        double acc = 0.0;
        for (const auto& [negv, idx] : px) {
            acc += -negv;
            ++count;
            if (acc >= fraction * total) break;
        }
        REQUIRE(c.size() == count);
        REQUIRE(std::accumulate(c.masses.begin(), c.masses.end(), 0.0) == Catch::Approx(1.0).margin(1e-12));
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t idx = px[i].second;
            REQUIRE(c.coords[i].first == static_cast<double>(idx / 6));
            REQUIRE(c.coords[i].second == static_cast<double>(idx % 6));
        }
    }
    SECTION("ties break in row-major order") {
        Grid g(2, 2, 1.0);
        const PointCloud c = extract_points(g, 0.5);
        REQUIRE(c.size() == 2);
        REQUIRE(c.coords[0] == std::pair<double, double>(0.0, 0.0));
        REQUIRE(c.coords[1] == std::pair<double, double>(0.0, 1.0));
    }
}

TEST_CASE("sinkhorn solves entropic transport") {
    SECTION("same dirac on both sides costs about zero") {
        std::vector<double> mu = {0.0, 1.0, 0.0};
        Matrix cost(3, 3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) cost(i, j) = sqr(double(i) - double(j));
        const SinkhornParams p{.epsilon = 1e-2};
        const TransportPlan plan = sinkhorn(mu, mu, cost, p);
        REQUIRE(plan.cost <= 10 * p.epsilon);
        REQUIRE(plan.converged);
    }
    SECTION("two diracs converge to the squared ground distance") {
        const double d = 3.0;
        std::vector<double> mu = {1.0, 0.0}, nu = {0.0, 1.0};
        Matrix cost(2, 2);
        cost(0, 0) = 0.0;
        cost(0, 1) = d * d;
        cost(1, 0) = d * d;
        cost(1, 1) = 0.0;
        const SinkhornParams p{.epsilon = 1e-3 * d * d};
        const TransportPlan plan = sinkhorn(mu, nu, cost, p);
        REQUIRE(std::fabs(plan.cost - d * d) / (d * d) < 0.05);
    }
    SECTION("uniform marginals stay uniform") {
        Rng rng = make_rng(5);
        const std::size_t n = 6;
        std::vector<double> mu(n, 1.0 / n);
        Matrix cost(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cost(i, j) = uniform01(rng);
        const SinkhornParams p{.epsilon = 5e-2, .marginal_tol = 1e-9};
        const TransportPlan plan = sinkhorn(mu, mu, cost, p);
        REQUIRE(plan.converged);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0, col = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row += plan.plan(i, j);
                col += plan.plan(j, i);
            }
            REQUIRE(row == Catch::Approx(1.0 / n).margin(1e-8));
            REQUIRE(col == Catch::Approx(1.0 / n).margin(1e-8));
        }
    }
    SECTION("marginal feasibility on random measure pairs") {
        Rng rng = make_rng(11);
        for (int t = 0; t < 10; ++t) {
            const std::size_t m = 3 + uniform_index(rng, 6), k = 3 + uniform_index(rng, 6);
            std::vector<double> mu(m), nu(k);
            double ms = 0.0, ks = 0.0;
            for (double& v : mu) ms += (v = uniform01(rng) + 1e-3);
            for (double& v : nu) ks += (v = uniform01(rng) + 1e-3);
            for (double& v : mu) v /= ms;
            for (double& v : nu) v /= ks;
            Matrix cost(m, k);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < k; ++j) cost(i, j) = uniform01(rng);
            const SinkhornParams p{.epsilon = 1e-2};
            const TransportPlan plan = sinkhorn(mu, nu, cost, p);
            REQUIRE(plan.converged);
            double viol = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < k; ++j) row += plan.plan(i, j);
                viol = std::max(viol, std::fabs(row - mu[i]));
            }
            for (std::size_t j = 0; j < k; ++j) {
                double col = 0.0;
                for (std::size_t i = 0; i < m; ++i) col += plan.plan(i, j);
                viol = std::max(viol, std::fabs(col - nu[j]));
            }
            REQUIRE(viol < 1e-7);
            // cost consistency with the plan
            double cdot = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < k; ++j) cdot += plan.plan(i, j) * cost(i, j);
            REQUIRE(plan.cost == Catch::Approx(cdot).margin(1e-12));
        }
    }
    SECTION("zero-mass marginal is rejected") {
        std::vector<double> mu = {0.0, 0.0};
        std::vector<double> nu = {0.5, 0.5};
        Matrix cost(2, 2, 1.0);
        REQUIRE_THROWS_AS(sinkhorn(mu, nu, cost, {}), DegenerateMeasureError);
    }
}

TEST_CASE("wasserstein distance between grids") {
    SECTION("identical maps cost at most 10 epsilon") {
        Rng rng = make_rng(21);
        const Grid g = random_grid(8, 8, rng, true);
        const SinkhornParams p{.epsilon = 1e-2};
        REQUIRE(wasserstein_distance(g, g, p) <= 10 * p.epsilon);
    }
    SECTION("translated blob costs the squared normalized shift") {
        Grid a(12, 12), b(12, 12);
        for (std::size_t r = 2; r < 4; ++r)
            for (std::size_t c = 2; c < 4; ++c) {
                a(r, c) = 1.0;
                b(r, c + 4) = 1.0;
            }
        const double diag = grid_diagonal(12, 12);
        const double expected = sqr(4.0 / diag);
        const SinkhornParams p{.epsilon = 1e-3, .max_iter = 20000};
        const double got = wasserstein_distance(a, b, p);
        REQUIRE(std::fabs(got - expected) / expected < 0.10);
    }
    SECTION("argument order does not matter") {
        Rng rng = make_rng(23);
        const Grid a = random_grid(6, 6, rng, true);
        const Grid b = random_grid(6, 6, rng, true);
        const SinkhornParams p{.epsilon = 1e-2};
        REQUIRE(std::fabs(wasserstein_distance(a, b, p) - wasserstein_distance(b, a, p)) < 1e-6);
    }
}

TEST_CASE("gromov-wasserstein compares intra-cloud structure") {
    GromovParams params;
    params.epsilon = 2e-4;
    params.outer_iter = 100;

    SECTION("identical clouds cost nearly nothing") {
        Rng rng = make_rng(31);
        PointCloud c;
        for (int i = 0; i < 10; ++i) c.coords.emplace_back(uniform01(rng), uniform01(rng));
        c.masses.assign(10, 0.1);
        const double cost = gromov_wasserstein(c, c, params).cost;
        const Matrix d = spray::detail::intra_distances(c);
        double mean = 0.0;
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) mean += d(i, j);
        mean /= 90.0;
        REQUIRE(cost <= 1e-3 * mean * mean);
    }
    SECTION("rigid motions and mirroring leave the cost unchanged") {
        Rng rng = make_rng(37);
        PointCloud c;
        for (int i = 0; i < 8; ++i) c.coords.emplace_back(uniform01(rng), uniform01(rng));
        c.masses.assign(8, 1.0 / 8);
        const double self_cost = gromov_wasserstein(c, c, params).cost;
        const double theta = 1.1;
        PointCloud moved = c;
        for (auto& [r, x] : moved.coords) {
            const double nr = -(std::cos(theta) * r - std::sin(theta) * x) + 0.7;  // rotate + mirror + translate
            const double nx = std::sin(theta) * r + std::cos(theta) * x - 0.2;
            r = nr;
            x = nx;
        }
        const double moved_cost = gromov_wasserstein(c, moved, params).cost;
        REQUIRE(std::fabs(moved_cost - self_cost) < 1e-6);
    }
    SECTION("scaling is detected, exhaustive 3-point oracle agrees") {
        const PointCloud tri = cloud_from({{0.0, 0.0}, {0.0, 1.0}, {0.8, 0.5}});
        PointCloud scaled = tri;
        for (auto& [r, c] : scaled.coords) {
            r *= 2.0;
            c *= 2.0;
        }
        REQUIRE(gw_permutation_oracle(tri, tri) == Catch::Approx(0.0).margin(1e-15));
        REQUIRE(gw_permutation_oracle(tri, scaled) > 0.1);
        const double self_cost = gromov_wasserstein(tri, tri, params).cost;
        const double scaled_cost = gromov_wasserstein(tri, scaled, params).cost;
        REQUIRE(scaled_cost > self_cost);
    }
    SECTION("empty cloud is rejected") {
        REQUIRE_THROWS_AS(gromov_wasserstein(PointCloud{}, cloud_from({{0, 0}}), params),
                          std::invalid_argument);
    }
}

TEST_CASE("pairwise distance matrix dispatch") {
    Rng rng = make_rng(41);
    SECTION("identical maps give a zero off-diagonal under every metric") {
        const Grid g = random_grid(6, 6, rng, true);
        for (MetricTag tag : {MetricTag::euclidean, MetricTag::wasserstein, MetricTag::gromov_wasserstein}) {
            DistanceParams p;
            p.metric = tag;
            p.sinkhorn.epsilon = 1e-2;
            p.gromov.epsilon = 1e-3;
            const DistanceMatrix d = pairwise_distance_matrix({g, g}, p);
            REQUIRE(d.values(0, 1) <= 1e-1 * p.sinkhorn.epsilon + 10 * p.sinkhorn.epsilon);
            REQUIRE(d.values(0, 1) == d.values(1, 0));
            REQUIRE(d.values(0, 0) == 0.0);
        }
    }
    SECTION("euclidean dispatch equals pairwise_euclidean exactly") {
        std::vector<Grid> maps;
        for (int i = 0; i < 10; ++i) maps.push_back(random_grid(4, 4, rng));
        DistanceParams p;
        p.metric = MetricTag::euclidean;
        const DistanceMatrix a = pairwise_distance_matrix(maps, p);
        const DistanceMatrix b = pairwise_euclidean(maps);
        REQUIRE(a.values == b.values);
    }
    SECTION("rotated copies are mutual nearest neighbors under gromov") {
        Grid ell(8, 8), disc(8, 8), bar(8, 8);
        for (std::size_t r = 1; r < 7; ++r) ell(r, 1) = 1.0;
        for (std::size_t c = 1; c < 5; ++c) ell(6, c) = 1.0;
        Grid ell_rot(8, 8);
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 8; ++c) ell_rot(c, 7 - r) = ell(r, c);
        for (std::size_t r = 2; r < 6; ++r)
            for (std::size_t c = 2; c < 6; ++c)
                if (sqr(double(r) - 3.5) + sqr(double(c) - 3.5) <= 4.0) disc(r, c) = 1.0;
        for (std::size_t c = 0; c < 8; ++c) bar(3, c) = 1.0;

        DistanceParams p;
        p.metric = MetricTag::gromov_wasserstein;
        p.gromov.epsilon = 2e-4;
        p.gromov.outer_iter = 100;
        const DistanceMatrix d = pairwise_distance_matrix({ell, ell_rot, disc, bar}, p);
        // 0 and 1 must pick each other.
        for (std::size_t other = 2; other < 4; ++other) {
            REQUIRE(d.values(0, 1) < d.values(0, other));
            REQUIRE(d.values(0, 1) < d.values(1, other));
        }
    }
    SECTION("fewer than two maps is an error") {
        DistanceParams p;
        REQUIRE_THROWS_AS(pairwise_distance_matrix({random_grid(3, 3, rng)}, p), std::invalid_argument);
    }
    SECTION("DST1 files round-trip") {
        std::vector<Grid> maps;
        for (int i = 0; i < 5; ++i) maps.push_back(random_grid(4, 4, rng));
        const DistanceMatrix d = pairwise_euclidean(maps);
        const auto path = std::filesystem::temp_directory_path() / "spray_test_dst1.bin";
        save_distance_matrix(path, d);
        const DistanceMatrix back = load_distance_matrix(path);
        REQUIRE(back.metric == MetricTag::euclidean);
        REQUIRE(back.values == d.values);
        std::filesystem::remove(path);
    }
}

TEST_CASE("wasserstein barycenters on grids") {
    SECTION("one-hot weights reproduce the corner measure") {
        Rng rng = make_rng(53);
        std::vector<Grid> maps;
        for (int i = 0; i < 3; ++i) {
            Grid g(16, 16);
            // compact random blob
            const std::size_t r0 = 3 + uniform_index(rng, 8), c0 = 3 + uniform_index(rng, 8);
            for (std::size_t r = r0; r < r0 + 3; ++r)
                for (std::size_t c = c0; c < c0 + 3; ++c) g(r, c) = 0.5 + uniform01(rng);
            maps.push_back(std::move(g));
        }
        const double eps = 5e-5;
        const Grid b = wasserstein_barycenter(maps, {0.0, 1.0, 0.0}, eps, 100);
        const Grid expected = to_measure(maps[1]);
        double l1 = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) l1 += std::fabs(b.data()[i] - expected.data()[i]);
        REQUIRE(l1 <= 10 * eps);
        REQUIRE(b.sum() == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("two identical inputs reproduce themselves") {
        Grid g(12, 12);
        for (std::size_t r = 4; r < 7; ++r)
            for (std::size_t c = 5; c < 8; ++c) g(r, c) = 1.0;
        const double eps = 5e-5;
        const Grid b = wasserstein_barycenter({g, g}, {0.5, 0.5}, eps, 100);
        const Grid expected = to_measure(g);
        double l1 = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) l1 += std::fabs(b.data()[i] - expected.data()[i]);
        REQUIRE(l1 <= 10 * eps);
    }
    SECTION("midpoint of two diracs sits between them") {
        Grid a(16, 16), c(16, 16);
        a(8, 3) = 1.0;
        c(8, 13) = 1.0;
        const Grid b = wasserstein_barycenter({a, c}, {0.5, 0.5}, 1e-2, 300);
        std::size_t best = 0;
        for (std::size_t i = 1; i < b.size(); ++i)
            if (b.data()[i] > b.data()[best]) best = i;
        const std::size_t br = best / 16, bc = best % 16;
        REQUIRE(std::llabs(static_cast<long long>(br) - 8) <= 1);
        REQUIRE(std::llabs(static_cast<long long>(bc) - 8) <= 1);
        REQUIRE(b.sum() == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("bad weights are rejected") {
        Grid g(4, 4, 1.0);
        REQUIRE_THROWS_AS(wasserstein_barycenter({g, g}, {0.7, 0.7}, 1e-2, 10), std::invalid_argument);
    }
}

TEST_CASE("chebyshev interpolation weights") {
    const std::array<std::pair<double, double>, 4> corners = {
        std::pair{0.0, 0.0}, std::pair{1.0, 0.0}, std::pair{0.0, 1.0}, std::pair{1.0, 1.0}};
    SECTION("a corner position is one-hot") {
        const auto w = chebyshev_interpolation_weights({0.0, 0.0}, corners);
        REQUIRE(w[0] == Catch::Approx(1.0));
        REQUIRE(w[1] == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("the center weighs all corners equally") {
        const auto w = chebyshev_interpolation_weights({0.5, 0.5}, corners);
        for (double v : w) REQUIRE(v == Catch::Approx(0.25));
    }
    SECTION("edge position matches the direct formula") {
        const auto w = chebyshev_interpolation_weights({0.25, 0.0}, corners);
        REQUIRE(w[0] == Catch::Approx(0.75));
        REQUIRE(w[1] == Catch::Approx(0.25));
        REQUIRE(w[2] == Catch::Approx(0.0).margin(1e-15));
        REQUIRE(w[3] == Catch::Approx(0.0).margin(1e-15));
    }
}
