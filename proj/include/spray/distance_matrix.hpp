#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/gromov.hpp"
#include "spray/io.hpp"
#include "spray/measure.hpp"
#include "spray/parallel.hpp"
#include "spray/sinkhorn.hpp"

namespace spray {

enum class MetricTag : std::uint8_t {
    euclidean = 0,
    wasserstein = 1,
    gromov_wasserstein = 2,
};

inline const char* metric_name(MetricTag tag) {
    switch (tag) {
        case MetricTag::euclidean: return "euclidean";
        case MetricTag::wasserstein: return "wasserstein";
        case MetricTag::gromov_wasserstein: return "gromov_wasserstein";
    }
    throw std::invalid_argument("metric_name: unknown tag");
}

inline MetricTag metric_from_name(const std::string& name) {
    if (name == "euclidean") return MetricTag::euclidean;
    if (name == "wasserstein") return MetricTag::wasserstein;
    if (name == "gromov" || name == "gromov_wasserstein") return MetricTag::gromov_wasserstein;
    throw std::invalid_argument("unknown distance metric: " + name);
}

/// Symmetric pairwise dissimilarity matrix with a clean diagonal: entries are
/// mirrored from the upper triangle, clamped at zero, and the diagonal is
/// zeroed on construction.
struct DistanceMatrix {
    Matrix values;
    MetricTag metric = MetricTag::euclidean;

    std::size_t n() const { return values.rows(); }
};

namespace detail {

inline DistanceMatrix finalize_distance_matrix(Matrix upper, MetricTag tag) {
    const std::size_t n = upper.rows();
    for (std::size_t i = 0; i < n; ++i) {
        upper(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = upper(i, j);
            if (!(v > 0.0)) v = 0.0;  // clamp negatives and NaN-guard
            upper(i, j) = v;
            upper(j, i) = v;
        }
    }
    return DistanceMatrix{std::move(upper), tag};
}

}  // namespace detail

/// L2 distance between flattened maps, on signed relevance.
inline DistanceMatrix pairwise_euclidean(const std::vector<Grid>& maps, unsigned jobs = 1) {
    const std::size_t n = maps.size();
    for (const Grid& m : maps)
        if (!m.same_shape(maps[0])) throw std::invalid_argument("pairwise_euclidean: map shapes differ");
    Matrix d(n, n);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    parallel_for(pairs.size(), jobs, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        double s = 0.0;
        const double* a = maps[i].data();
        const double* b = maps[j].data();
        for (std::size_t t = 0; t < maps[i].size(); ++t) s += sqr(a[t] - b[t]);
        d(i, j) = std::sqrt(s);
    });
    return detail::finalize_distance_matrix(std::move(d), MetricTag::euclidean);
}

/// Euclidean distances between row vectors of a point matrix (used by the
/// spectral-clustering toy inputs, where samples are plain points).
inline DistanceMatrix pairwise_points_euclidean(const Matrix& points, unsigned jobs = 1) {
    std::vector<Grid> rows;
    rows.reserve(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        Grid r(1, points.cols());
        for (std::size_t j = 0; j < points.cols(); ++j) r(0, j) = points(i, j);
        rows.push_back(std::move(r));
    }
    return pairwise_euclidean(rows, jobs);
}

struct DistanceParams {
    MetricTag metric = MetricTag::euclidean;
    SinkhornParams sinkhorn;
    GromovParams gromov;
    double extract_mass_fraction = 0.99;
    unsigned jobs = 1;
};

/// Dispatches to the requested metric and fills the n(n-1)/2 upper triangle
/// as independent tasks. OT metrics act on the positive part of the maps;
/// for Gromov-Wasserstein, point clouds are extracted once per map with
/// coordinates normalized by the grid diagonal.
inline DistanceMatrix pairwise_distance_matrix(const std::vector<Grid>& maps, const DistanceParams& params) {
    const std::size_t n = maps.size();
    if (n < 2) throw std::invalid_argument("pairwise_distance_matrix: need at least 2 maps");
    for (const Grid& m : maps)
        if (!m.same_shape(maps[0])) throw std::invalid_argument("pairwise_distance_matrix: map shapes differ");

    if (params.metric == MetricTag::euclidean) return pairwise_euclidean(maps, params.jobs);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    Matrix d(n, n);

    if (params.metric == MetricTag::wasserstein) {
        parallel_for(pairs.size(), params.jobs, [&](std::size_t p) {
            const auto [i, j] = pairs[p];
            d(i, j) = wasserstein_distance(maps[i], maps[j], params.sinkhorn);
        });
        return detail::finalize_distance_matrix(std::move(d), MetricTag::wasserstein);
    }

    // Gromov-Wasserstein: extract clouds once, normalize coordinates so the
    // grid diagonal has unit length (matching the Wasserstein ground cost).
    std::vector<PointCloud> clouds(n);
    const double inv_diag = 1.0 / grid_diagonal(maps[0].rows(), maps[0].cols());
    parallel_for(n, params.jobs, [&](std::size_t i) {
        PointCloud cloud = extract_points(maps[i], params.extract_mass_fraction);
        for (auto& rc : cloud.coords) {
            rc.first *= inv_diag;
            rc.second *= inv_diag;
        }
        clouds[i] = std::move(cloud);
    });
    parallel_for(pairs.size(), params.jobs, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        d(i, j) = gromov_wasserstein(clouds[i], clouds[j], params.gromov).cost;
    });
    return detail::finalize_distance_matrix(std::move(d), MetricTag::gromov_wasserstein);
}

/// DST1 container: magic 'D','S','T','1'; u32 n; u8 metric tag; n*n
/// little-endian f64 values, row-major.
inline void save_distance_matrix(const std::filesystem::path& path, const DistanceMatrix& dm) {
    auto os = io::open_out(path);
    os.write("DST1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(dm.n()));
    io::write_u8(os, static_cast<std::uint8_t>(dm.metric));
    for (std::size_t i = 0; i < dm.n(); ++i)
        for (std::size_t j = 0; j < dm.n(); ++j) io::write_f64(os, dm.values(i, j));
    if (!os) throw IoError("failed writing " + path.string());
}

inline DistanceMatrix load_distance_matrix(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "DST1", "DST1 distance matrix");
    const std::uint32_t n = io::read_u32(is);
    const std::uint8_t tag = io::read_u8(is);
    if (tag > 2) throw IoError("DST1: unknown metric tag");
    DistanceMatrix dm;
    dm.metric = static_cast<MetricTag>(tag);
    dm.values = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) dm.values(i, j) = io::read_f64(is);
    return dm;
}

}  // namespace spray
