#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spray/core.hpp"

namespace spray {

struct DegenerateMeasureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Weighted point set extracted from a grid measure. Coordinates are (row,
/// col) pairs; masses are positive and sum to one.
struct PointCloud {
    std::vector<std::pair<double, double>> coords;
    std::vector<double> masses;

    std::size_t size() const { return coords.size(); }
};

/// Clips negative values to zero and normalizes the grid to unit mass.
/// Transport kernels act on the positive part of the relevance only.
inline Grid to_measure(const Grid& map) {
    if (!map.all_finite()) throw std::invalid_argument("to_measure: non-finite input");
    Grid out(map.rows(), map.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double v = map.data()[i] > 0.0 ? map.data()[i] : 0.0;
        out.data()[i] = v;
        total += v;
    }
    if (total <= 0.0) throw DegenerateMeasureError("to_measure: zero positive mass");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= total;
    return out;
}

/// Takes pixels in decreasing value order (ties broken by row-major
/// coordinate) until `mass_fraction` of the total positive mass is covered.
/// Returned masses are renormalized to sum to one.
inline PointCloud extract_points(const Grid& map, double mass_fraction = 0.99) {
    const std::size_t h = map.rows(), w = map.cols();
    std::vector<std::size_t> idx;
    idx.reserve(map.size());
    double total = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.data()[i] > 0.0) {
            idx.push_back(i);
            total += map.data()[i];
        }
    }
    if (idx.empty() || total <= 0.0) throw DegenerateMeasureError("extract_points: zero positive mass");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (map.data()[a] != map.data()[b]) return map.data()[a] > map.data()[b];
        return a < b;
    });
    PointCloud cloud;
    double acc = 0.0;
    const double target = mass_fraction * total;
    for (std::size_t i : idx) {
        cloud.coords.emplace_back(static_cast<double>(i / w), static_cast<double>(i % w));
        cloud.masses.push_back(map.data()[i]);
        acc += map.data()[i];
        if (acc >= target) break;
    }
    const double kept = std::accumulate(cloud.masses.begin(), cloud.masses.end(), 0.0);
    for (double& m : cloud.masses) m /= kept;
    (void)h;
    return cloud;
}

/// Length of the grid diagonal between outermost pixel centers; used to make
/// ground costs scale-free across grid sizes.
inline double grid_diagonal(std::size_t h, std::size_t w) {
    const double dh = h > 1 ? static_cast<double>(h - 1) : 0.0;
    const double dw = w > 1 ? static_cast<double>(w - 1) : 0.0;
    const double d = std::sqrt(dh * dh + dw * dw);
    return d > 0.0 ? d : 1.0;
}

}  // namespace spray
