#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"

namespace spray {

/// (channels, height, width) extent of an activation or image tensor.
/// Dense-layer outputs use (units, 1, 1).
struct Shape {
    std::size_t c = 0, h = 0, w = 0;

    std::size_t size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

/// Channel-major dense tensor: index (ch, y, x) maps to (ch*h + y)*w + x.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}

    double& at(std::size_t ch, std::size_t y, std::size_t x) {
        return data_[(ch * shape_.h + y) * shape_.w + x];
    }
    double at(std::size_t ch, std::size_t y, std::size_t x) const {
        return data_[(ch * shape_.h + y) * shape_.w + x];
    }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    bool operator==(const Tensor&) const = default;

    /// Same data viewed as a flat (n, 1, 1) tensor.
    Tensor flattened() const {
        Tensor t = *this;
        t.shape_ = Shape{t.size(), 1, 1};
        return t;
    }

    /// Same data viewed under a different shape of equal size.
    Tensor reshaped(Shape s) const {
        if (s.size() != size()) throw std::invalid_argument("Tensor::reshaped: size mismatch");
        Tensor t = *this;
        t.shape_ = s;
        return t;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Sums a (c, h, w) tensor over channels into an h x w grid.
inline Grid sum_channels(const Tensor& t) {
    Grid g(t.shape().h, t.shape().w, 0.0);
    for (std::size_t ch = 0; ch < t.shape().c; ++ch)
        for (std::size_t y = 0; y < t.shape().h; ++y)
            for (std::size_t x = 0; x < t.shape().w; ++x) g(y, x) += t.at(ch, y, x);
    return g;
}

}  // namespace spray
