#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spray/core.hpp"
#include "spray/tensor.hpp"

namespace spray {

enum class ArtifactKind : std::uint8_t {
    watermark = 0,
    border = 1,
    rounded_corners = 2,
    pasted_pattern = 3,
};

enum class AnchorMode : std::uint8_t {
    fixed = 0,
    random_within_region = 1,
};

struct ArtifactParams {
    std::size_t image_c = 1, image_h = 28, image_w = 28;
    double intensity = 1.0;        // overlay pixel value
    std::size_t watermark_h = 3, watermark_w = 3;
    std::size_t border_width = 2;
    std::size_t corner_radius = 4;
    std::size_t pattern_h = 5, pattern_w = 5;  // pasted_pattern patch size
    std::size_t anchor_y = 0, anchor_x = 0;    // pasted_pattern fixed position
    AnchorMode anchor = AnchorMode::fixed;
    std::size_t region_y0 = 0, region_x0 = 0;  // placement region for random anchors
    std::size_t region_y1 = 0, region_x1 = 0;  // exclusive; 0,0 means whole image
};

/// Parametric overlay: a blend pattern plus an alpha support mask. Fixed
/// anchors bake the placement in; random-within-region anchors keep a patch
/// that is positioned per placement index, seeded.
struct ArtifactMask {
    ArtifactKind kind = ArtifactKind::watermark;
    AnchorMode anchor = AnchorMode::fixed;
    Grid alpha;      // h x w, in [0,1] (fixed placement)
    Tensor pattern;  // c x h x w overlay values (fixed placement)
    // random_within_region state
    Grid patch_alpha;
    Tensor patch_pattern;
    std::size_t region_y0 = 0, region_x0 = 0, region_y1 = 0, region_x1 = 0;
    std::uint64_t seed = 0;

    std::size_t image_h() const { return alpha.rows(); }
    std::size_t image_w() const { return alpha.cols(); }
    std::size_t image_c() const { return pattern.shape().c; }
};

namespace detail {

inline void place_patch(Grid& alpha, Tensor& pattern, const Grid& patch_alpha,
                        const Tensor& patch_pattern, std::size_t y0, std::size_t x0) {
    for (std::size_t y = 0; y < patch_alpha.rows(); ++y)
        for (std::size_t x = 0; x < patch_alpha.cols(); ++x) {
            alpha(y0 + y, x0 + x) = patch_alpha(y, x);
            for (std::size_t c = 0; c < pattern.shape().c; ++c)
                pattern.at(c, y0 + y, x0 + x) = patch_pattern.at(c, y, x);
        }
}

}  // namespace detail

/// Builds a deterministic artifact mask. Watermarks anchor bottom-left;
/// borders cover a frame of the given width; rounded corners cover the
/// quarter-square-minus-quarter-disc region at each image corner; pasted
/// patterns are a seeded random patch at a fixed or random anchor.
inline ArtifactMask make_artifact(ArtifactKind kind, const ArtifactParams& params, std::uint64_t seed) {
    const std::size_t h = params.image_h, w = params.image_w, c = params.image_c;
    if (h == 0 || w == 0 || c == 0) throw std::invalid_argument("make_artifact: empty image shape");
    ArtifactMask m;
    m.kind = kind;
    m.anchor = AnchorMode::fixed;
    m.alpha = Grid(h, w, 0.0);
    m.pattern = Tensor(Shape{c, h, w}, 0.0);
    m.seed = seed;

    auto fill_pattern = [&](std::size_t y, std::size_t x, double value) {
        m.alpha(y, x) = 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) m.pattern.at(ch, y, x) = value;
    };

    switch (kind) {
        case ArtifactKind::watermark: {
            if (params.watermark_h == 0 || params.watermark_h > h || params.watermark_w == 0 ||
                params.watermark_w > w)
                throw std::invalid_argument("make_artifact: watermark exceeds image bounds");
            for (std::size_t y = h - params.watermark_h; y < h; ++y)
                for (std::size_t x = 0; x < params.watermark_w; ++x) fill_pattern(y, x, params.intensity);
            break;
        }
        case ArtifactKind::border: {
            const std::size_t b = params.border_width;
            if (b < 1 || 2 * b > h || 2 * b > w)
                throw std::invalid_argument("make_artifact: border width exceeds image bounds");
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    if (y < b || y >= h - b || x < b || x >= w - b) fill_pattern(y, x, params.intensity);
            break;
        }
        case ArtifactKind::rounded_corners: {
            const std::size_t r = params.corner_radius;
            if (r < 1 || 2 * r > h || 2 * r > w)
                throw std::invalid_argument("make_artifact: corner radius exceeds image bounds");
            for (std::size_t y = 0; y < r; ++y)
                for (std::size_t x = 0; x < r; ++x) {
                    const double dy = static_cast<double>(r - y);
                    const double dx = static_cast<double>(r - x);
                    if (dy * dy + dx * dx > static_cast<double>(r * r)) {
                        fill_pattern(y, x, params.intensity);
                        fill_pattern(y, w - 1 - x, params.intensity);
                        fill_pattern(h - 1 - y, x, params.intensity);
                        fill_pattern(h - 1 - y, w - 1 - x, params.intensity);
                    }
                }
            break;
        }
        case ArtifactKind::pasted_pattern: {
            const std::size_t ph = params.pattern_h, pw = params.pattern_w;
            if (ph == 0 || ph > h || pw == 0 || pw > w)
                throw std::invalid_argument("make_artifact: pattern exceeds image bounds");
            Grid patch_alpha(ph, pw, 1.0);
            Tensor patch_pattern(Shape{c, ph, pw});
            Rng rng = make_rng(seed, 0x9A77);
            for (std::size_t y = 0; y < ph; ++y)
                for (std::size_t x = 0; x < pw; ++x) {
                    const double v = uniform01(rng) < 0.5 ? 0.0 : params.intensity;
                    for (std::size_t ch = 0; ch < c; ++ch) patch_pattern.at(ch, y, x) = v;
                }
            if (params.anchor == AnchorMode::fixed) {
                if (params.anchor_y + ph > h || params.anchor_x + pw > w)
                    throw std::invalid_argument("make_artifact: pattern anchor exceeds image bounds");
                detail::place_patch(m.alpha, m.pattern, patch_alpha, patch_pattern, params.anchor_y,
                                    params.anchor_x);
            } else {
                m.anchor = AnchorMode::random_within_region;
                m.patch_alpha = std::move(patch_alpha);
                m.patch_pattern = std::move(patch_pattern);
                m.region_y0 = params.region_y0;
                m.region_x0 = params.region_x0;
                m.region_y1 = params.region_y1 == 0 ? h : params.region_y1;
                m.region_x1 = params.region_x1 == 0 ? w : params.region_x1;
                if (m.region_y0 + ph > m.region_y1 || m.region_x0 + pw > m.region_x1 ||
                    m.region_y1 > h || m.region_x1 > w)
                    throw std::invalid_argument("make_artifact: placement region cannot hold the pattern");
            }
            break;
        }
    }
    return m;
}

/// Alpha support for a given placement. Fixed anchors ignore the placement
/// index; random anchors draw a seeded offset from it.
inline Grid materialize_alpha(const ArtifactMask& mask, std::uint64_t placement_index = 0) {
    if (mask.anchor == AnchorMode::fixed) return mask.alpha;
    Grid alpha(mask.image_h(), mask.image_w(), 0.0);
    Tensor pattern(Shape{mask.image_c(), mask.image_h(), mask.image_w()});
    Rng rng = make_rng(mask.seed, 0xB10C ^ placement_index);
    const std::size_t ph = mask.patch_alpha.rows(), pw = mask.patch_alpha.cols();
    const std::size_t y0 = mask.region_y0 + uniform_index(rng, mask.region_y1 - mask.region_y0 - ph + 1);
    const std::size_t x0 = mask.region_x0 + uniform_index(rng, mask.region_x1 - mask.region_x0 - pw + 1);
    detail::place_patch(alpha, pattern, mask.patch_alpha, mask.patch_pattern, y0, x0);
    return alpha;
}

/// Alpha blend of the mask pattern over the image, clamped to [0, 1].
inline Tensor inject(const Tensor& image, const ArtifactMask& mask, std::uint64_t placement_index = 0) {
    const Shape s = image.shape();
    if (s.h != mask.image_h() || s.w != mask.image_w() || s.c != mask.image_c())
        throw std::invalid_argument("inject: image and mask shapes differ");
    Grid alpha = mask.alpha;
    Tensor pattern = mask.pattern;
    if (mask.anchor == AnchorMode::random_within_region) {
        alpha = Grid(s.h, s.w, 0.0);
        pattern = Tensor(s, 0.0);
        Rng rng = make_rng(mask.seed, 0xB10C ^ placement_index);
        const std::size_t ph = mask.patch_alpha.rows(), pw = mask.patch_alpha.cols();
        const std::size_t y0 =
            mask.region_y0 + uniform_index(rng, mask.region_y1 - mask.region_y0 - ph + 1);
        const std::size_t x0 =
            mask.region_x0 + uniform_index(rng, mask.region_x1 - mask.region_x0 - pw + 1);
        detail::place_patch(alpha, pattern, mask.patch_alpha, mask.patch_pattern, y0, x0);
    }
    Tensor out = image;
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                const double a = alpha(y, x);
                if (a == 0.0) continue;
                const double v = (1.0 - a) * image.at(c, y, x) + a * pattern.at(c, y, x);
                out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
    return out;
}

struct FillSpec {
    enum class Mode { mean_fill, noise_fill } mode = Mode::mean_fill;
    std::vector<double> channel_mean;  // one entry per channel
    double noise_std = 0.0;            // noise_fill only
    std::uint64_t seed = 0;
};

/// Replaces every pixel under the mask support with the dataset channel mean
/// or seeded gaussian noise around it.
inline Tensor remove(const Tensor& image, const ArtifactMask& mask, const FillSpec& fill,
                     std::uint64_t placement_index = 0) {
    const Shape s = image.shape();
    if (s.h != mask.image_h() || s.w != mask.image_w() || s.c != mask.image_c())
        throw std::invalid_argument("remove: image and mask shapes differ");
    if (fill.channel_mean.size() != s.c)
        throw std::invalid_argument("remove: channel mean count does not match the image");
    const Grid alpha = materialize_alpha(mask, placement_index);
    Tensor out = image;
    Rng rng = make_rng(fill.seed, 0xF111 ^ placement_index);
    for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
            if (alpha(y, x) <= 0.0) continue;
            for (std::size_t c = 0; c < s.c; ++c) {
                double v = fill.channel_mean[c];
                if (fill.mode == FillSpec::Mode::noise_fill) v += fill.noise_std * gaussian(rng);
                out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    return out;
}

}  // namespace spray
