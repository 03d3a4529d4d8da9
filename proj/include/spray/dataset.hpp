#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spray/core.hpp"
#include "spray/io.hpp"
#include "spray/tensor.hpp"

namespace spray {

struct Sample {
    Tensor image;
    int label = 0;
    bool train = true;
    bool poisoned = false;
    std::string id;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    Shape image_shape;

    std::vector<const Sample*> split(bool train) const {
        std::vector<const Sample*> out;
        for (const Sample& s : samples)
            if (s.train == train) out.push_back(&s);
        return out;
    }

    std::vector<double> channel_means() const {
        std::vector<double> means(image_shape.c, 0.0);
        std::size_t count = 0;
        for (const Sample& s : samples) {
            for (std::size_t c = 0; c < image_shape.c; ++c)
                for (std::size_t y = 0; y < image_shape.h; ++y)
                    for (std::size_t x = 0; x < image_shape.w; ++x) means[c] += s.image.at(c, y, x);
            ++count;
        }
        for (double& m : means) m /= static_cast<double>(count * image_shape.h * image_shape.w);
        return means;
    }
};

/// Deep copy of the samples a split() view points at (training helpers want
/// owning containers).
inline std::vector<Sample> materialize(const std::vector<const Sample*>& view) {
    std::vector<Sample> out;
    out.reserve(view.size());
    for (const Sample* s : view) out.push_back(*s);
    return out;
}

struct GeneratorParams {
    int num_classes = 5;
    std::size_t train_per_class = 500;
    std::size_t val_per_class = 100;
    std::size_t height = 28, width = 28;
    double noise_sigma = 0.1;
    double intensity = 0.85;
    int position_jitter = 4;
    // When set, class 0 draws the same glyph family as class 1, so only a
    // later-injected artifact can tell them apart.
    bool confusable_class0 = false;
};

namespace detail {

/// One glyph family per class id: bars, disc, cross, checker, ring.
inline void draw_glyph(Grid& img, int family, double cy, double cx, double intensity, double size_scale) {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.rows());
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.cols());
    auto put = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        if (y >= 0 && y < h && x >= 0 && x < w) img(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = intensity;
    };
    const std::ptrdiff_t icy = static_cast<std::ptrdiff_t>(std::lround(cy));
    const std::ptrdiff_t icx = static_cast<std::ptrdiff_t>(std::lround(cx));
    switch (family % 5) {
        case 0: {  // two horizontal bars
            const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(std::lround(7 * size_scale));
            for (std::ptrdiff_t dy : {-4, -3, 3, 4})
                for (std::ptrdiff_t dx = -half; dx <= half; ++dx) put(icy + dy, icx + dx);
            break;
        }
        case 1: {  // filled disc
            const double r = 5.0 * size_scale;
            for (std::ptrdiff_t dy = -8; dy <= 8; ++dy)
                for (std::ptrdiff_t dx = -8; dx <= 8; ++dx)
                    if (dy * dy + dx * dx <= r * r) put(icy + dy, icx + dx);
            break;
        }
        case 2: {  // plus sign
            const std::ptrdiff_t arm = static_cast<std::ptrdiff_t>(std::lround(7 * size_scale));
            for (std::ptrdiff_t d = -arm; d <= arm; ++d)
                for (std::ptrdiff_t t = -1; t <= 1; ++t) {
                    put(icy + d, icx + t);
                    put(icy + t, icx + d);
                }
            break;
        }
        case 3: {  // 3x3 checker of 3px blocks
            for (int by = 0; by < 3; ++by)
                for (int bx = 0; bx < 3; ++bx) {
                    if ((by + bx) % 2 != 0) continue;
                    for (std::ptrdiff_t dy = 0; dy < 3; ++dy)
                        for (std::ptrdiff_t dx = 0; dx < 3; ++dx)
                            put(icy - 4 + by * 3 + dy, icx - 4 + bx * 3 + dx);
                }
            break;
        }
        default: {  // ring
            const double router = 7.0 * size_scale, rinner = 4.5 * size_scale;
            for (std::ptrdiff_t dy = -9; dy <= 9; ++dy)
                for (std::ptrdiff_t dx = -9; dx <= 9; ++dx) {
                    const double d2 = static_cast<double>(dy * dy + dx * dx);
                    if (d2 <= router * router && d2 >= rinner * rinner) put(icy + dy, icx + dx);
                }
            break;
        }
    }
}

}  // namespace detail

/// Seeded synthetic shape classification data: one parametric glyph family
/// per class with position/size jitter and additive gaussian noise, clamped
/// to [0, 1]. Single channel.
inline Dataset generate_shape_dataset(const GeneratorParams& params, std::uint64_t seed) {
    if (params.num_classes < 2) throw std::invalid_argument("generate_shape_dataset: need >= 2 classes");
    Dataset ds;
    ds.num_classes = params.num_classes;
    ds.image_shape = Shape{1, params.height, params.width};
    const double cy0 = static_cast<double>(params.height) / 2.0;
    const double cx0 = static_cast<double>(params.width) / 2.0;
    for (int cls = 0; cls < params.num_classes; ++cls) {
        const int family = (params.confusable_class0 && cls == 0) ? 1 : cls;
        Rng rng = make_rng(seed, 0xD5 + static_cast<std::uint64_t>(cls));
        const std::size_t total = params.train_per_class + params.val_per_class;
        for (std::size_t i = 0; i < total; ++i) {
            Grid img(params.height, params.width, 0.0);
            const double cy = cy0 + uniform(rng, -params.position_jitter, params.position_jitter);
            const double cx = cx0 + uniform(rng, -params.position_jitter, params.position_jitter);
            const double size_scale = 1.0 + 0.12 * (uniform01(rng) - 0.5);
            const double intensity = params.intensity * (1.0 + 0.1 * (uniform01(rng) - 0.5));
            detail::draw_glyph(img, family, cy, cx, intensity, size_scale);
            Tensor image(ds.image_shape);
            for (std::size_t p = 0; p < img.size(); ++p)
                image[p] = std::clamp(img.data()[p] + params.noise_sigma * gaussian(rng), 0.0, 1.0);
            Sample s;
            s.image = std::move(image);
            s.label = cls;
            s.train = i < params.train_per_class;
            s.id = "c" + std::to_string(cls) + (s.train ? "_t" : "_v") + std::to_string(s.train ? i : i - params.train_per_class);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

/// SPD1 dataset container: magic; u32 version; u32 n, c, h, w, num_classes;
/// per sample u32 id length + bytes, u8 label, u8 train, u8 poisoned and
/// c*h*w f32 pixels.
inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    auto os = io::open_out(path);
    os.write("SPD1", 4);
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
    io::write_u32(os, static_cast<std::uint32_t>(ds.image_shape.c));
    io::write_u32(os, static_cast<std::uint32_t>(ds.image_shape.h));
    io::write_u32(os, static_cast<std::uint32_t>(ds.image_shape.w));
    io::write_u32(os, static_cast<std::uint32_t>(ds.num_classes));
    for (const Sample& s : ds.samples) {
        io::write_u32(os, static_cast<std::uint32_t>(s.id.size()));
        os.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
        io::write_u8(os, static_cast<std::uint8_t>(s.label));
        io::write_u8(os, s.train ? 1 : 0);
        io::write_u8(os, s.poisoned ? 1 : 0);
        for (std::size_t i = 0; i < s.image.size(); ++i) io::write_f32(os, static_cast<float>(s.image[i]));
    }
    if (!os) throw IoError("failed writing " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "SPD1", "SPD1 dataset");
    if (io::read_u32(is) != 1) throw IoError("SPD1: unsupported version");
    Dataset ds;
    const std::uint32_t n = io::read_u32(is);
    ds.image_shape.c = io::read_u32(is);
    ds.image_shape.h = io::read_u32(is);
    ds.image_shape.w = io::read_u32(is);
    ds.num_classes = static_cast<int>(io::read_u32(is));
    ds.samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Sample s;
        const std::uint32_t len = io::read_u32(is);
        s.id.resize(len);
        is.read(s.id.data(), len);
        if (!is) throw IoError("SPD1: truncated sample id");
        s.label = io::read_u8(is);
        s.train = io::read_u8(is) != 0;
        s.poisoned = io::read_u8(is) != 0;
        s.image = Tensor(ds.image_shape);
        for (std::size_t p = 0; p < s.image.size(); ++p) s.image[p] = io::read_f32(is);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace spray
