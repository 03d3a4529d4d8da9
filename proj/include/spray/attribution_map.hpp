#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "spray/core.hpp"
#include "spray/io.hpp"

namespace spray {

/// Per-sample relevance grid explaining one prediction. Signed: positive
/// values support the target class, negative values contradict it.
struct AttributionMap {
    Grid values;
    std::string sample_id;
    int target_class = 0;
    int true_label_rank = 1;  // 1 = the true label had the top logit
    int predicted_class = 0;
};

/// Sum-pools a map onto a gh x gw grid. The axis partition is as even as
/// integer division allows (pixel r maps to cell r*gh/h), so no mass is
/// dropped and gh = h is the identity.
inline Grid sum_pool_grid(const Grid& map, std::size_t gh, std::size_t gw) {
    const std::size_t h = map.rows(), w = map.cols();
    if (gh == 0 || gw == 0 || gh > h || gw > w)
        throw std::invalid_argument("sum_pool_grid: grid must be between 1x1 and the map size");
    Grid out(gh, gw, 0.0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out(r * gh / h, c * gw / w) += map(r, c);
    return out;
}

/// ATR1 batch container: magic 'A','T','R','1'; little-endian u32 n, h, w;
/// then n*h*w f32 values, row-major per map, maps in sample order.
inline void save_attributions(const std::filesystem::path& path, const std::vector<AttributionMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("save_attributions: empty batch");
    const std::size_t h = maps[0].values.rows(), w = maps[0].values.cols();
    auto os = io::open_out(path);
    os.write("ATR1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(maps.size()));
    io::write_u32(os, static_cast<std::uint32_t>(h));
    io::write_u32(os, static_cast<std::uint32_t>(w));
    for (const AttributionMap& m : maps) {
        if (m.values.rows() != h || m.values.cols() != w)
            throw std::invalid_argument("save_attributions: inconsistent map shapes");
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) io::write_f32(os, static_cast<float>(m.values(r, c)));
    }
    if (!os) throw IoError("failed writing " + path.string());
}

/// Loads the value grids of an ATR1 batch (metadata travels in the sample
/// CSV alongside).
inline std::vector<Grid> load_attribution_grids(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "ATR1", "ATR1 attribution batch");
    const std::uint32_t n = io::read_u32(is);
    const std::uint32_t h = io::read_u32(is);
    const std::uint32_t w = io::read_u32(is);
    std::vector<Grid> grids;
    grids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Grid g(h, w);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) g(r, c) = static_cast<double>(io::read_f32(is));
        grids.push_back(std::move(g));
    }
    return grids;
}

/// Sample metadata CSV: sample_id,class_id,predicted_class,true_label_rank.
struct SampleMeta {
    std::string sample_id;
    int class_id = 0;
    int predicted_class = 0;
    int true_label_rank = 1;
};

inline void save_sample_metadata(const std::filesystem::path& path, const std::vector<SampleMeta>& rows) {
    auto os = io::open_out(path, /*binary=*/false);
    os << "sample_id,class_id,predicted_class,true_label_rank\n";
    for (const SampleMeta& r : rows)
        os << r.sample_id << ',' << r.class_id << ',' << r.predicted_class << ',' << r.true_label_rank
           << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

inline std::vector<SampleMeta> load_sample_metadata(const std::filesystem::path& path) {
    auto is = io::open_in(path, /*binary=*/false);
    std::string line;
    if (!std::getline(is, line) || line.rfind("sample_id,", 0) != 0)
        throw IoError("bad sample metadata header in " + path.string());
    std::vector<SampleMeta> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = io::split_csv_line(line);
        if (cells.size() != 4) throw IoError("bad sample metadata row in " + path.string());
        SampleMeta m;
        m.sample_id = cells[0];
        m.class_id = std::stoi(cells[1]);
        m.predicted_class = std::stoi(cells[2]);
        m.true_label_rank = std::stoi(cells[3]);
        rows.push_back(std::move(m));
    }
    return rows;
}

}  // namespace spray
