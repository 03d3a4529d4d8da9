#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "spray/attribution_map.hpp"
#include "spray/core.hpp"
#include "spray/fda.hpp"
#include "spray/io.hpp"
#include "spray/kmeans.hpp"
#include "spray/lanczos.hpp"
#include "spray/tsne.hpp"

namespace spray {

/// Fixed 12-color palette, cycled by cluster id.
inline const std::array<const char*, 12>& cluster_palette() {
    static const std::array<const char*, 12> colors = {
        "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
        "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#86bcb6", "#d37295"};
    return colors;
}

/// 800x800 scatter of a planar embedding, one circle per sample, fill color
/// by cluster id. The generation timestamp comment is suppressed in
/// reproducible mode.
inline std::string render_scatter_svg(const Matrix& coords, const std::vector<int>& labels,
                                      bool reproducible) {
    const std::size_t n = coords.rows();
    double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lo_x = std::min(lo_x, coords(i, 0));
        hi_x = std::max(hi_x, coords(i, 0));
        lo_y = std::min(lo_y, coords(i, 1));
        hi_y = std::max(hi_y, coords(i, 1));
    }
    const double span_x = hi_x - lo_x > 0 ? hi_x - lo_x : 1.0;
    const double span_y = hi_y - lo_y > 0 ? hi_y - lo_y : 1.0;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 800\">\n";
    if (!reproducible) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        svg += "<!-- generated " +
               std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count()) + " -->\n";
    }
    svg += "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double px = 40.0 + 720.0 * (coords(i, 0) - lo_x) / span_x;
        const double py = 40.0 + 720.0 * (coords(i, 1) - lo_y) / span_y;
        const char* color = cluster_palette()[static_cast<std::size_t>(labels[i]) % cluster_palette().size()];
        svg += "<circle cx=\"" + io::fmt9(px) + "\" cy=\"" + io::fmt9(py) + "\" r=\"4\" fill=\"" +
               color + "\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

struct ReportInputs {
    int class_id = 0;
    const std::vector<double>* eigenvalues = nullptr;          // may be null
    const PlanarEmbedding* planar = nullptr;                   // required
    const ClusterAssignment* clusters = nullptr;               // required
    const std::vector<SeparabilityReport>* ranked = nullptr;   // may be null
    const std::vector<SampleMeta>* samples = nullptr;          // required
};

/// Writes the per-class analysis artifacts: eigenvalues.csv,
/// embedding_2d.csv, tau_ranking.csv, per-cluster member lists, the scatter
/// SVG and report.html. Inputs are validated before anything is written;
/// re-runs overwrite. Returns the list of files written.
inline std::vector<std::filesystem::path> render_report(const ReportInputs& in,
                                                        const std::filesystem::path& out_dir,
                                                        bool reproducible = false) {
    namespace fs = std::filesystem;
    if (!in.planar || !in.clusters || !in.samples)
        throw std::invalid_argument("render_report: planar embedding, clusters and samples are required");
    const std::size_t n = in.planar->coords.rows();
    if (in.clusters->labels.empty() || in.clusters->k <= 0)
        throw std::invalid_argument("render_report: empty cluster assignment");
    if (in.clusters->labels.size() != n || in.samples->size() != n)
        throw std::invalid_argument("render_report: input sizes are inconsistent");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("render_report: cannot create " + out_dir.string());

    std::vector<fs::path> written;
    auto emit = [&](const fs::path& name, const std::string& text) {
        const fs::path path = out_dir / name;
        io::write_text_file(path, text);
        written.push_back(path);
    };

    if (in.eigenvalues) {
        std::string csv = "index,eigenvalue\n";
        for (std::size_t i = 0; i < in.eigenvalues->size(); ++i)
            csv += std::to_string(i + 1) + "," + io::fmt9((*in.eigenvalues)[i]) + "\n";
        emit("eigenvalues.csv", csv);
    }

    {
        std::string csv = "sample_id,x,y,cluster\n";
        for (std::size_t i = 0; i < n; ++i)
            csv += (*in.samples)[i].sample_id + "," + io::fmt9(in.planar->coords(i, 0)) + "," +
                   io::fmt9(in.planar->coords(i, 1)) + "," + std::to_string(in.clusters->labels[i]) + "\n";
        emit("embedding_2d.csv", csv);
    }

    if (in.ranked) save_tau_ranking(out_dir / "tau_ranking.csv", *in.ranked);
    if (in.ranked) written.push_back(out_dir / "tau_ranking.csv");

    for (int c = 0; c < in.clusters->k; ++c) {
        std::string csv = "sample_id\n";
        for (std::size_t i = 0; i < n; ++i)
            if (in.clusters->labels[i] == c) csv += (*in.samples)[i].sample_id + "\n";
        emit("cluster_" + std::to_string(c) + "_members.csv", csv);
    }

    emit("scatter_class_" + std::to_string(in.class_id) + ".svg",
         render_scatter_svg(in.planar->coords, in.clusters->labels, reproducible));

    {
        std::string html = "<!DOCTYPE html>\n<html><head><title>class " + std::to_string(in.class_id) +
                           "</title></head><body>\n";
        html += "<h1>Spectral relevance analysis, class " + std::to_string(in.class_id) + "</h1>\n";
        if (in.ranked) {
            html += "<h2>Class ranking by tau</h2>\n<table border=\"1\"><tr><th>class</th><th>tau</th></tr>\n";
            for (const auto& r : *in.ranked)
                html += "<tr><td>" + std::to_string(r.class_id) + "</td><td>" + io::fmt9(r.tau) +
                        "</td></tr>\n";
            html += "</table>\n";
        }
        html += "<h2>Cluster scatter</h2>\n<img src=\"scatter_class_" + std::to_string(in.class_id) +
                ".svg\" width=\"400\"/>\n<h2>Artifacts</h2>\n<ul>\n";
        for (const auto& p : written) html += "<li><a href=\"" + p.filename().string() + "\">" +
                                              p.filename().string() + "</a></li>\n";
        html += "</ul>\n</body></html>\n";
        emit("report.html", html);
    }
    return written;
}

}  // namespace spray
