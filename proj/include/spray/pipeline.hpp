#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spray/ablation.hpp"
#include "spray/affinity.hpp"
#include "spray/attribution_map.hpp"
#include "spray/config.hpp"
#include "spray/dataset.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/fda.hpp"
#include "spray/kmeans.hpp"
#include "spray/lanczos.hpp"
#include "spray/lrp.hpp"
#include "spray/network.hpp"
#include "spray/report.hpp"
#include "spray/tsne.hpp"

namespace spray {

/// Stage indices double as exit-code offsets (exit = 10 + stage).
enum class Stage : int {
    attribute = 0,
    preprocess = 1,
    distances = 2,
    spectral = 3,
    rank = 4,
    embed = 5,
    report = 6,
};

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::attribute: return "attribute";
        case Stage::preprocess: return "preprocess";
        case Stage::distances: return "distances";
        case Stage::spectral: return "spectral";
        case Stage::rank: return "rank";
        case Stage::embed: return "embed";
        case Stage::report: return "report";
    }
    return "?";
}

struct StageError : std::runtime_error {
    Stage stage;
    StageError(Stage s, const std::string& what)
        : std::runtime_error(std::string(stage_name(s)) + " stage: " + what), stage(s) {}
};

struct PipelineResult {
    std::vector<std::filesystem::path> files;
    std::map<std::string, bool> stage_cached;  // stage name -> served from cache
};

namespace detail {

class StageRunner {
public:
    StageRunner(std::filesystem::path out_dir, std::function<void(const std::string&)> log)
        : out_dir_(std::move(out_dir)), log_(std::move(log)) {}

    /// Runs `body` unless the stamp for `stage` matches `key` and every
    /// output already exists. Records outputs into the shared manifest.
    template <typename Body>
    bool run(Stage stage, std::uint64_t key, const std::vector<std::filesystem::path>& outputs,
             PipelineResult& result, Body&& body) {
        namespace fs = std::filesystem;
        const fs::path stamp = out_dir_ / (std::string(".stamp_") + stage_name(stage));
        std::ostringstream key_hex;
        key_hex << std::hex << key;
        bool fresh = fs::exists(stamp);
        if (fresh) {
            try {
                fresh = io::read_text_file(stamp) == key_hex.str();
            } catch (const IoError&) {
                fresh = false;
            }
        }
        for (const auto& out : outputs)
            if (!fs::exists(out)) fresh = false;
        if (fresh) {
            if (log_) log_(std::string("[cached] ") + stage_name(stage));
            result.stage_cached[stage_name(stage)] = true;
        } else {
            if (log_) log_(std::string("[run] ") + stage_name(stage));
            try {
                body();
            } catch (const StageError&) {
                throw;
            } catch (const std::exception& e) {
                throw StageError(stage, e.what());
            }
            io::write_text_file(stamp, key_hex.str());
            result.stage_cached[stage_name(stage)] = false;
        }
        for (const auto& out : outputs) result.files.push_back(out);
        return !fresh;
    }

private:
    std::filesystem::path out_dir_;
    std::function<void(const std::string&)> log_;
};

inline std::uint64_t hash_files(const std::vector<std::filesystem::path>& paths, std::uint64_t h) {
    for (const auto& p : paths) h = io::hash_file(p, h);
    return h;
}

}  // namespace detail

/// Loader for clusters.csv (sample_id,cluster).
inline std::vector<int> load_cluster_labels(const std::filesystem::path& path) {
    auto is = io::open_in(path, false);
    std::string line;
    if (!std::getline(is, line) || line.rfind("sample_id,cluster", 0) != 0)
        throw IoError("bad clusters.csv header in " + path.string());
    std::vector<int> labels;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = io::split_csv_line(line);
        labels.push_back(std::stoi(cells.at(1)));
    }
    return labels;
}

/// Loader for embedding_2d.csv (sample_id,x,y,cluster).
inline Matrix load_planar_coords(const std::filesystem::path& path) {
    auto is = io::open_in(path, false);
    std::string line;
    if (!std::getline(is, line) || line.rfind("sample_id,x,y", 0) != 0)
        throw IoError("bad embedding_2d.csv header in " + path.string());
    std::vector<std::array<double, 2>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = io::split_csv_line(line);
        rows.push_back({std::stod(cells.at(1)), std::stod(cells.at(2))});
    }
    Matrix m(rows.size(), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m(i, 0) = rows[i][0];
        m(i, 1) = rows[i][1];
    }
    return m;
}

/// Loader for tau_ranking.csv.
inline std::vector<SeparabilityReport> load_tau_ranking(const std::filesystem::path& path) {
    auto is = io::open_in(path, false);
    std::string line;
    if (!std::getline(is, line) || line.rfind("class_id,tau", 0) != 0)
        throw IoError("bad tau_ranking.csv header in " + path.string());
    const auto header = io::split_csv_line(line);
    std::vector<SeparabilityReport> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = io::split_csv_line(line);
        SeparabilityReport r;
        r.class_id = std::stoi(cells.at(0));
        r.tau = std::stod(cells.at(1));
        for (std::size_t i = 2; i < cells.size() && i < header.size(); ++i)
            if (!cells[i].empty())
                r.per_k_scores[std::stoi(header[i].substr(header[i].find("_k") + 2))] = std::stod(cells[i]);
        out.push_back(std::move(r));
    }
    return out;
}

/// Runs the staged per-class analysis: attribute, optional sum-pool
/// preprocessing, pairwise distances, affinity/laplacian/eigendecomposition,
/// tau ranking plus cluster labels, planar embedding, and the report. Stage
/// outputs are cached by a content hash of their inputs and the relevant
/// config subset, so re-runs skip completed stages.
inline PipelineResult run_pipeline(const PipelineConfig& config, unsigned jobs = 1,
                                   bool reproducible = false,
                                   const std::function<void(const std::string&)>& log = {}) {
    namespace fs = std::filesystem;
    PipelineConfig cfg = config;
    validate(cfg);

    const fs::path data_dir = cfg.data_dir;
    const fs::path out_dir = cfg.out_dir;
    const fs::path dataset_path = data_dir / "dataset.spd";
    const fs::path model_path = data_dir / "model.spn";
    if (!fs::exists(dataset_path)) throw IoError("missing input: " + dataset_path.string());
    if (!fs::exists(model_path)) throw IoError("missing input: " + model_path.string());
    fs::create_directories(out_dir);

    const Dataset dataset = load_dataset(dataset_path);
    const ToyNetwork model = load_network(model_path);
    const int num_classes = dataset.num_classes;
    for (int c = 0; c < num_classes; ++c) fs::create_directories(out_dir / ("class_" + std::to_string(c)));

    auto class_dir = [&](int c) { return out_dir / ("class_" + std::to_string(c)); };
    auto per_class = [&](const char* name) {
        std::vector<fs::path> v;
        for (int c = 0; c < num_classes; ++c) v.push_back(class_dir(c) / name);
        return v;
    };

    PipelineResult result;
    detail::StageRunner runner(out_dir, log);
    const std::uint64_t inputs_key = detail::hash_files({dataset_path, model_path}, io::fnv1a("inputs"));

    // -- attribute ---------------------------------------------------------
    const std::vector<fs::path> atr_files = per_class("attributions.atr");
    const std::vector<fs::path> meta_files = per_class("samples.csv");
    {
        std::uint64_t key = io::fnv1a("attribute|eps=" + io::fmt17(cfg.lrp_epsilon), inputs_key);
        std::vector<fs::path> outputs = atr_files;
        outputs.insert(outputs.end(), meta_files.begin(), meta_files.end());
        runner.run(Stage::attribute, key, outputs, result, [&] {
            for (int c = 0; c < num_classes; ++c) {
                std::vector<const Sample*> members;
                for (const Sample& s : dataset.samples)
                    if (s.train && s.label == c) members.push_back(&s);
                if (members.empty())
                    throw std::runtime_error("class " + std::to_string(c) + " has no training samples");
                std::vector<AttributionMap> maps(members.size());
                parallel_for(members.size(), jobs, [&](std::size_t i) {
                    maps[i] = lrp_composite(model, members[i]->image, members[i]->label,
                                            cfg.lrp_epsilon, members[i]->label, members[i]->id);
                });
                std::vector<SampleMeta> metas;
                for (const AttributionMap& m : maps)
                    metas.push_back({m.sample_id, c, m.predicted_class, m.true_label_rank});
                save_attributions(class_dir(c) / "attributions.atr", maps);
                save_sample_metadata(class_dir(c) / "samples.csv", metas);
            }
        });
    }

    // -- preprocess (optional sum pooling) ----------------------------------
    const bool pooled = cfg.preprocess_gh > 0;
    const std::vector<fs::path> pooled_files = per_class("attributions_pooled.atr");
    if (pooled) {
        std::uint64_t key = detail::hash_files(atr_files, io::fnv1a("preprocess"));
        key = io::fnv1a(std::to_string(cfg.preprocess_gh) + "x" + std::to_string(cfg.preprocess_gw), key);
        runner.run(Stage::preprocess, key, pooled_files, result, [&] {
            for (int c = 0; c < num_classes; ++c) {
                const auto grids = load_attribution_grids(class_dir(c) / "attributions.atr");
                std::vector<AttributionMap> maps(grids.size());
                for (std::size_t i = 0; i < grids.size(); ++i)
                    maps[i].values = sum_pool_grid(grids[i], static_cast<std::size_t>(cfg.preprocess_gh),
                                                   static_cast<std::size_t>(cfg.preprocess_gw));
                save_attributions(class_dir(c) / "attributions_pooled.atr", maps);
            }
        });
    }
    const std::vector<fs::path>& analysis_inputs = pooled ? pooled_files : atr_files;

    // -- distances -----------------------------------------------------------
    const std::vector<fs::path> dst_files = per_class("distances.dst");
    {
        std::uint64_t key = detail::hash_files(analysis_inputs, io::fnv1a("distances"));
        key = io::fnv1a("metric=" + cfg.distance_metric + ";eps=" + io::fmt17(cfg.sinkhorn_epsilon) +
                            ";tol=" + io::fmt17(cfg.sinkhorn_tol) + ";it=" +
                            std::to_string(cfg.sinkhorn_max_iter) + ";gw=" + std::to_string(cfg.gw_outer_iter),
                        key);
        runner.run(Stage::distances, key, dst_files, result, [&] {
            DistanceParams params;
            params.metric = metric_from_name(cfg.distance_metric);
            params.sinkhorn.epsilon = cfg.sinkhorn_epsilon;
            params.sinkhorn.marginal_tol = cfg.sinkhorn_tol;
            params.sinkhorn.max_iter = cfg.sinkhorn_max_iter;
            params.gromov.epsilon = cfg.sinkhorn_epsilon;
            params.gromov.outer_iter = cfg.gw_outer_iter;
            params.gromov.inner = params.sinkhorn;
            params.jobs = jobs;
            for (int c = 0; c < num_classes; ++c) {
                const auto grids = load_attribution_grids(analysis_inputs[static_cast<std::size_t>(c)]);
                save_distance_matrix(class_dir(c) / "distances.dst",
                                     pairwise_distance_matrix(grids, params));
            }
        });
    }

    // -- spectral ------------------------------------------------------------
    const std::vector<fs::path> emb_files = per_class("embedding.emb");
    {
        std::uint64_t key = detail::hash_files(dst_files, io::fnv1a("spectral"));
        key = io::fnv1a("knn_k=" + std::to_string(cfg.knn_k) + ";q=" + std::to_string(cfg.q), key);
        std::vector<fs::path> outputs = emb_files;
        for (int c = 0; c < num_classes; ++c) {
            outputs.push_back(class_dir(c) / "affinity.txt");
            outputs.push_back(class_dir(c) / "eigenvalues.csv");
        }
        runner.run(Stage::spectral, key, outputs, result, [&] {
            for (int c = 0; c < num_classes; ++c) {
                const DistanceMatrix dm = load_distance_matrix(class_dir(c) / "distances.dst");
                if (static_cast<std::size_t>(cfg.knn_k) >= dm.n())
                    throw std::runtime_error("knn_k (= " + std::to_string(cfg.knn_k) +
                                             ") must be below the class sample count (= " +
                                             std::to_string(dm.n()) + ")");
                const AffinityGraph graph = knn_affinity(dm, cfg.knn_k, jobs);
                save_affinity_coo(class_dir(c) / "affinity.txt", graph);
                const Laplacians lap = laplacians(graph);
                const std::size_t q_eff = std::min<std::size_t>(static_cast<std::size_t>(cfg.q), dm.n());
                LanczosParams lp;
                lp.seed = cfg.seed;
                const SpectralEmbedding emb = lanczos_eigs(lap.lap_sym, q_eff, lp);
                save_embedding(class_dir(c) / "embedding.emb", emb);
                std::string csv = "index,eigenvalue\n";
                for (std::size_t i = 0; i < emb.eigenvalues.size(); ++i)
                    csv += std::to_string(i + 1) + "," + io::fmt9(emb.eigenvalues[i]) + "\n";
                io::write_text_file(class_dir(c) / "eigenvalues.csv", csv);
            }
        });
    }

    // -- rank (tau scores and cluster labels) --------------------------------
    const fs::path ranking_path = out_dir / "tau_ranking.csv";
    const std::vector<fs::path> cluster_files = per_class("clusters.csv");
    {
        std::uint64_t key = detail::hash_files(emb_files, io::fnv1a("rank"));
        key = io::fnv1a("k=" + std::to_string(cfg.kmeans_k_min) + ".." + std::to_string(cfg.kmeans_k_max) +
                            ";seed=" + std::to_string(cfg.seed) + ";ridge=" + io::fmt17(cfg.ridge),
                        key);
        std::vector<fs::path> outputs = cluster_files;
        outputs.push_back(ranking_path);
        runner.run(Stage::rank, key, outputs, result, [&] {
            std::vector<SeparabilityReport> reports;
            for (int c = 0; c < num_classes; ++c) {
                const SpectralEmbedding emb = load_embedding(class_dir(c) / "embedding.emb");
                TauParams tp;
                tp.k_min = cfg.kmeans_k_min;
                tp.k_max = cfg.kmeans_k_max;
                tp.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(c));
                tp.ridge = cfg.ridge;
                reports.push_back(tau_score(emb.phi, c, tp));

                // Cluster labels on the leading eigengap-many eigenvector
                // columns (at least two).
                std::size_t k_hat = 2;
                const std::size_t max_k =
                    std::min<std::size_t>(emb.q() - 1, static_cast<std::size_t>(cfg.kmeans_k_max));
                if (emb.q() >= 3 && max_k >= 1)
                    k_hat = std::max<std::size_t>(2, eigengap_estimate(emb.eigenvalues, max_k));
                Matrix lead(emb.n(), k_hat);
                for (std::size_t i = 0; i < emb.n(); ++i)
                    for (std::size_t j = 0; j < k_hat; ++j) lead(i, j) = emb.phi(i, j);
                const ClusterAssignment ca =
                    kmeans(lead, static_cast<int>(k_hat), mix_seed(cfg.seed, 0xC1 + static_cast<std::uint64_t>(c)));
                const auto metas = load_sample_metadata(class_dir(c) / "samples.csv");
                std::string csv = "sample_id,cluster\n";
                for (std::size_t i = 0; i < metas.size(); ++i)
                    csv += metas[i].sample_id + "," + std::to_string(ca.labels[i]) + "\n";
                io::write_text_file(class_dir(c) / "clusters.csv", csv);
            }
            save_tau_ranking(ranking_path, rank_classes(std::move(reports)), cfg.kmeans_k_min,
                             cfg.kmeans_k_max);
        });
    }

    // -- embed (t-SNE to 2d) --------------------------------------------------
    const std::vector<fs::path> planar_files = per_class("embedding_2d.csv");
    {
        std::uint64_t key = detail::hash_files(emb_files, io::fnv1a("embed"));
        key = detail::hash_files(cluster_files, key);
        key = io::fnv1a("perp=" + io::fmt17(cfg.tsne_perplexity) + ";it=" + std::to_string(cfg.tsne_iters) +
                            ";seed=" + std::to_string(cfg.seed),
                        key);
        runner.run(Stage::embed, key, planar_files, result, [&] {
            for (int c = 0; c < num_classes; ++c) {
                const SpectralEmbedding emb = load_embedding(class_dir(c) / "embedding.emb");
                TsneParams tp;
                tp.perplexity = cfg.tsne_perplexity;
                tp.iters = cfg.tsne_iters;
                tp.seed = mix_seed(cfg.seed, 0x7E + static_cast<std::uint64_t>(c));
                tp.jobs = jobs;
                const PlanarEmbedding planar = tsne(emb.phi, tp);
                const auto metas = load_sample_metadata(class_dir(c) / "samples.csv");
                const auto labels = load_cluster_labels(class_dir(c) / "clusters.csv");
                std::string csv = "sample_id,x,y,cluster\n";
                for (std::size_t i = 0; i < metas.size(); ++i)
                    csv += metas[i].sample_id + "," + io::fmt9(planar.coords(i, 0)) + "," +
                           io::fmt9(planar.coords(i, 1)) + "," + std::to_string(labels[i]) + "\n";
                io::write_text_file(class_dir(c) / "embedding_2d.csv", csv);
            }
        });
    }

    // -- report ----------------------------------------------------------------
    {
        std::uint64_t key = detail::hash_files(planar_files, io::fnv1a("report"));
        key = detail::hash_files({ranking_path}, key);
        key = detail::hash_files(emb_files, key);
        key = io::fnv1a(reproducible ? "repro" : "stamped", key);
        std::vector<fs::path> outputs;
        for (int c = 0; c < num_classes; ++c) {
            outputs.push_back(class_dir(c) / "report.html");
            outputs.push_back(class_dir(c) / ("scatter_class_" + std::to_string(c) + ".svg"));
        }
        outputs.push_back(out_dir / "report.html");
        runner.run(Stage::report, key, outputs, result, [&] {
            const auto ranked = load_tau_ranking(ranking_path);
            for (int c = 0; c < num_classes; ++c) {
                const SpectralEmbedding emb = load_embedding(class_dir(c) / "embedding.emb");
                PlanarEmbedding planar;
                planar.coords = load_planar_coords(class_dir(c) / "embedding_2d.csv");
                ClusterAssignment ca;
                ca.labels = load_cluster_labels(class_dir(c) / "clusters.csv");
                ca.k = ca.labels.empty() ? 0 : *std::max_element(ca.labels.begin(), ca.labels.end()) + 1;
                const auto metas = load_sample_metadata(class_dir(c) / "samples.csv");
                ReportInputs in;
                in.class_id = c;
                in.eigenvalues = &emb.eigenvalues;
                in.planar = &planar;
                in.clusters = &ca;
                in.ranked = &ranked;
                in.samples = &metas;
                render_report(in, class_dir(c), reproducible);
            }
            std::string html = "<!DOCTYPE html>\n<html><head><title>spectral relevance analysis</title>"
                               "</head><body>\n<h1>Class ranking</h1>\n<table border=\"1\">"
                               "<tr><th>rank</th><th>class</th><th>tau</th><th>report</th></tr>\n";
            int pos = 1;
            for (const auto& r : ranked) {
                html += "<tr><td>" + std::to_string(pos++) + "</td><td>" + std::to_string(r.class_id) +
                        "</td><td>" + io::fmt9(r.tau) + "</td><td><a href=\"class_" +
                        std::to_string(r.class_id) + "/report.html\">class_" + std::to_string(r.class_id) +
                        "</a></td></tr>\n";
            }
            html += "</table>\n</body></html>\n";
            io::write_text_file(out_dir / "report.html", html);
        });
    }

    return result;
}

}  // namespace spray
