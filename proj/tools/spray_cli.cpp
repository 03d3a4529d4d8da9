// Command-line front end for the spectral relevance analysis pipeline.
// Subcommands wrap one library operation set each; `run` executes the full
// per-class pipeline with stage caching. Exit codes: 0 success, 2 config or
// usage error, 3 I/O error, 10 + stage index for pipeline stage failures,
// 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "spray/spray.hpp"

namespace fs = std::filesystem;
using namespace spray;

namespace {

struct ArtifactCliOptions {
    std::string kind = "watermark";
    ArtifactParams params;

    void attach(CLI::App* cmd) {
        cmd->add_option("--artifact", kind, "watermark | border | rounded_corners | pasted_pattern");
        cmd->add_option("--intensity", params.intensity, "overlay pixel value");
        cmd->add_option("--watermark-h", params.watermark_h);
        cmd->add_option("--watermark-w", params.watermark_w);
        cmd->add_option("--border-width", params.border_width);
        cmd->add_option("--corner-radius", params.corner_radius);
        cmd->add_option("--pattern-h", params.pattern_h);
        cmd->add_option("--pattern-w", params.pattern_w);
        cmd->add_option("--anchor-y", params.anchor_y);
        cmd->add_option("--anchor-x", params.anchor_x);
    }

    ArtifactMask make(Shape image_shape, std::uint64_t seed) const {
        ArtifactParams p = params;
        p.image_c = image_shape.c;
        p.image_h = image_shape.h;
        p.image_w = image_shape.w;
        ArtifactKind k;
        if (kind == "watermark") k = ArtifactKind::watermark;
        else if (kind == "border") k = ArtifactKind::border;
        else if (kind == "rounded_corners") k = ArtifactKind::rounded_corners;
        else if (kind == "pasted_pattern") k = ArtifactKind::pasted_pattern;
        else throw ConfigError("unknown artifact kind: " + kind);
        return make_artifact(k, p, seed);
    }
};

Grid grayscale_cell(const Grid& measure) {
    Grid out = measure;
    double peak = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) peak = std::max(peak, out.data()[i]);
    if (peak > 0.0)
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= peak;
    return out;
}

std::string render_measure_grid_svg(const std::vector<std::vector<Grid>>& cells, bool reproducible) {
    const std::size_t rows = cells.size(), cols = cells[0].size();
    const std::size_t gh = cells[0][0].rows(), gw = cells[0][0].cols();
    const double cell_px = 800.0 / static_cast<double>(std::max(rows, cols));
    const double px = cell_px / static_cast<double>(std::max(gh, gw));
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 800\">\n";
    if (!reproducible) {
        svg += "<!-- generated " +
               std::to_string(std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count()) +
               " -->\n";
    }
    svg += "<rect width=\"800\" height=\"800\" fill=\"black\"/>\n";
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const Grid cell = grayscale_cell(cells[r][c]);
            for (std::size_t y = 0; y < gh; ++y)
                for (std::size_t x = 0; x < gw; ++x) {
                    const int v = static_cast<int>(255.0 * cell(y, x) + 0.5);
                    if (v <= 0) continue;
                    char color[8];
                    std::snprintf(color, sizeof(color), "#%02x%02x%02x", v, v, v);
                    svg += "<rect x=\"" + io::fmt9(c * cell_px + x * px) + "\" y=\"" +
                           io::fmt9(r * cell_px + y * px) + "\" width=\"" + io::fmt9(px) +
                           "\" height=\"" + io::fmt9(px) + "\" fill=\"" + std::string(color) + "\"/>\n";
                }
        }
    svg += "</svg>\n";
    return svg;
}

// Asymmetric L-shaped glyph rotated in quarter turns and translated, the
// corner images of the barycenter interpolation demo.
Grid demo_glyph(std::size_t size, int quarter_turns, int dy, int dx) {
    Grid g(size, size, 0.0);
    const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(size / 2) + dy;
    const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(size / 2) + dx;
    auto put = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        for (int t = 0; t < quarter_turns; ++t) {
            const std::ptrdiff_t ny = x;
            const std::ptrdiff_t nx = -y;
            y = ny;
            x = nx;
        }
        const std::ptrdiff_t py = cy + y, px = cx + x;
        if (py >= 0 && py < static_cast<std::ptrdiff_t>(size) && px >= 0 &&
            px < static_cast<std::ptrdiff_t>(size))
            g(static_cast<std::size_t>(py), static_cast<std::size_t>(px)) = 1.0;
    };
    for (std::ptrdiff_t y = -5; y <= 4; ++y)
        for (std::ptrdiff_t x = -4; x <= -3; ++x) put(y, x);
    for (std::ptrdiff_t y = 3; y <= 4; ++y)
        for (std::ptrdiff_t x = -2; x <= 3; ++x) put(y, x);
    return g;
}

int stage_exit_code(const StageError& e) { return 10 + static_cast<int>(e.stage); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral relevance analysis pipeline"};
    app.require_subcommand(1);

    try {
        // ------------------------------------------------------------ gen-data
        auto* gen = app.add_subcommand("gen-data", "generate a synthetic shape dataset");
        std::string gen_out;
        GeneratorParams gen_params;
        double gen_poison_fraction = 0.0;
        int gen_poison_class = 0;
        std::uint64_t gen_seed = 0;
        ArtifactCliOptions gen_artifact;
        gen->add_option("--out", gen_out, "output directory")->required();
        gen->add_option("--classes", gen_params.num_classes);
        gen->add_option("--train-per-class", gen_params.train_per_class);
        gen->add_option("--val-per-class", gen_params.val_per_class);
        gen->add_option("--height", gen_params.height);
        gen->add_option("--width", gen_params.width);
        gen->add_option("--noise-sigma", gen_params.noise_sigma);
        gen->add_flag("--confusable", gen_params.confusable_class0,
                      "class 0 shares class 1's glyph family");
        gen->add_option("--poison-fraction", gen_poison_fraction);
        gen->add_option("--poison-class", gen_poison_class);
        gen->add_option("--seed", gen_seed);
        gen_artifact.attach(gen);
        gen->callback([&] {
            fs::create_directories(gen_out);
            const Shape shape{1, gen_params.height, gen_params.width};
            Dataset ds;
            if (gen_poison_fraction > 0.0) {
                const ArtifactMask mask = gen_artifact.make(shape, gen_seed);
                ds = build_poisoned_dataset(gen_params, gen_poison_fraction, mask, gen_seed,
                                            gen_poison_class);
            } else {
                ds = generate_shape_dataset(gen_params, gen_seed);
            }
            save_dataset(fs::path(gen_out) / "dataset.spd", ds);
            std::size_t flagged = 0;
            for (const Sample& s : ds.samples) flagged += s.poisoned ? 1 : 0;
            std::printf("wrote %s (%zu samples, %zu poisoned)\n",
                        (fs::path(gen_out) / "dataset.spd").string().c_str(), ds.samples.size(), flagged);
        });

        // --------------------------------------------------------------- train
        auto* train = app.add_subcommand("train", "train a classifier on a dataset");
        std::string train_data, train_out, train_arch = "cnn";
        TrainConfig train_cfg;
        train->add_option("--data", train_data, "dataset.spd path")->required();
        train->add_option("--out", train_out, "checkpoint path")->required();
        train->add_option("--arch", train_arch, "cnn | mlp");
        train->add_option("--epochs", train_cfg.epochs);
        train->add_option("--lr", train_cfg.learning_rate);
        train->add_option("--batch", train_cfg.batch_size);
        train->add_option("--weight-decay", train_cfg.weight_decay);
        train->add_option("--seed", train_cfg.seed);
        train->callback([&] {
            const Dataset ds = load_dataset(train_data);
            ToyNetwork net;
            if (train_arch == "cnn") net = make_cnn(ds.image_shape, ds.num_classes, train_cfg.seed);
            else if (train_arch == "mlp")
                net = make_mlp(ds.image_shape, {128, 64}, ds.num_classes, train_cfg.seed);
            else throw ConfigError("unknown architecture: " + train_arch);
            const auto train_view = materialize(ds.split(true));
            net = train_sgd(net, train_view, train_cfg);
            save_network(train_out, net);
            std::printf("train accuracy %.4f, wrote %s\n", accuracy(net, train_view), train_out.c_str());
        });

        // ----------------------------------------------------------- attribute
        auto* attr = app.add_subcommand("attribute", "compute per-class attribution batches");
        std::string attr_data, attr_model, attr_out, attr_target = "true", attr_split = "train";
        double attr_epsilon = 1e-6;
        unsigned attr_jobs = 1;
        attr->add_option("--data", attr_data)->required();
        attr->add_option("--model", attr_model)->required();
        attr->add_option("--out", attr_out, "output directory")->required();
        attr->add_option("--target", attr_target, "true | predicted");
        attr->add_option("--epsilon", attr_epsilon, "lrp epsilon stabilizer");
        attr->add_option("--split", attr_split, "train | val | all");
        attr->add_option("--jobs", attr_jobs);
        attr->callback([&] {
            if (attr_target != "true" && attr_target != "predicted")
                throw ConfigError("attribute: --target must be true or predicted");
            const Dataset ds = load_dataset(attr_data);
            const ToyNetwork net = load_network(attr_model);
            for (int c = 0; c < ds.num_classes; ++c) {
                std::vector<const Sample*> members;
                for (const Sample& s : ds.samples) {
                    if (s.label != c) continue;
                    if (attr_split == "train" && !s.train) continue;
                    if (attr_split == "val" && s.train) continue;
                    members.push_back(&s);
                }
                if (members.empty()) continue;
                std::vector<AttributionMap> maps(members.size());
                parallel_for(members.size(), attr_jobs, [&](std::size_t i) {
                    int target = members[i]->label;
                    if (attr_target == "predicted") {
                        const auto logits = forward(net, members[i]->image).logits();
                        target = static_cast<int>(
                            std::max_element(logits.begin(), logits.end()) - logits.begin());
                    }
                    maps[i] = lrp_composite(net, members[i]->image, target, attr_epsilon,
                                            members[i]->label, members[i]->id);
                });
                const fs::path dir = fs::path(attr_out) / ("class_" + std::to_string(c));
                fs::create_directories(dir);
                std::vector<SampleMeta> metas;
                for (const AttributionMap& m : maps)
                    metas.push_back({m.sample_id, c, m.predicted_class, m.true_label_rank});
                save_attributions(dir / "attributions.atr", maps);
                save_sample_metadata(dir / "samples.csv", metas);
                std::printf("class %d: %zu attributions\n", c, maps.size());
            }
        });

        // ----------------------------------------------------------- distances
        auto* dist = app.add_subcommand("distances", "pairwise distance matrix from an ATR1 batch");
        std::string dist_in, dist_out, dist_metric = "euclidean";
        DistanceParams dist_params;
        dist->add_option("--in", dist_in, "attributions.atr path")->required();
        dist->add_option("--out", dist_out, "distances.dst path")->required();
        dist->add_option("--metric", dist_metric, "euclidean | wasserstein | gromov");
        dist->add_option("--sinkhorn-epsilon", dist_params.sinkhorn.epsilon);
        dist->add_option("--sinkhorn-tol", dist_params.sinkhorn.marginal_tol);
        dist->add_option("--sinkhorn-max-iter", dist_params.sinkhorn.max_iter);
        dist->add_option("--gw-outer-iter", dist_params.gromov.outer_iter);
        dist->add_option("--mass-fraction", dist_params.extract_mass_fraction);
        dist->add_option("--jobs", dist_params.jobs);
        dist->callback([&] {
            dist_params.metric = metric_from_name(dist_metric);
            dist_params.gromov.epsilon = dist_params.sinkhorn.epsilon;
            dist_params.gromov.inner = dist_params.sinkhorn;
            const auto grids = load_attribution_grids(dist_in);
            save_distance_matrix(dist_out, pairwise_distance_matrix(grids, dist_params));
            std::printf("wrote %s (%zu maps)\n", dist_out.c_str(), grids.size());
        });

        // ------------------------------------------------------------ spectral
        auto* spec = app.add_subcommand("spectral", "affinity graph, laplacian and eigendecomposition");
        std::string spec_in, spec_out, spec_affinity, spec_eigen_csv;
        int spec_k = 10, spec_q = 32;
        std::uint64_t spec_seed = 0;
        spec->add_option("--in", spec_in, "distances.dst path")->required();
        spec->add_option("--out", spec_out, "embedding.emb path")->required();
        spec->add_option("--knn-k", spec_k);
        spec->add_option("--q", spec_q);
        spec->add_option("--affinity", spec_affinity, "optional coordinate-list export");
        spec->add_option("--eigenvalues", spec_eigen_csv, "optional eigenvalue csv");
        spec->add_option("--seed", spec_seed);
        spec->callback([&] {
            const DistanceMatrix dm = load_distance_matrix(spec_in);
            const AffinityGraph graph = knn_affinity(dm, spec_k);
            if (!spec_affinity.empty()) save_affinity_coo(spec_affinity, graph);
            const Laplacians lap = laplacians(graph);
            LanczosParams lp;
            lp.seed = spec_seed;
            const SpectralEmbedding emb =
                lanczos_eigs(lap.lap_sym, std::min<std::size_t>(static_cast<std::size_t>(spec_q), dm.n()), lp);
            save_embedding(spec_out, emb);
            if (!spec_eigen_csv.empty()) {
                std::string csv = "index,eigenvalue\n";
                for (std::size_t i = 0; i < emb.eigenvalues.size(); ++i)
                    csv += std::to_string(i + 1) + "," + io::fmt9(emb.eigenvalues[i]) + "\n";
                io::write_text_file(spec_eigen_csv, csv);
            }
            std::printf("wrote %s (n=%zu, q=%zu, eigengap estimate %zu)\n", spec_out.c_str(), emb.n(),
                        emb.q(), emb.q() >= 3 ? eigengap_estimate(emb.eigenvalues, emb.q() - 1) : 1);
        });

        // ---------------------------------------------------------------- rank
        auto* rank = app.add_subcommand("rank", "tau separability ranking over class embeddings");
        std::string rank_in, rank_out;
        TauParams rank_params;
        rank->add_option("--in", rank_in, "pipeline out dir containing class_*/embedding.emb")->required();
        rank->add_option("--out", rank_out, "ranking csv path")->required();
        rank->add_option("--k-min", rank_params.k_min);
        rank->add_option("--k-max", rank_params.k_max);
        rank->add_option("--ridge", rank_params.ridge);
        rank->add_option("--seed", rank_params.seed);
        rank->callback([&] {
            std::vector<SeparabilityReport> reports;
            const std::uint64_t base_seed = rank_params.seed;
            for (int c = 0;; ++c) {
                const fs::path emb_path =
                    fs::path(rank_in) / ("class_" + std::to_string(c)) / "embedding.emb";
                if (!fs::exists(emb_path)) break;
                const SpectralEmbedding emb = load_embedding(emb_path);
                TauParams tp = rank_params;
                tp.seed = mix_seed(base_seed, static_cast<std::uint64_t>(c));
                reports.push_back(tau_score(emb.phi, c, tp));
            }
            if (reports.empty()) throw IoError("rank: no class_*/embedding.emb under " + rank_in);
            save_tau_ranking(rank_out, rank_classes(std::move(reports)), rank_params.k_min,
                             rank_params.k_max);
            std::printf("wrote %s\n", rank_out.c_str());
        });

        // --------------------------------------------------------------- embed
        auto* embed = app.add_subcommand("embed", "t-SNE planar embedding of a spectral embedding");
        std::string embed_in, embed_out, embed_clusters, embed_meta;
        TsneParams embed_params;
        embed->add_option("--in", embed_in, "embedding.emb path")->required();
        embed->add_option("--out", embed_out, "embedding_2d.csv path")->required();
        embed->add_option("--clusters", embed_clusters, "clusters.csv for the cluster column");
        embed->add_option("--meta", embed_meta, "samples.csv for sample ids");
        embed->add_option("--perplexity", embed_params.perplexity);
        embed->add_option("--iters", embed_params.iters);
        embed->add_option("--seed", embed_params.seed);
        embed->add_option("--jobs", embed_params.jobs);
        embed->callback([&] {
            const SpectralEmbedding emb = load_embedding(embed_in);
            const PlanarEmbedding planar = tsne(emb.phi, embed_params);
            std::vector<int> labels(emb.n(), 0);
            if (!embed_clusters.empty()) labels = load_cluster_labels(embed_clusters);
            std::vector<SampleMeta> metas;
            if (!embed_meta.empty()) metas = load_sample_metadata(embed_meta);
            std::string csv = "sample_id,x,y,cluster\n";
            for (std::size_t i = 0; i < emb.n(); ++i) {
                const std::string id = metas.empty() ? std::to_string(i) : metas[i].sample_id;
                csv += id + "," + io::fmt9(planar.coords(i, 0)) + "," + io::fmt9(planar.coords(i, 1)) +
                       "," + std::to_string(labels[i]) + "\n";
            }
            io::write_text_file(embed_out, csv);
            std::printf("wrote %s (kl=%.6f)\n", embed_out.c_str(), planar.kl_divergence);
        });

        // -------------------------------------------------------------- report
        auto* report = app.add_subcommand("report", "render the per-class report artifacts");
        std::string report_dir, report_ranking;
        int report_class = 0;
        bool report_reproducible = false;
        report->add_option("--class-dir", report_dir, "class directory with pipeline outputs")->required();
        report->add_option("--class-id", report_class)->required();
        report->add_option("--ranking", report_ranking, "tau_ranking.csv");
        report->add_flag("--reproducible", report_reproducible);
        report->callback([&] {
            const fs::path dir = report_dir;
            const SpectralEmbedding emb = load_embedding(dir / "embedding.emb");
            PlanarEmbedding planar;
            planar.coords = load_planar_coords(dir / "embedding_2d.csv");
            ClusterAssignment ca;
            ca.labels = load_cluster_labels(dir / "clusters.csv");
            ca.k = ca.labels.empty() ? 0 : *std::max_element(ca.labels.begin(), ca.labels.end()) + 1;
            const auto metas = load_sample_metadata(dir / "samples.csv");
            std::vector<SeparabilityReport> ranked;
            if (!report_ranking.empty()) ranked = load_tau_ranking(report_ranking);
            ReportInputs in;
            in.class_id = report_class;
            in.eigenvalues = &emb.eigenvalues;
            in.planar = &planar;
            in.clusters = &ca;
            in.ranked = report_ranking.empty() ? nullptr : &ranked;
            in.samples = &metas;
            const auto written = render_report(in, dir, report_reproducible);
            std::printf("wrote %zu report files under %s\n", written.size(), report_dir.c_str());
        });

        // ----------------------------------------------------------------- run
        auto* run = app.add_subcommand("run", "execute the full pipeline with stage caching");
        std::string run_config;
        unsigned run_jobs = 1;
        bool run_reproducible = false;
        std::map<std::string, std::string> run_overrides;
        run->add_option("--config", run_config, "key = value config file");
        run->add_option("--jobs", run_jobs, "worker cap for parallel stages");
        run->add_flag("--reproducible", run_reproducible, "suppress timestamps in svg output");
        for (const char* key :
             {"knn_k", "q", "kmeans_k_min", "kmeans_k_max", "distance_metric", "sinkhorn_epsilon",
              "sinkhorn_tol", "sinkhorn_max_iter", "gw_outer_iter", "tsne_perplexity", "tsne_iters",
              "ridge", "lrp_epsilon", "seed", "preprocess_grid", "data_dir", "out_dir"}) {
            run->add_option_function<std::string>(
                std::string("--") + key,
                [&run_overrides, key = std::string(key)](const std::string& v) { run_overrides[key] = v; },
                std::string("override config key ") + key);
        }
        run->callback([&] {
            PipelineConfig cfg;
            if (!run_config.empty()) cfg = load_config(run_config);
            for (const auto& [k, v] : run_overrides) apply_config_key(cfg, k, v);
            const PipelineResult res = run_pipeline(
                cfg, run_jobs, run_reproducible,
                [](const std::string& line) { std::printf("%s\n", line.c_str()); });
            std::printf("pipeline complete: %zu files\n", res.files.size());
        });

        // -------------------------------------------------------------- inject
        auto* inj = app.add_subcommand("inject", "inject an artifact into dataset samples");
        std::string inj_data, inj_out;
        double inj_fraction = 1.0;
        int inj_class = -1;
        std::uint64_t inj_seed = 0;
        ArtifactCliOptions inj_artifact;
        inj->add_option("--data", inj_data)->required();
        inj->add_option("--out", inj_out)->required();
        inj->add_option("--fraction", inj_fraction, "fraction of matching samples");
        inj->add_option("--class", inj_class, "restrict to one class (-1: all samples)");
        inj->add_option("--seed", inj_seed);
        inj_artifact.attach(inj);
        inj->callback([&] {
            Dataset ds = load_dataset(inj_data);
            const ArtifactMask mask = inj_artifact.make(ds.image_shape, inj_seed);
            std::vector<std::size_t> candidates;
            for (std::size_t i = 0; i < ds.samples.size(); ++i)
                if (inj_class < 0 || ds.samples[i].label == inj_class) candidates.push_back(i);
            const std::size_t count = static_cast<std::size_t>(
                std::llround(inj_fraction * static_cast<double>(candidates.size())));
            Rng rng = make_rng(inj_seed, 0x1D3);
            for (std::size_t pick : sample_without_replacement(rng, candidates.size(), count)) {
                Sample& s = ds.samples[candidates[pick]];
                s.image = inject(s.image, mask, candidates[pick]);
                s.poisoned = true;
            }
            save_dataset(inj_out, ds);
            std::printf("wrote %s (%zu injected)\n", inj_out.c_str(), count);
        });

        // -------------------------------------------------------------- ablate
        auto* abl = app.add_subcommand("ablate", "artifact addition / removal sensitivity study");
        std::string abl_data, abl_model, abl_out, abl_mode = "add", abl_fill = "mean";
        int abl_class = 0;
        std::size_t abl_n = 2000;
        double abl_noise_std = 0.05;
        std::uint64_t abl_seed = 0;
        ArtifactCliOptions abl_artifact;
        abl->add_option("--data", abl_data)->required();
        abl->add_option("--model", abl_model)->required();
        abl->add_option("--out", abl_out, "study csv path")->required();
        abl->add_option("--mode", abl_mode, "add | remove");
        abl->add_option("--artifact-class", abl_class)->required();
        abl->add_option("--n", abl_n, "sample cap for the addition study");
        abl->add_option("--fill", abl_fill, "mean | noise (removal study)");
        abl->add_option("--noise-std", abl_noise_std);
        abl->add_option("--seed", abl_seed);
        abl_artifact.attach(abl);
        abl->callback([&] {
            const Dataset ds = load_dataset(abl_data);
            const ToyNetwork net = load_network(abl_model);
            const ArtifactMask mask = abl_artifact.make(ds.image_shape, abl_seed);
            AblationResult result;
            if (abl_mode == "add") {
                std::vector<const Sample*> foreign;
                for (const Sample& s : ds.samples)
                    if (s.label != abl_class) foreign.push_back(&s);
                result = addition_study(net, foreign, mask, abl_class, abl_n, abl_seed);
            } else if (abl_mode == "remove") {
                std::vector<const Sample*> affected;
                for (const Sample& s : ds.samples)
                    if (s.label == abl_class) affected.push_back(&s);
                FillSpec fill;
                fill.mode = abl_fill == "noise" ? FillSpec::Mode::noise_fill : FillSpec::Mode::mean_fill;
                fill.channel_mean = ds.channel_means();
                fill.noise_std = abl_noise_std;
                fill.seed = abl_seed;
                result = removal_study(net, affected, mask, abl_class, fill);
            } else {
                throw ConfigError("ablate: --mode must be add or remove");
            }
            save_ablation_csv(abl_out, result);
            std::printf("%s study: mean delta rank %+.4f, mean delta prob %+.4f (%zu samples)\n",
                        abl_mode.c_str(), result.mean_delta_rank, result.mean_delta_prob,
                        result.n_samples);
        });

        // -------------------------------------------------------------- unhans
        auto* unh = app.add_subcommand("unhans", "retrain with the artifact spread to every sample");
        std::string unh_data, unh_model, unh_out;
        int unh_class = 0;
        TrainConfig unh_cfg;
        unh_cfg.epochs = 10;
        ArtifactCliOptions unh_artifact;
        unh->add_option("--data", unh_data)->required();
        unh->add_option("--model", unh_model, "base checkpoint to fine-tune")->required();
        unh->add_option("--out", unh_out, "record csv path")->required();
        unh->add_option("--artifact-class", unh_class)->required();
        unh->add_option("--epochs", unh_cfg.epochs);
        unh->add_option("--lr", unh_cfg.learning_rate);
        unh->add_option("--batch", unh_cfg.batch_size);
        unh->add_option("--seed", unh_cfg.seed);
        unh_artifact.attach(unh);
        unh->callback([&] {
            const Dataset ds = load_dataset(unh_data);
            const ToyNetwork base = load_network(unh_model);
            const ArtifactMask mask = unh_artifact.make(ds.image_shape, unh_cfg.seed);
            const UnhansRecord record = unhans_experiment(base, ds, unh_class, mask, unh_cfg);
            save_unhans_csv(unh_out, record);
            std::printf("accuracies: A/valA %.4f, A/valB %.4f, B/valA %.4f, B/valB %.4f\n",
                        record.acc_a_on_a, record.acc_a_on_b, record.acc_b_on_a, record.acc_b_on_b);
        });

        // ----------------------------------------------------------- demo-fig2
        auto* fig2 = app.add_subcommand("demo-fig2", "four-blob spectral clustering walkthrough");
        std::string fig2_out;
        std::size_t fig2_per_blob = 100;
        double fig2_sigma = 0.05;
        int fig2_k = 10;
        std::uint64_t fig2_seed = 0;
        bool fig2_reproducible = false;
        fig2->add_option("--out", fig2_out)->required();
        fig2->add_option("--points-per-blob", fig2_per_blob);
        fig2->add_option("--sigma", fig2_sigma);
        fig2->add_option("--knn-k", fig2_k);
        fig2->add_option("--seed", fig2_seed);
        fig2->add_flag("--reproducible", fig2_reproducible);
        fig2->callback([&] {
            fs::create_directories(fig2_out);
            Rng rng = make_rng(fig2_seed, 0xF162);
            const double centers[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
            const std::size_t n = 4 * fig2_per_blob;
            Matrix points(n, 2);
            for (std::size_t i = 0; i < n; ++i) {
                points(i, 0) = centers[i / fig2_per_blob][0] + fig2_sigma * gaussian(rng);
                points(i, 1) = centers[i / fig2_per_blob][1] + fig2_sigma * gaussian(rng);
            }
            const DistanceMatrix dm = pairwise_points_euclidean(points);
            const AffinityGraph graph = knn_affinity(dm, fig2_k);
            const Laplacians lap = laplacians(graph);
            LanczosParams lp;
            lp.seed = fig2_seed;
            const SpectralEmbedding emb = lanczos_eigs(lap.lap_sym, std::min<std::size_t>(32, n), lp);
            std::string csv = "index,eigenvalue\n";
            for (std::size_t i = 0; i < emb.eigenvalues.size(); ++i)
                csv += std::to_string(i + 1) + "," + io::fmt9(emb.eigenvalues[i]) + "\n";
            io::write_text_file(fs::path(fig2_out) / "eigenvalues.csv", csv);
            const std::size_t k_hat = eigengap_estimate(emb.eigenvalues, 10);
            Matrix lead(n, k_hat);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < k_hat; ++j) lead(i, j) = emb.phi(i, j);
            const ClusterAssignment ca = kmeans(lead, static_cast<int>(k_hat), fig2_seed);
            io::write_text_file(fs::path(fig2_out) / "scatter.svg",
                                render_scatter_svg(points, ca.labels, fig2_reproducible));
            std::printf("eigengap estimate: %zu clusters; wrote %s\n", k_hat, fig2_out.c_str());
        });

        // ----------------------------------------------------------- demo-fig3
        auto* fig3 = app.add_subcommand("demo-fig3", "barycenter interpolation grid of rotated glyphs");
        std::string fig3_out;
        int fig3_cells = 3;
        double fig3_epsilon = 2e-3;
        int fig3_iters = 200;
        bool fig3_reproducible = false;
        fig3->add_option("--out", fig3_out)->required();
        fig3->add_option("--cells", fig3_cells, "interpolation grid resolution");
        fig3->add_option("--epsilon", fig3_epsilon);
        fig3->add_option("--iterations", fig3_iters);
        fig3->add_flag("--reproducible", fig3_reproducible);
        fig3->callback([&] {
            fs::create_directories(fig3_out);
            const std::size_t size = 20;
            const std::vector<Grid> corners = {
                demo_glyph(size, 0, -3, -2),
                demo_glyph(size, 1, 2, 3),
                demo_glyph(size, 2, 3, -3),
                demo_glyph(size, 3, -2, 2),
            };
            const std::array<std::pair<double, double>, 4> corner_pos = {
                std::pair{0.0, 0.0}, std::pair{0.0, 1.0}, std::pair{1.0, 0.0}, std::pair{1.0, 1.0}};
            const int cells = std::max(2, fig3_cells);
            std::vector<std::vector<Grid>> linear_cells, wasserstein_cells;
            for (int r = 0; r < cells; ++r) {
                std::vector<Grid> lin_row, was_row;
                for (int c = 0; c < cells; ++c) {
                    const std::pair<double, double> pos = {static_cast<double>(r) / (cells - 1),
                                                           static_cast<double>(c) / (cells - 1)};
                    const auto w4 = chebyshev_interpolation_weights(pos, corner_pos);
                    const std::vector<double> weights(w4.begin(), w4.end());
                    lin_row.push_back(linear_blend(corners, weights));
                    was_row.push_back(wasserstein_barycenter(corners, weights, fig3_epsilon, fig3_iters));
                }
                linear_cells.push_back(std::move(lin_row));
                wasserstein_cells.push_back(std::move(was_row));
            }
            io::write_text_file(fs::path(fig3_out) / "barycenters_euclidean.svg",
                                render_measure_grid_svg(linear_cells, fig3_reproducible));
            io::write_text_file(fs::path(fig3_out) / "barycenters_wasserstein.svg",
                                render_measure_grid_svg(wasserstein_cells, fig3_reproducible));
            std::printf("wrote %s\n", fig3_out.c_str());
        });

        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const StageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return stage_exit_code(e);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
