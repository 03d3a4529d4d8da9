#pragma once

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include "spray/core.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/io.hpp"

namespace spray {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Pipeline settings, readable from flat "key = value" text with '#'
/// comments. Unknown keys are rejected.
struct PipelineConfig {
    int knn_k = 10;
    int q = 32;
    int kmeans_k_min = 2;
    int kmeans_k_max = 30;
    std::string distance_metric = "euclidean";
    double sinkhorn_epsilon = 1e-2;
    double sinkhorn_tol = 1e-7;
    int sinkhorn_max_iter = 10000;
    int gw_outer_iter = 50;
    double tsne_perplexity = 30.0;
    int tsne_iters = 1000;
    double ridge = -1.0;  // negative: per-clustering default
    double lrp_epsilon = 1e-6;
    std::uint64_t seed = 0;
    int preprocess_gh = 0, preprocess_gw = 0;  // 0 = preprocessing off
    std::string data_dir;
    std::string out_dir;
};

namespace detail {

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': " + value);
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for '" + key + "': " + value);
    }
}

}  // namespace detail

/// Applies one key/value pair; shared by the file parser and the CLI
/// per-key overrides.
inline void apply_config_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "knn_k") cfg.knn_k = static_cast<int>(detail::parse_int(key, value));
    else if (key == "q") cfg.q = static_cast<int>(detail::parse_int(key, value));
    else if (key == "kmeans_k_min") cfg.kmeans_k_min = static_cast<int>(detail::parse_int(key, value));
    else if (key == "kmeans_k_max") cfg.kmeans_k_max = static_cast<int>(detail::parse_int(key, value));
    else if (key == "distance_metric") cfg.distance_metric = value;
    else if (key == "sinkhorn_epsilon") cfg.sinkhorn_epsilon = detail::parse_real(key, value);
    else if (key == "sinkhorn_tol") cfg.sinkhorn_tol = detail::parse_real(key, value);
    else if (key == "sinkhorn_max_iter") cfg.sinkhorn_max_iter = static_cast<int>(detail::parse_int(key, value));
    else if (key == "gw_outer_iter") cfg.gw_outer_iter = static_cast<int>(detail::parse_int(key, value));
    else if (key == "tsne_perplexity") cfg.tsne_perplexity = detail::parse_real(key, value);
    else if (key == "tsne_iters") cfg.tsne_iters = static_cast<int>(detail::parse_int(key, value));
    else if (key == "ridge") cfg.ridge = detail::parse_real(key, value);
    else if (key == "lrp_epsilon") cfg.lrp_epsilon = detail::parse_real(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
    else if (key == "preprocess_grid") {
        if (value == "off" || value.empty()) {
            cfg.preprocess_gh = cfg.preprocess_gw = 0;
        } else {
            const auto x = value.find('x');
            if (x == std::string::npos) throw ConfigError("config: preprocess_grid wants GHxGW or off");
            cfg.preprocess_gh = static_cast<int>(detail::parse_int(key, value.substr(0, x)));
            cfg.preprocess_gw = static_cast<int>(detail::parse_int(key, value.substr(x + 1)));
        }
    } else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        apply_config_key(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config_text(io::read_text_file(path));
}

/// Range checks for every consuming operation; SPRAY_OUT_DIR backfills a
/// missing out_dir.
inline void validate(PipelineConfig& cfg) {
    if (cfg.out_dir.empty()) {
        const char* env = std::getenv("SPRAY_OUT_DIR");
        if (env) cfg.out_dir = env;
    }
    if (cfg.knn_k < 1) throw ConfigError("config: knn_k must be >= 1");
    if (cfg.q < 1) throw ConfigError("config: q must be >= 1");
    if (cfg.kmeans_k_min < 2) throw ConfigError("config: kmeans_k_min must be >= 2");
    if (cfg.kmeans_k_max < cfg.kmeans_k_min) throw ConfigError("config: kmeans_k_max < kmeans_k_min");
    metric_from_name(cfg.distance_metric);  // throws on unknown metric
    if (!(cfg.sinkhorn_epsilon > 0)) throw ConfigError("config: sinkhorn_epsilon must be positive");
    if (!(cfg.sinkhorn_tol > 0)) throw ConfigError("config: sinkhorn_tol must be positive");
    if (cfg.sinkhorn_max_iter < 1) throw ConfigError("config: sinkhorn_max_iter must be >= 1");
    if (cfg.gw_outer_iter < 1) throw ConfigError("config: gw_outer_iter must be >= 1");
    if (!(cfg.tsne_perplexity > 0)) throw ConfigError("config: tsne_perplexity must be positive");
    if (cfg.tsne_iters < 1) throw ConfigError("config: tsne_iters must be >= 1");
    if (!(cfg.lrp_epsilon > 0)) throw ConfigError("config: lrp_epsilon must be positive");
    if (cfg.preprocess_gh < 0 || cfg.preprocess_gw < 0 ||
        (cfg.preprocess_gh == 0) != (cfg.preprocess_gw == 0))
        throw ConfigError("config: preprocess_grid needs both dimensions");
    if (cfg.data_dir.empty()) throw ConfigError("config: data_dir is required");
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir is required (or set SPRAY_OUT_DIR)");
}

/// Canonical text form, used for stage cache keys.
inline std::string canonical_config_string(const PipelineConfig& c) {
    std::ostringstream os;
    os << "knn_k=" << c.knn_k << ";q=" << c.q << ";k_min=" << c.kmeans_k_min
       << ";k_max=" << c.kmeans_k_max << ";metric=" << c.distance_metric
       << ";sink_eps=" << io::fmt17(c.sinkhorn_epsilon) << ";sink_tol=" << io::fmt17(c.sinkhorn_tol)
       << ";sink_it=" << c.sinkhorn_max_iter << ";gw_it=" << c.gw_outer_iter
       << ";perp=" << io::fmt17(c.tsne_perplexity) << ";tsne_it=" << c.tsne_iters
       << ";ridge=" << io::fmt17(c.ridge) << ";lrp_eps=" << io::fmt17(c.lrp_epsilon)
       << ";seed=" << c.seed << ";pre=" << c.preprocess_gh << "x" << c.preprocess_gw;
    return os.str();
}

}  // namespace spray
