#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "spray/artifact.hpp"
#include "spray/attribution_map.hpp"
#include "spray/core.hpp"
#include "spray/dataset.hpp"
#include "spray/io.hpp"
#include "spray/lrp.hpp"
#include "spray/network.hpp"

namespace spray {

struct AblationRecord {
    std::string sample_id;
    int rank_before = 0, rank_after = 0;
    double prob_before = 0.0, prob_after = 0.0;
};

/// Sign conventions: delta_rank = rank_before - rank_after (positive means
/// the prediction moved toward the artifact class) and delta_prob =
/// prob_after - prob_before. An affected model scores positive means in the
/// addition study and negative means in the removal study.
struct AblationResult {
    double mean_delta_rank = 0.0;
    double mean_delta_prob = 0.0;
    std::vector<AblationRecord> per_sample;
    int artifact_class = 0;
    std::size_t n_samples = 0;
};

namespace detail {

inline void finish_ablation(AblationResult& out) {
    out.n_samples = out.per_sample.size();
    double dr = 0.0, dp = 0.0;
    for (const AblationRecord& r : out.per_sample) {
        dr += static_cast<double>(r.rank_before - r.rank_after);
        dp += r.prob_after - r.prob_before;
    }
    out.mean_delta_rank = dr / static_cast<double>(out.n_samples);
    out.mean_delta_prob = dp / static_cast<double>(out.n_samples);
}

inline std::pair<int, double> rank_and_prob(const ToyNetwork& net, const Tensor& image, int cls) {
    const std::vector<double> logits = forward(net, image).logits();
    return {rank_of_class(logits, cls), softmax(logits)[static_cast<std::size_t>(cls)]};
}

}  // namespace detail

/// Measures how far injecting the artifact moves predictions toward the
/// artifact class on samples from other classes. Draws a seeded subset of at
/// most n samples (n = 0 means all).
inline AblationResult addition_study(const ToyNetwork& net, const std::vector<const Sample*>& foreign,
                                     const ArtifactMask& mask, int artifact_class, std::size_t n,
                                     std::uint64_t seed) {
    if (foreign.empty()) throw std::invalid_argument("addition_study: empty sample set");
    for (const Sample* s : foreign)
        if (s->label == artifact_class)
            throw std::invalid_argument("addition_study: foreign samples must exclude the artifact class");
    std::vector<std::size_t> chosen;
    if (n == 0 || n >= foreign.size()) {
        chosen.resize(foreign.size());
        for (std::size_t i = 0; i < foreign.size(); ++i) chosen[i] = i;
    } else {
        Rng rng = make_rng(seed, 0xADD);
        chosen = sample_without_replacement(rng, foreign.size(), n);
        std::sort(chosen.begin(), chosen.end());
    }
    AblationResult out;
    out.artifact_class = artifact_class;
    for (std::size_t idx : chosen) {
        const Sample& s = *foreign[idx];
        AblationRecord rec;
        rec.sample_id = s.id;
        std::tie(rec.rank_before, rec.prob_before) = detail::rank_and_prob(net, s.image, artifact_class);
        std::tie(rec.rank_after, rec.prob_after) =
            detail::rank_and_prob(net, inject(s.image, mask, idx), artifact_class);
        out.per_sample.push_back(std::move(rec));
    }
    detail::finish_ablation(out);
    return out;
}

/// Measures how far removing the artifact (replacing its support with the
/// fill) moves predictions away from the artifact class on affected samples.
inline AblationResult removal_study(const ToyNetwork& net, const std::vector<const Sample*>& affected,
                                    const ArtifactMask& mask, int artifact_class, const FillSpec& fill) {
    if (affected.empty()) throw std::invalid_argument("removal_study: empty sample set");
    AblationResult out;
    out.artifact_class = artifact_class;
    for (std::size_t idx = 0; idx < affected.size(); ++idx) {
        const Sample& s = *affected[idx];
        AblationRecord rec;
        rec.sample_id = s.id;
        std::tie(rec.rank_before, rec.prob_before) = detail::rank_and_prob(net, s.image, artifact_class);
        std::tie(rec.rank_after, rec.prob_after) =
            detail::rank_and_prob(net, remove(s.image, mask, fill, idx), artifact_class);
        out.per_sample.push_back(std::move(rec));
    }
    detail::finish_ablation(out);
    return out;
}

/// Share of positive relevance falling on the mask support; zero when the
/// map has no positive relevance at all.
inline double relevance_mass_fraction(const Grid& attribution, const Grid& alpha) {
    if (attribution.rows() != alpha.rows() || attribution.cols() != alpha.cols())
        throw std::invalid_argument("relevance_mass_fraction: shape mismatch");
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < attribution.size(); ++i) {
        const double v = attribution.data()[i];
        if (v <= 0.0) continue;
        total += v;
        if (alpha.data()[i] > 0.0) inside += v;
    }
    return total > 0.0 ? inside / total : 0.0;
}

inline double relevance_mass_fraction(const AttributionMap& attribution, const ArtifactMask& mask,
                                      std::uint64_t placement_index = 0) {
    return relevance_mass_fraction(attribution.values, materialize_alpha(mask, placement_index));
}

/// Synthesizes the poisoned-dataset condition: a clean shape dataset with
/// the artifact injected into an exact seeded fraction of one class (train
/// and validation alike), flags recorded for later precision scoring.
inline Dataset build_poisoned_dataset(const GeneratorParams& params, double poison_fraction,
                                      const ArtifactMask& mask, std::uint64_t seed, int poison_class = 0) {
    if (poison_fraction < 0.0 || poison_fraction > 1.0)
        throw std::invalid_argument("build_poisoned_dataset: poison_fraction must be in [0, 1]");
    Dataset ds = generate_shape_dataset(params, seed);
    for (const bool train : {true, false}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            if (ds.samples[i].label == poison_class && ds.samples[i].train == train) members.push_back(i);
        const std::size_t count =
            static_cast<std::size_t>(std::llround(poison_fraction * static_cast<double>(members.size())));
        Rng rng = make_rng(seed, train ? 0x9011 : 0x9012);
        for (std::size_t pick : sample_without_replacement(rng, members.size(), count)) {
            Sample& s = ds.samples[members[pick]];
            s.image = inject(s.image, mask);
            s.poisoned = true;
        }
    }
    return ds;
}

/// Accuracy matrix and relevance-mass series of the un-Hans'ing experiment.
/// Model A fine-tunes on the data as-is, model B on a copy with the artifact
/// injected into every training sample; both evaluate on the as-is
/// validation split (val A) and on one with the artifact everywhere (val B).
struct UnhansRecord {
    double acc_a_on_a = 0.0, acc_a_on_b = 0.0;
    double acc_b_on_a = 0.0, acc_b_on_b = 0.0;
    struct EpochMass {
        int epoch = 0;
        double rmf_a = 0.0, rmf_b = 0.0;
    };
    std::vector<EpochMass> relevance_series;  // epochs 1, 5, 10 (clipped to cfg.epochs)
};

inline UnhansRecord unhans_experiment(const ToyNetwork& base, const Dataset& ds, int artifact_class,
                                      const ArtifactMask& mask, const TrainConfig& cfg,
                                      double lrp_epsilon_value = 1e-6) {
    if (ds.num_classes < 2) throw std::invalid_argument("unhans_experiment: need at least 2 classes");
    std::vector<Sample> train_a = materialize(ds.split(true));
    std::vector<Sample> val_a = materialize(ds.split(false));
    if (train_a.empty() || val_a.empty())
        throw std::invalid_argument("unhans_experiment: dataset needs both splits");

    std::vector<Sample> train_b = train_a;
    for (std::size_t i = 0; i < train_b.size(); ++i) train_b[i].image = inject(train_b[i].image, mask, i);
    std::vector<Sample> val_b = val_a;
    for (std::size_t i = 0; i < val_b.size(); ++i) val_b[i].image = inject(val_b[i].image, mask, i);

    // Artifact-class validation samples with the artifact present: the
    // common probe set for relevance-mass tracking on both models.
    std::vector<const Sample*> probes;
    for (const Sample& s : val_b)
        if (s.label == artifact_class) probes.push_back(&s);

    const Grid alpha = materialize_alpha(mask, 0);
    auto mean_rmf = [&](const ToyNetwork& net) {
        double acc = 0.0;
        for (const Sample* s : probes) {
            const AttributionMap m =
                lrp_composite(net, s->image, artifact_class, lrp_epsilon_value, s->label, s->id);
            acc += relevance_mass_fraction(m.values, alpha);
        }
        return probes.empty() ? 0.0 : acc / static_cast<double>(probes.size());
    };

    const std::vector<int> checkpoints = {1, 5, 10};
    const auto is_checkpoint = [&](int epoch) {
        return std::find(checkpoints.begin(), checkpoints.end(), epoch) != checkpoints.end();
    };
    UnhansRecord record;
    std::vector<double> rmf_a_at, rmf_b_at;
    const ToyNetwork model_a =
        train_sgd(base, train_a, cfg, [&](int epoch, const ToyNetwork& net) {
            if (is_checkpoint(epoch)) rmf_a_at.push_back(mean_rmf(net));
        });
    const ToyNetwork model_b =
        train_sgd(base, train_b, cfg, [&](int epoch, const ToyNetwork& net) {
            if (is_checkpoint(epoch)) rmf_b_at.push_back(mean_rmf(net));
        });

    std::size_t si = 0;
    for (int ep : checkpoints)
        if (ep <= cfg.epochs && si < rmf_a_at.size()) {
            record.relevance_series.push_back({ep, rmf_a_at[si], rmf_b_at[si]});
            ++si;
        }

    record.acc_a_on_a = accuracy(model_a, val_a);
    record.acc_a_on_b = accuracy(model_a, val_b);
    record.acc_b_on_a = accuracy(model_b, val_a);
    record.acc_b_on_b = accuracy(model_b, val_b);
    return record;
}

/// Per-study CSV: sample_id,rank_before,rank_after,prob_before,prob_after.
inline void save_ablation_csv(const std::filesystem::path& path, const AblationResult& result) {
    auto os = io::open_out(path, /*binary=*/false);
    os << "sample_id,rank_before,rank_after,prob_before,prob_after\n";
    for (const AblationRecord& r : result.per_sample)
        os << r.sample_id << ',' << r.rank_before << ',' << r.rank_after << ','
           << io::fmt9(r.prob_before) << ',' << io::fmt9(r.prob_after) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

/// Un-Hans record: the 2x2 accuracy matrix followed by the per-epoch
/// relevance-mass series.
inline void save_unhans_csv(const std::filesystem::path& path, const UnhansRecord& r) {
    auto os = io::open_out(path, /*binary=*/false);
    os << "model,val_a,val_b\n";
    os << "train_a," << io::fmt9(r.acc_a_on_a) << ',' << io::fmt9(r.acc_a_on_b) << '\n';
    os << "train_b," << io::fmt9(r.acc_b_on_a) << ',' << io::fmt9(r.acc_b_on_b) << '\n';
    os << "epoch,relevance_mass_a,relevance_mass_b\n";
    for (const auto& e : r.relevance_series)
        os << e.epoch << ',' << io::fmt9(e.rmf_a) << ',' << io::fmt9(e.rmf_b) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace spray
