#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <variant>
#include <vector>

#include "spray/ablation.hpp"
#include "spray/artifact.hpp"
#include "spray/core.hpp"
#include "spray/dataset.hpp"
#include "spray/network.hpp"

using namespace spray;

namespace {

ArtifactParams params28() {
    ArtifactParams p;
    p.image_c = 1;
    p.image_h = 28;
    p.image_w = 28;
    return p;
}

Tensor random_image(Shape s, Rng& rng) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform01(rng);
    return t;
}

/// MLP whose first dense layer ignores every pixel under the mask support:
/// insensitive to the masked region by construction.
ToyNetwork blind_model(const ArtifactMask& mask, int num_classes, std::uint64_t seed) {
    ToyNetwork net = make_mlp(Shape{1, mask.image_h(), mask.image_w()}, {16}, num_classes, seed);
    auto& dense = std::get<DenseLayer>(net.layers[1]);
    const Grid alpha = materialize_alpha(mask);
    for (std::size_t o = 0; o < dense.out_size(); ++o)
        for (std::size_t i = 0; i < dense.in_size(); ++i)
            if (alpha.data()[i] > 0.0) dense.weights(o, i) = 0.0;
    return net;
}

/// Small dataset where class 0 and class 1 share a glyph family and the
/// watermark on class 0 is the only discriminative feature.
Dataset overfit_dataset(const ArtifactMask& mask, std::uint64_t seed) {
    GeneratorParams gp;
    gp.num_classes = 3;
    gp.train_per_class = 80;
    gp.val_per_class = 20;
    gp.confusable_class0 = true;
    return build_poisoned_dataset(gp, 1.0, mask, seed);
}

ToyNetwork train_overfit(const Dataset& ds, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.learning_rate = 0.3;
    cfg.batch_size = 16;
    cfg.seed = seed;
    return train_sgd(make_mlp(ds.image_shape, {32}, ds.num_classes, seed), materialize(ds.split(true)),
                     cfg);
}

}  // namespace

TEST_CASE("artifact masks") {
    SECTION("border of width 2 on 28x28 covers exactly the 208 frame pixels") {
        ArtifactParams p = params28();
        p.border_width = 2;
        const ArtifactMask m = make_artifact(ArtifactKind::border, p, 0);
        std::size_t support = 0;
        for (std::size_t i = 0; i < m.alpha.size(); ++i)
            if (m.alpha.data()[i] > 0.0) ++support;
        REQUIRE(support == 208);
        // interior is untouched
        for (std::size_t y = 2; y < 26; ++y)
            for (std::size_t x = 2; x < 26; ++x) REQUIRE(m.alpha(y, x) == 0.0);
    }
    SECTION("rounded corners match the per-pixel geometric predicate") {
        ArtifactParams p = params28();
        p.corner_radius = 4;
        const ArtifactMask m = make_artifact(ArtifactKind::rounded_corners, p, 0);
        const std::size_t r = 4, h = 28, w = 28;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                // oracle: inside the r x r corner squares, outside the quarter disc
                const std::size_t cy = std::min(y, h - 1 - y), cx = std::min(x, w - 1 - x);
                bool expect = false;
                if (cy < r && cx < r) {
                    const double dy = static_cast<double>(r - cy), dx = static_cast<double>(r - cx);
                    expect = dy * dy + dx * dx > static_cast<double>(r * r);
                }
                REQUIRE((m.alpha(y, x) > 0.0) == expect);
            }
    }
    SECTION("watermark anchors bottom-left") {
        ArtifactParams p = params28();
        p.watermark_h = 3;
        p.watermark_w = 3;
        const ArtifactMask m = make_artifact(ArtifactKind::watermark, p, 0);
        for (std::size_t y = 0; y < 28; ++y)
            for (std::size_t x = 0; x < 28; ++x)
                REQUIRE((m.alpha(y, x) == 1.0) == (y >= 25 && x < 3));
    }
    SECTION("pasted patterns are deterministic per seed, and random anchors move") {
        ArtifactParams p = params28();
        p.pattern_h = p.pattern_w = 5;
        p.anchor = AnchorMode::random_within_region;
        const ArtifactMask m = make_artifact(ArtifactKind::pasted_pattern, p, 9);
        const Grid a0 = materialize_alpha(m, 0);
        const Grid a0_again = materialize_alpha(m, 0);
        const Grid a1 = materialize_alpha(m, 1);
        REQUIRE(a0 == a0_again);
        REQUIRE(!(a0 == a1));
        double count0 = 0, count1 = 0;
        for (std::size_t i = 0; i < a0.size(); ++i) {
            count0 += a0.data()[i] > 0 ? 1 : 0;
            count1 += a1.data()[i] > 0 ? 1 : 0;
        }
        REQUIRE(count0 == 25);
        REQUIRE(count1 == 25);
    }
    SECTION("out-of-bounds parameters are rejected") {
        ArtifactParams p = params28();
        p.watermark_h = 40;
        REQUIRE_THROWS_AS(make_artifact(ArtifactKind::watermark, p, 0), std::invalid_argument);
        ArtifactParams b = params28();
        b.border_width = 20;
        REQUIRE_THROWS_AS(make_artifact(ArtifactKind::border, b, 0), std::invalid_argument);
    }
}

TEST_CASE("inject and remove") {
    Rng rng = make_rng(7);
    const Shape shape{1, 28, 28};

    SECTION("an all-zero alpha leaves the image unchanged") {
        ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
        m.alpha = Grid(28, 28, 0.0);
        const Tensor img = random_image(shape, rng);
        REQUIRE(inject(img, m) == img);
    }
    SECTION("alpha one replaces pixels by the pattern exactly") {
        const ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
        const Tensor img = random_image(shape, rng);
        const Tensor out = inject(img, m);
        for (std::size_t y = 0; y < 28; ++y)
            for (std::size_t x = 0; x < 28; ++x) {
                if (m.alpha(y, x) == 1.0)
                    REQUIRE(out.at(0, y, x) == m.pattern.at(0, y, x));
                else
                    REQUIRE(out.at(0, y, x) == img.at(0, y, x));
            }
    }
    SECTION("half blend with the image itself is a fixpoint") {
        const Tensor img = random_image(shape, rng);
        ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
        m.alpha = Grid(28, 28, 0.5);
        m.pattern = img;
        const Tensor out = inject(img, m);
        for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == Catch::Approx(img[i]).margin(1e-15));
    }
    SECTION("mean fill on a mean-valued image round-trips exactly") {
        const ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
        Tensor img(shape, 0.4);
        FillSpec fill;
        fill.channel_mean = {0.4};
        const Tensor back = remove(inject(img, m), m, fill);
        REQUIRE(back == img);
    }
    SECTION("masked pixels equal the fill values exactly, others untouched") {
        const ArtifactMask m = make_artifact(ArtifactKind::border, params28(), 0);
        const Tensor img = random_image(shape, rng);
        FillSpec fill;
        fill.channel_mean = {0.25};
        const Tensor out = remove(inject(img, m), m, fill);
        for (std::size_t y = 0; y < 28; ++y)
            for (std::size_t x = 0; x < 28; ++x) {
                if (m.alpha(y, x) > 0.0)
                    REQUIRE(out.at(0, y, x) == 0.25);
                else
                    REQUIRE(out.at(0, y, x) == img.at(0, y, x));
            }
        FillSpec noise;
        noise.mode = FillSpec::Mode::noise_fill;
        noise.channel_mean = {0.25};
        noise.noise_std = 0.05;
        noise.seed = 3;
        const Tensor noisy = remove(img, m, noise);
        const Tensor noisy_again = remove(img, m, noise);
        REQUIRE(noisy == noisy_again);
    }
    SECTION("shape mismatch is rejected") {
        const ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
        REQUIRE_THROWS_AS(inject(Tensor(Shape{1, 10, 10}), m), std::invalid_argument);
    }
}

TEST_CASE("relevance mass fraction") {
    const ArtifactMask m = make_artifact(ArtifactKind::watermark, params28(), 0);
    SECTION("all relevance inside the mask gives one") {
        Grid attr(28, 28, 0.0);
        attr(27, 0) = 2.0;
        attr(26, 1) = 1.0;
        REQUIRE(relevance_mass_fraction(attr, m.alpha) == 1.0);
    }
    SECTION("uniform relevance matches the support share") {
        Grid attr(28, 28, 1.0);
        REQUIRE(relevance_mass_fraction(attr, m.alpha) == Catch::Approx(9.0 / 784.0).margin(1e-9));
    }
    SECTION("random maps match the brute-force masked sum") {
        Rng rng = make_rng(17);
        Grid attr(28, 28);
        for (std::size_t i = 0; i < attr.size(); ++i) attr.data()[i] = gaussian(rng);
        double inside = 0, total = 0;
        for (std::size_t y = 0; y < 28; ++y)
            for (std::size_t x = 0; x < 28; ++x) {
                const double v = std::max(0.0, attr(y, x));
                total += v;
                if (m.alpha(y, x) > 0) inside += v;
            }
        REQUIRE(relevance_mass_fraction(attr, m.alpha) == Catch::Approx(inside / total).margin(1e-12));
    }
    SECTION("no positive relevance gives zero") {
        REQUIRE(relevance_mass_fraction(Grid(28, 28, -1.0), m.alpha) == 0.0);
    }
}

TEST_CASE("poisoned dataset construction") {
    const ArtifactMask mask = make_artifact(ArtifactKind::watermark, params28(), 1);
    GeneratorParams gp;
    gp.num_classes = 3;
    gp.train_per_class = 100;
    gp.val_per_class = 10;
    SECTION("fraction zero flags nothing") {
        const Dataset ds = build_poisoned_dataset(gp, 0.0, mask, 5);
        for (const Sample& s : ds.samples) REQUIRE(!s.poisoned);
    }
    SECTION("fraction one flags the whole designated class") {
        const Dataset ds = build_poisoned_dataset(gp, 1.0, mask, 5);
        for (const Sample& s : ds.samples) REQUIRE(s.poisoned == (s.label == 0));
    }
    SECTION("fraction 0.2 of 100 training samples flags exactly 20") {
        const Dataset ds = build_poisoned_dataset(gp, 0.2, mask, 5);
        std::size_t train_flagged = 0, val_flagged = 0;
        for (const Sample& s : ds.samples) {
            if (!s.poisoned) continue;
            REQUIRE(s.label == 0);
            (s.train ? train_flagged : val_flagged)++;
        }
        REQUIRE(train_flagged == 20);
        REQUIRE(val_flagged == 2);
    }
    SECTION("poisoned samples carry the watermark pixels") {
        const Dataset ds = build_poisoned_dataset(gp, 0.5, mask, 5);
        for (const Sample& s : ds.samples)
            if (s.poisoned) REQUIRE(s.image.at(0, 27, 0) == 1.0);
    }
    SECTION("invalid fractions are rejected") {
        REQUIRE_THROWS_AS(build_poisoned_dataset(gp, 1.5, mask, 5), std::invalid_argument);
    }
}

TEST_CASE("addition and removal studies") {
    const ArtifactMask mask = make_artifact(ArtifactKind::watermark, params28(), 1);

    SECTION("a mask-blind model is completely unaffected") {
        Rng rng = make_rng(23);
        const ToyNetwork net = blind_model(mask, 3, 4);
        std::vector<Sample> samples(12);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            samples[i].image = random_image(Shape{1, 28, 28}, rng);
            samples[i].label = 1 + static_cast<int>(i % 2);
            samples[i].id = "f" + std::to_string(i);
        }
        std::vector<const Sample*> view;
        for (const auto& s : samples) view.push_back(&s);
        const AblationResult add = addition_study(net, view, mask, 0, 0, 1);
        REQUIRE(add.mean_delta_rank == 0.0);
        REQUIRE(add.mean_delta_prob == 0.0);
        FillSpec fill;
        fill.channel_mean = {0.3};
        const AblationResult rem = removal_study(net, view, mask, 0, fill);
        REQUIRE(rem.mean_delta_rank == 0.0);
        REQUIRE(rem.mean_delta_prob == 0.0);
    }

    SECTION("an overfit watermark model reacts in opposite directions") {
        const Dataset ds = overfit_dataset(mask, 31);
        const ToyNetwork net = train_overfit(ds, 31);
        REQUIRE(accuracy(net, materialize(ds.split(true))) >= 0.95);

        std::vector<const Sample*> foreign, affected;
        for (const Sample& s : ds.samples) {
            if (!s.train && s.label != 0) foreign.push_back(&s);
            if (!s.train && s.label == 0) affected.push_back(&s);
        }
        const AblationResult add = addition_study(net, foreign, mask, 0, 2000, 7);
        REQUIRE(add.n_samples == foreign.size());  // n larger than available uses all
        REQUIRE(add.mean_delta_prob > 0.0);
        REQUIRE(add.mean_delta_rank > 0.0);

        FillSpec fill;
        fill.channel_mean = {0.1};
        const AblationResult rem = removal_study(net, affected, mask, 0, fill);
        REQUIRE(rem.mean_delta_prob <= -0.5);
        // sign coherence between the two studies
        REQUIRE(add.mean_delta_prob * rem.mean_delta_prob < 0.0);

        // means recompute from the per-sample records
        double dr = 0, dp = 0;
        for (const auto& r : add.per_sample) {
            dr += r.rank_before - r.rank_after;
            dp += r.prob_after - r.prob_before;
        }
        REQUIRE(add.mean_delta_rank == Catch::Approx(dr / add.n_samples).margin(1e-12));
        REQUIRE(add.mean_delta_prob == Catch::Approx(dp / add.n_samples).margin(1e-12));
        for (const auto& r : add.per_sample) {
            REQUIRE(r.rank_before >= 1);
            REQUIRE(r.rank_before <= ds.num_classes);
            REQUIRE(r.rank_after >= 1);
            REQUIRE(r.rank_after <= ds.num_classes);
        }
    }

    SECTION("foreign samples containing the artifact class are rejected") {
        Rng rng = make_rng(29);
        Sample s;
        s.image = random_image(Shape{1, 28, 28}, rng);
        s.label = 0;
        const std::vector<const Sample*> view = {&s};
        const ToyNetwork net = blind_model(mask, 3, 4);
        REQUIRE_THROWS_AS(addition_study(net, view, mask, 0, 0, 1), std::invalid_argument);
        FillSpec fill;
        fill.channel_mean = {0.3};
        REQUIRE_THROWS_AS(removal_study(net, {}, mask, 0, fill), std::invalid_argument);
    }
}

TEST_CASE("unhans experiment bookkeeping") {
    const ArtifactMask mask = make_artifact(ArtifactKind::watermark, params28(), 1);
    GeneratorParams gp;
    gp.num_classes = 2;
    gp.train_per_class = 30;
    gp.val_per_class = 10;
    const Dataset ds = build_poisoned_dataset(gp, 0.5, mask, 3);
    const ToyNetwork base = make_mlp(ds.image_shape, {16}, 2, 8);

    SECTION("zero epochs keep both models equal to the base") {
        TrainConfig cfg;
        cfg.epochs = 0;
        const UnhansRecord r = unhans_experiment(base, ds, 0, mask, cfg);
        REQUIRE(r.acc_a_on_a == r.acc_b_on_a);
        REQUIRE(r.acc_a_on_b == r.acc_b_on_b);
        REQUIRE(r.relevance_series.empty());
    }
    SECTION("the relevance series tracks the requested epochs") {
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.learning_rate = 0.2;
        cfg.batch_size = 10;
        cfg.seed = 2;
        const UnhansRecord r = unhans_experiment(base, ds, 0, mask, cfg);
        REQUIRE(r.relevance_series.size() == 2);
        REQUIRE(r.relevance_series[0].epoch == 1);
        REQUIRE(r.relevance_series[1].epoch == 5);
        for (const auto& e : r.relevance_series) {
            REQUIRE(e.rmf_a >= 0.0);
            REQUIRE(e.rmf_a <= 1.0);
            REQUIRE(e.rmf_b >= 0.0);
            REQUIRE(e.rmf_b <= 1.0);
        }
        const auto path = std::filesystem::temp_directory_path() / "spray_test_unhans.csv";
        save_unhans_csv(path, r);
        const std::string text = io::read_text_file(path);
        REQUIRE(text.rfind("model,val_a,val_b\n", 0) == 0);
        std::filesystem::remove(path);
    }
}

TEST_CASE("ablation csv export") {
    AblationResult res;
    res.artifact_class = 1;
    res.per_sample = {{"a", 2, 1, 0.2, 0.9}, {"b", 3, 1, 0.1, 0.8}};
    spray::detail::finish_ablation(res);
    REQUIRE(res.mean_delta_rank == Catch::Approx(1.5));
    REQUIRE(res.mean_delta_prob == Catch::Approx(0.7));
    const auto path = std::filesystem::temp_directory_path() / "spray_test_ablation.csv";
    save_ablation_csv(path, res);
    const std::string text = io::read_text_file(path);
    REQUIRE(text.rfind("sample_id,rank_before,rank_after,prob_before,prob_after\n", 0) == 0);
    REQUIRE(text.find("a,2,1,") != std::string::npos);
    std::filesystem::remove(path);
}
