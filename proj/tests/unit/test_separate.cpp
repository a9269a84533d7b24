#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "cardiosep/error.hpp"
#include "cardiosep/separate.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cardiosep;
using namespace cardiosep::separate;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scene {
    std::vector<siggen::SourceSignal> sources;
    siggen::MixtureSignal mixture;
    dsp::ComplexSpectrogram spec;
    std::vector<dsp::FeatureFrame> frames;  // normalized
    dsp::FeatureStats stats;
    std::vector<int> labels;
};

Scene make_scene(double seconds, std::uint64_t seed) {
    Scene s;
    s.sources = {siggen::gen_heart({}, seconds, 4000.0, seed), siggen::gen_lung({}, seconds, 4000.0, seed + 1)};
    const std::vector<double> gains{1.0, 1.0};
    s.mixture = siggen::mix(s.sources, gains);
    s.spec = dsp::stft(s.mixture.samples, 4000.0);
    const auto raw = dsp::log_mag(s.spec);
    s.stats = dsp::fit_stats(raw);
    s.frames = dsp::normalize(raw, s.stats);
    s.labels = siggen::dominance_labels(s.sources, 256, 64);
    return s;
}

vae::VaeModel default_model(std::uint64_t seed) {
    Rng rng(seed);
    return vae::VaeModel::create({}, 1.0, rng);
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

void check_completeness(const SeparatedSources& sep, const dsp::ComplexSpectrogram& spec) {
    const auto full = dsp::istft(spec);
    std::vector<double> sum(full.size(), 0.0);
    for (const auto& s : sep.signals)
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s[i];
    CHECK(rel_l2(sum, full) < 1e-6);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        for (std::size_t k = 0; k < spec.freq_bins(); ++k) {
            double m = 0.0;
            for (const auto& mask : sep.masks) m += mask(t, k);
            REQUIRE(std::abs(m - 1.0) < 1e-12);
        }
    }
}

}  // namespace

TEST_CASE("assign_frames: single cluster and determinism") {
    const auto scene = make_scene(3.0, 1);
    const auto model = default_model(2);
    const auto one = assign_frames(model, scene.frames, 1, 3, 4);
    for (int id : one.ids) REQUIRE(id == 0);
    const auto a = assign_frames(model, scene.frames, 2, 3, 5);
    const auto b = assign_frames(model, scene.frames, 2, 3, 5);
    CHECK(a.ids == b.ids);
    CHECK(a.centroids == b.centroids);
    CHECK(a.centroids.cols() == 8);

    std::vector<dsp::FeatureFrame> wrong{{std::vector<double>(64), 0}};
    CHECK_THROWS_AS(assign_frames(model, wrong, 1, 1, 0), InvalidArgument);
}

TEST_CASE("HARD mode with every frame on source 0 returns the mixture") {
    const auto scene = make_scene(2.0, 3);
    const auto model = default_model(4);
    auto assignment = assignment_from_labels(model, scene.frames, std::vector<int>(scene.frames.size(), 0), 2);
    const auto sep = reconstruct(scene.spec, model, assignment, scene.stats, MaskMode::hard, "m");
    CHECK(sep.signals[0] == dsp::istft(scene.spec));
    for (double v : sep.signals[1]) REQUIRE(v == 0.0);
    CHECK(sep.model_id == "m");
    CHECK(sep.mode == MaskMode::hard);
}

TEST_CASE("masks partition every bin in both modes") {
    const auto scene = make_scene(3.0, 5);
    const auto model = default_model(6);
    const auto assignment = assign_frames(model, scene.frames, 2, 3, 7);
    for (auto mode : {MaskMode::hard, MaskMode::wiener}) {
        const auto sep = reconstruct(scene.spec, model, assignment, scene.stats, mode);
        REQUIRE(sep.signals.size() == 2);
        CHECK(sep.signals[0].size() == scene.spec.signal_length());
        check_completeness(sep, scene.spec);
    }
    const auto three = assign_frames(model, scene.frames, 3, 2, 8);
    check_completeness(reconstruct(scene.spec, model, three, scene.stats, MaskMode::wiener), scene.spec);
}

TEST_CASE("WIENER mask falls back to uniform when decoded power vanishes") {
    const auto scene = make_scene(1.0, 9);
    auto model = default_model(10);
    for (auto& l : model.decoder.layers) l.weight.fill(0.0);
    auto& bias = model.decoder.layers.back().bias;
    std::fill(bias.begin(), bias.end(), 0.0);
    dsp::FeatureStats stats{std::vector<double>(129, -100.0), std::vector<double>(129, 1.0)};
    const auto assignment = assign_frames(model, scene.frames, 2, 1, 11);
    const auto sep = reconstruct(scene.spec, model, assignment, stats, MaskMode::wiener);
    for (const auto& mask : sep.masks)
        for (double m : mask.data()) REQUIRE(m == 0.5);
}

TEST_CASE("reconstruct preconditions") {
    const auto scene = make_scene(1.0, 12);
    const auto model = default_model(13);
    auto assignment = assign_frames(model, scene.frames, 2, 1, 14);
    assignment.ids.pop_back();
    CHECK_THROWS_AS(reconstruct(scene.spec, model, assignment, scene.stats, MaskMode::hard), InvalidArgument);
    CHECK(mask_mode_from_string("hard") == MaskMode::hard);
    CHECK(std::string(to_string(MaskMode::wiener)) == "wiener");
    CHECK_THROWS_AS(mask_mode_from_string("soft"), InvalidArgument);
}

TEST_CASE("si_sdr: sentinels, scale invariance and the direct formula") {
    const auto ref = fixture::noise(3000, 15);
    CHECK(si_sdr(ref, ref) == kInf);
    CHECK(si_sdr(std::vector<double>(3000, 0.0), ref) == -kInf);
    CHECK_THROWS_AS(si_sdr(ref, std::vector<double>(3000, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(si_sdr(ref, std::vector<double>(10, 1.0)), InvalidArgument);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto noise = fixture::noise(3000, 100 + seed, 0.3);
        std::vector<double> est(3000);
        for (std::size_t i = 0; i < est.size(); ++i) est[i] = ref[i] + noise[i];
        const double direct = oracle::si_sdr(est, ref);
        CHECK(std::abs(si_sdr(est, ref) - direct) < 1e-9);
        for (double alpha : {1e-3, 0.5, 7.0, 1e4}) {
            std::vector<double> scaled(est);
            for (double& v : scaled) v *= alpha;
            REQUIRE(std::abs(si_sdr(scaled, ref) - si_sdr(est, ref)) < 1e-9);
        }
    }
}

TEST_CASE("log_spectral_distance") {
    const auto ref = fixture::noise(2048, 16);
    CHECK(log_spectral_distance(ref, ref) == 0.0);
    std::vector<double> louder(ref);
    for (double& v : louder) v *= 10.0;
    CHECK(std::abs(log_spectral_distance(louder, ref) - 20.0) < 1e-9);

    std::vector<double> tone(2048);
    for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = std::sin(2.0 * std::numbers::pi * 300.0 * i / 4000.0);
    const double brute = oracle::log_spectral_distance(ref, tone, 256, 64);
    CHECK(std::abs(log_spectral_distance(ref, tone) - brute) < 1e-9);

    CHECK_THROWS_AS(log_spectral_distance(std::vector<double>(100), std::vector<double>(100)), InvalidArgument);
    CHECK_THROWS_AS(log_spectral_distance(ref, std::span<const double>(tone).subspan(0, 1000)), InvalidArgument);
}

TEST_CASE("evaluate: perfect estimates in either order") {
    const auto scene = make_scene(2.0, 17);
    for (bool swapped : {false, true}) {
        SeparatedSources sep;
        sep.sample_rate = 4000.0;
        sep.signals = {scene.sources[swapped ? 1 : 0].samples, scene.sources[swapped ? 0 : 1].samples};
        const auto report = evaluate(sep, scene.sources, scene.mixture.samples);
        CHECK(report.permutations_evaluated == 2);
        CHECK(report.permutation == (swapped ? std::vector<std::size_t>{1, 0} : std::vector<std::size_t>{0, 1}));
        for (const auto& s : report.sources) {
            CHECK(s.si_sdr == kInf);
            CHECK(s.si_sdr_improvement == kInf);
            CHECK(s.log_spectral_distance == 0.0);
        }
    }
}

TEST_CASE("evaluate: permuting estimates leaves per-reference scores unchanged") {
    const auto scene = make_scene(2.0, 18);
    const auto model = default_model(19);
    const auto assignment = assignment_from_labels(model, scene.frames, scene.labels, 2);
    const auto sep = reconstruct(scene.spec, model, assignment, scene.stats, MaskMode::hard);
    const auto report = evaluate(sep, scene.sources, scene.mixture.samples);
    auto flipped = sep;
    std::swap(flipped.signals[0], flipped.signals[1]);
    const auto other = evaluate(flipped, scene.sources, scene.mixture.samples);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(report.sources[r].si_sdr == other.sources[r].si_sdr);
        CHECK(report.sources[r].log_spectral_distance == other.sources[r].log_spectral_distance);
        CHECK(report.permutation[r] != other.permutation[r]);
    }
    // Improvement is measured against the mixture's own SI-SDR.
    const auto& s0 = report.sources[0];
    CHECK(s0.si_sdr_improvement == doctest::Approx(s0.si_sdr - s0.si_sdr_mixture));

    std::vector<siggen::SourceSignal> one{scene.sources[0]};
    CHECK_THROWS_AS(evaluate(sep, one), InvalidArgument);
}

TEST_CASE("evaluate: three sources try all six pairings") {
    const auto scene = make_scene(1.0, 20);
    std::vector<siggen::SourceSignal> refs = scene.sources;
    refs.push_back(siggen::gen_lung({}, 1.0, 4000.0, 99));
    SeparatedSources sep;
    sep.signals = {refs[2].samples, refs[0].samples, refs[1].samples};
    const auto report = evaluate(sep, refs);
    CHECK(report.permutations_evaluated == 6);
    CHECK(report.permutation == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("oracle labels beat random assignment") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto scene = make_scene(3.0, 500 + 2 * seed);
        const auto model = default_model(seed);
        const auto oracle_sep =
            reconstruct(scene.spec, model, assignment_from_labels(model, scene.frames, scene.labels, 2), scene.stats,
                        MaskMode::hard);
        Rng rng(1000 + seed);
        std::vector<int> random_ids(scene.labels.size());
        for (int& id : random_ids) id = static_cast<int>(rng.index(2));
        const auto random_sep = reconstruct(scene.spec, model, assignment_from_labels(model, scene.frames, random_ids, 2),
                                            scene.stats, MaskMode::hard);
        const double a = evaluate(oracle_sep, scene.sources, scene.mixture.samples).mean_si_sdr();
        const double b = evaluate(random_sep, scene.sources, scene.mixture.samples).mean_si_sdr();
        if (a >= b) ++wins;
    }
    CHECK(wins >= 19);
}
