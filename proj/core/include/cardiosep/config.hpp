#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cardiosep/dsp.hpp"
#include "cardiosep/siggen.hpp"
#include "cardiosep/vae.hpp"
#include "cardiosep/wav.hpp"

namespace cardiosep::io {

/// Every tunable of the pipeline. Text form is one `key = value` per line,
/// `#` starts a comment, unknown keys are rejected.
struct RunConfig {
    // analysis
    double sample_rate = 4000.0;
    std::size_t n_fft = 256;
    std::size_t hop = 64;
    double floor = 1e-5;
    // model and training
    std::size_t latent_dim = 8;
    std::vector<std::size_t> hidden{64, 32};
    double beta = 1.0;
    double lr = 1e-3;
    vae::LrSchedule lr_schedule = vae::LrSchedule::cosine;
    std::size_t batch = 64;
    std::size_t epochs = 200;
    std::size_t snapshot_stride = 10;
    // latent analysis
    std::size_t clusters = 2;
    double perplexity = 30.0;
    std::size_t tsne_iters = 1000;
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
    // synthesis
    double duration = 60.0;
    double heart_gain = 1.0;
    double lung_gain = 1.0;
    double heart_bpm = 60.0;
    double breaths_per_min = 15.0;
    double lung_band_low = 150.0;
    double lung_band_high = 800.0;
    double segment_seconds = 0.0;  // > 0: sources alternate instead of overlapping
    WavEncoding wav_encoding = WavEncoding::float32;

    dsp::StftParams stft() const { return {n_fft, hop}; }
    vae::Architecture architecture() const;
    vae::TrainConfig train_config() const;
    siggen::HeartParams heart() const;
    siggen::LungParams lung() const;

    /// Throws InvalidArgument naming the first offending key.
    void validate() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

}  // namespace cardiosep::io
