#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/dsp.hpp"
#include "cardiosep/matrix.hpp"
#include "cardiosep/siggen.hpp"
#include "cardiosep/vae.hpp"

namespace cardiosep::separate {

enum class MaskMode { hard, wiener };

const char* to_string(MaskMode mode) noexcept;
MaskMode mask_mode_from_string(const std::string& name);

struct FrameAssignment {
    std::vector<int> ids;   // per spectrogram frame, in [0, clusters)
    std::size_t clusters = 0;
    Matrix centroids;       // clusters x latent_dim, in posterior-mean space
};

/// Encodes every (normalized) frame, clusters the posterior means with k-means.
FrameAssignment assign_frames(const vae::VaeModel& model, std::span<const dsp::FeatureFrame> frames,
                              std::size_t clusters, std::size_t restarts, std::uint64_t seed);

/// Builds an assignment from known per-frame labels; centroids are the
/// label-wise means of the posterior means.
FrameAssignment assignment_from_labels(const vae::VaeModel& model, std::span<const dsp::FeatureFrame> frames,
                                       std::span<const int> labels, std::size_t clusters);

struct SeparatedSources {
    std::vector<std::vector<double>> signals;
    double sample_rate = 0.0;
    std::string model_id;
    MaskMode mode = MaskMode::wiener;
    /// Per source, frames x freq_bins mask that was applied to the mixture.
    std::vector<Matrix> masks;
};

inline constexpr double kMaskDenominatorFloor = 1e-12;

/// Masks the mixture spectrogram per source and resynthesizes with the
/// mixture phase. Masks across sources sum to one in every bin.
SeparatedSources reconstruct(const dsp::ComplexSpectrogram& mix_spec, const vae::VaeModel& model,
                             const FrameAssignment& assignment, const dsp::FeatureStats& stats,
                             MaskMode mode, std::string model_id = {});

/// Scale-invariant SDR in dB. Returns +inf when the residual vanishes and
/// -inf when the projection onto the reference vanishes.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

inline constexpr double kLsdFloor = 1e-5;

/// RMS over time-frequency bins of 20*log10 magnitude differences.
double log_spectral_distance(std::span<const double> estimate, std::span<const double> reference,
                             dsp::StftParams params = {});

struct SourceScore {
    std::size_t reference = 0;
    std::size_t estimate = 0;
    double si_sdr = 0.0;
    double si_sdr_mixture = 0.0;
    double si_sdr_improvement = 0.0;
    double log_spectral_distance = 0.0;
};

struct SeparationReport {
    std::vector<SourceScore> sources;     // one per reference, in reference order
    std::vector<std::size_t> permutation; // permutation[reference] = estimate index
    std::size_t permutations_evaluated = 0;
    std::optional<double> purity;
    MaskMode mode = MaskMode::wiener;
    std::string model_id;

    double mean_si_sdr() const;
    double mean_si_sdr_improvement() const;
};

/// Scores estimates against references under the estimate-to-reference
/// permutation with the highest mean SI-SDR. References and mixture are
/// trimmed to the estimate length. An empty `mixture` means "sum of the
/// estimates".
SeparationReport evaluate(const SeparatedSources& separated, std::span<const siggen::SourceSignal> references,
                          std::span<const double> mixture = {}, dsp::StftParams lsd_params = {});

}  // namespace cardiosep::separate
