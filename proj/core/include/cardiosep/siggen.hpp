#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cardiosep::siggen {

inline constexpr double kDefaultSampleRate = 4000.0;

enum class SourceKind { heart, lung, other };

struct SourceSignal {
    std::vector<double> samples;
    double sample_rate = kDefaultSampleRate;
    SourceKind kind = SourceKind::other;
};

struct MixtureSignal {
    std::vector<double> samples;
    double sample_rate = kDefaultSampleRate;
    /// Effective per-source gains, including any global peak rescale.
    std::vector<double> component_gains;
    /// Global factor applied after summation (1 when no rescale was needed).
    double rescale = 1.0;
};

struct HeartParams {
    double rate_bpm = 60.0;
    double s1_freq = 70.0;
    double s2_freq = 120.0;
    double s1_s2_interval = 0.3;
    double decay = 35.0;
    double jitter_pct = 0.0;
    double s2_amplitude = 0.8;  // relative to S1
};

struct LungParams {
    double breaths_per_min = 15.0;
    double band_low = 150.0;
    double band_high = 800.0;
    double inhale_exhale_ratio = 0.5;
    double envelope_floor = 0.15;  // envelope never falls below this fraction
};

inline constexpr double kPeakLevel = 0.9;

/// Periodic S1/S2 train of exponentially damped sinusoids, peak 0.9.
SourceSignal gen_heart(const HeartParams& params, double duration, double sample_rate,
                       std::uint64_t seed);

/// Band-limited Gaussian noise shaped by a breathing envelope, peak 0.9.
SourceSignal gen_lung(const LungParams& params, double duration, double sample_rate,
                      std::uint64_t seed);

/// Breathing envelope in [envelope_floor, 1] sampled at `sample_rate`.
std::vector<double> breathing_envelope(const LungParams& params, std::size_t length,
                                       double sample_rate);

/// Weighted sum; rescaled by one global factor only when the peak exceeds 1.
MixtureSignal mix(std::span<const SourceSignal> sources, std::span<const double> gains);

/// Per STFT frame, the index of the source with the largest frame energy.
/// Ties go to the lowest index.
std::vector<int> dominance_labels(std::span<const SourceSignal> sources, std::size_t frame_len,
                                  std::size_t hop);

/// Multiplies sources by complementary on/off gates so that consecutive
/// segments of `segment_seconds` contain only one source, cycling in order.
std::vector<SourceSignal> alternate_segments(std::span<const SourceSignal> sources,
                                             double segment_seconds);

}  // namespace cardiosep::siggen
