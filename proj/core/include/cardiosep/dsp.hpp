#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace cardiosep::dsp {

using Complex = std::complex<double>;

/// In-place iterative radix-2 FFT. Length must be a power of two. The inverse
/// transform includes the 1/N scale.
void fft(std::span<Complex> data, bool inverse = false);

bool is_power_of_two(std::size_t n) noexcept;

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

struct StftParams {
    std::size_t n_fft = 256;
    std::size_t hop = 64;
};

/// One-sided STFT. Column-major by frame: bins(frame)[bin].
struct ComplexSpectrogram {
    std::size_t n_fft = 0;
    std::size_t hop = 0;
    double sample_rate = 0.0;
    std::size_t frames = 0;
    std::vector<Complex> bins;  // frames * freq_bins(), frame-major

    std::size_t freq_bins() const noexcept { return n_fft / 2 + 1; }
    std::span<Complex> frame(std::size_t t) noexcept {
        return {bins.data() + t * freq_bins(), freq_bins()};
    }
    std::span<const Complex> frame(std::size_t t) const noexcept {
        return {bins.data() + t * freq_bins(), freq_bins()};
    }
    /// Length of the signal istft() produces.
    std::size_t signal_length() const noexcept { return frames == 0 ? 0 : (frames - 1) * hop + n_fft; }
};

/// Number of full frames a signal of `length` samples yields.
std::size_t frame_count(std::size_t length, std::size_t n_fft, std::size_t hop);

/// Hann-windowed STFT; frame t covers samples [t*hop, t*hop + n_fft).
ComplexSpectrogram stft(std::span<const double> signal, double sample_rate, StftParams params = {});

/// True when sum_m w^2[n + m*hop] is constant, i.e. hop gives a flat
/// weighted-overlap-add normalization for the Hann window.
bool satisfies_cola(std::size_t n_fft, std::size_t hop);

/// Weighted overlap-add inverse of stft(). Output length is
/// (frames - 1) * hop + n_fft.
std::vector<double> istft(const ComplexSpectrogram& spec);

struct FeatureFrame {
    std::vector<double> values;
    std::size_t frame_index = 0;
};

/// Per column ln(max(|bin|, floor)).
std::vector<FeatureFrame> log_mag(const ComplexSpectrogram& spec, double floor = 1e-5);

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-6;

/// Per-bin mean and population standard deviation, std floored at kStdFloor.
FeatureStats fit_stats(std::span<const FeatureFrame> frames);

std::vector<FeatureFrame> normalize(std::span<const FeatureFrame> frames, const FeatureStats& stats);
std::vector<FeatureFrame> denormalize(std::span<const FeatureFrame> frames, const FeatureStats& stats);

/// Denormalizes a single feature vector in place.
void denormalize_values(std::span<double> values, const FeatureStats& stats);

}  // namespace cardiosep::dsp
