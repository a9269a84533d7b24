#include "cardiosep/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cardiosep/error.hpp"

namespace cardiosep::dsp {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::span<Complex> data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) {
        throw InvalidArgument("fft length " + std::to_string(n) + " is not a power of two");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        // Twiddles computed directly per index: slower than a recurrence but
        // free of accumulated rounding.
        for (std::size_t k = 0; k < half; ++k) {
            const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                 static_cast<double>(len);
            const Complex w(std::cos(angle), std::sin(angle));
            for (std::size_t start = 0; start < n; start += len) {
                const Complex u = data[start + k];
                const Complex v = data[start + k + half] * w;
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& x : data) x *= scale;
    }
}

std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                    static_cast<double>(n));
    }
    return w;
}

namespace {

void check_params(StftParams p) {
    if (!is_power_of_two(p.n_fft)) {
        throw InvalidArgument("n_fft " + std::to_string(p.n_fft) + " is not a power of two");
    }
    if (p.hop == 0 || p.hop > p.n_fft) {
        throw InvalidArgument("hop " + std::to_string(p.hop) + " must be in (0, n_fft=" +
                              std::to_string(p.n_fft) + "]");
    }
}

}  // namespace

std::size_t frame_count(std::size_t length, std::size_t n_fft, std::size_t hop) {
    if (length < n_fft || hop == 0) return 0;
    return 1 + (length - n_fft) / hop;
}

ComplexSpectrogram stft(std::span<const double> signal, double sample_rate, StftParams params) {
    check_params(params);
    if (signal.size() < params.n_fft) {
        throw InvalidArgument("signal of " + std::to_string(signal.size()) +
                              " samples is shorter than n_fft=" + std::to_string(params.n_fft));
    }
    if (!std::all_of(signal.begin(), signal.end(), [](double v) { return std::isfinite(v); })) {
        throw InvalidArgument("signal contains non-finite samples");
    }

    ComplexSpectrogram spec;
    spec.n_fft = params.n_fft;
    spec.hop = params.hop;
    spec.sample_rate = sample_rate;
    spec.frames = frame_count(signal.size(), params.n_fft, params.hop);
    spec.bins.resize(spec.frames * spec.freq_bins());

    const auto window = hann(params.n_fft);
    std::vector<Complex> buffer(params.n_fft);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const std::size_t offset = t * params.hop;
        for (std::size_t i = 0; i < params.n_fft; ++i) buffer[i] = signal[offset + i] * window[i];
        fft(buffer);
        std::copy_n(buffer.begin(), spec.freq_bins(), spec.frame(t).begin());
    }
    return spec;
}

bool satisfies_cola(std::size_t n_fft, std::size_t hop) {
    if (hop == 0 || hop > n_fft) return false;
    const auto w = hann(n_fft);
    double reference = -1.0;
    for (std::size_t n = 0; n < hop; ++n) {
        double sum = 0.0;
        // Sum over every frame overlapping an interior sample at phase n.
        for (std::size_t i = n; i < n_fft; i += hop) sum += w[i] * w[i];
        if (reference < 0.0) {
            reference = sum;
        } else if (std::abs(sum - reference) > 1e-9 * reference) {
            return false;
        }
    }
    return reference > 0.0;
}

std::vector<double> istft(const ComplexSpectrogram& spec) {
    check_params({spec.n_fft, spec.hop});
    if (!satisfies_cola(spec.n_fft, spec.hop)) {
        throw InvalidArgument("hop " + std::to_string(spec.hop) +
                              " does not satisfy constant overlap-add for a Hann window of " +
                              std::to_string(spec.n_fft));
    }
    if (spec.bins.size() != spec.frames * spec.freq_bins()) {
        throw InvalidArgument("spectrogram bin count does not match frames x freq_bins");
    }
    const std::size_t n = spec.n_fft;
    const std::size_t length = spec.signal_length();
    std::vector<double> out(length, 0.0);
    std::vector<double> weight(length, 0.0);
    const auto window = hann(n);
    std::vector<Complex> buffer(n);

    for (std::size_t t = 0; t < spec.frames; ++t) {
        const auto column = spec.frame(t);
        for (std::size_t k = 0; k <= n / 2; ++k) buffer[k] = column[k];
        for (std::size_t k = 1; k < n / 2; ++k) buffer[n - k] = std::conj(column[k]);
        fft(buffer, true);
        const std::size_t offset = t * spec.hop;
        for (std::size_t i = 0; i < n; ++i) {
            out[offset + i] += buffer[i].real() * window[i];
            weight[offset + i] += window[i] * window[i];
        }
    }
    for (std::size_t i = 0; i < length; ++i) {
        out[i] = weight[i] > 1e-10 ? out[i] / weight[i] : 0.0;
    }
    return out;
}

std::vector<FeatureFrame> log_mag(const ComplexSpectrogram& spec, double floor) {
    if (!(floor > 0.0)) throw InvalidArgument("log-magnitude floor must be > 0");
    const double log_floor = std::log(floor);
    std::vector<FeatureFrame> frames(spec.frames);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        frames[t].frame_index = t;
        frames[t].values.resize(spec.freq_bins());
        const auto column = spec.frame(t);
        for (std::size_t k = 0; k < column.size(); ++k) {
            const double mag = std::abs(column[k]);
            frames[t].values[k] = mag > floor ? std::log(mag) : log_floor;
        }
    }
    return frames;
}

FeatureStats fit_stats(std::span<const FeatureFrame> frames) {
    if (frames.size() < 2) {
        throw InvalidArgument("fit_stats needs at least 2 frames, got " + std::to_string(frames.size()));
    }
    const std::size_t n = frames.front().values.size();
    FeatureStats stats{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (const auto& f : frames) {
        if (f.values.size() != n) throw InvalidArgument("feature frames have unequal lengths");
        for (std::size_t i = 0; i < n; ++i) stats.mean[i] += f.values[i];
    }
    const double count = static_cast<double>(frames.size());
    for (auto& m : stats.mean) m /= count;
    for (const auto& f : frames) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = f.values[i] - stats.mean[i];
            stats.std[i] += d * d;
        }
    }
    for (auto& s : stats.std) s = std::max(std::sqrt(s / count), kStdFloor);
    return stats;
}

namespace {

void check_stats(const FeatureFrame& f, const FeatureStats& stats) {
    if (f.values.size() != stats.mean.size() || stats.mean.size() != stats.std.size()) {
        throw InvalidArgument("feature length " + std::to_string(f.values.size()) +
                              " does not match stats length " + std::to_string(stats.mean.size()));
    }
}

}  // namespace

std::vector<FeatureFrame> normalize(std::span<const FeatureFrame> frames, const FeatureStats& stats) {
    std::vector<FeatureFrame> out(frames.begin(), frames.end());
    for (auto& f : out) {
        check_stats(f, stats);
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            f.values[i] = (f.values[i] - stats.mean[i]) / stats.std[i];
        }
    }
    return out;
}

void denormalize_values(std::span<double> values, const FeatureStats& stats) {
    if (values.size() != stats.mean.size()) {
        throw InvalidArgument("feature length " + std::to_string(values.size()) +
                              " does not match stats length " + std::to_string(stats.mean.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = values[i] * stats.std[i] + stats.mean[i];
}

std::vector<FeatureFrame> denormalize(std::span<const FeatureFrame> frames, const FeatureStats& stats) {
    std::vector<FeatureFrame> out(frames.begin(), frames.end());
    for (auto& f : out) {
        check_stats(f, stats);
        denormalize_values(f.values, stats);
    }
    return out;
}

}  // namespace cardiosep::dsp
