#include "cardiosep/siggen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cardiosep/dsp.hpp"
#include "cardiosep/error.hpp"
#include "cardiosep/random.hpp"

namespace cardiosep::siggen {

namespace {

std::size_t sample_count(double duration, double sample_rate) {
    if (!(duration > 0.0) || !std::isfinite(duration)) {
        throw InvalidArgument("duration must be > 0, got " + std::to_string(duration));
    }
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
        throw InvalidArgument("sample_rate must be > 0, got " + std::to_string(sample_rate));
    }
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
    if (n == 0) throw InvalidArgument("duration yields zero samples");
    return n;
}

void require_below_nyquist(double freq, double sample_rate, const char* name) {
    if (!(freq > 0.0) || freq >= sample_rate / 2.0) {
        throw InvalidArgument(std::string(name) + " " + std::to_string(freq) +
                              " Hz must be in (0, Nyquist=" + std::to_string(sample_rate / 2.0) +
                              ")");
    }
}

void peak_normalize(std::vector<double>& x) {
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return;
    const double scale = kPeakLevel / peak;
    for (double& v : x) v *= scale;
}

void add_damped_sinusoid(std::vector<double>& out, double onset, double freq, double decay,
                         double amplitude, double sample_rate) {
    // Tail cut once the envelope falls below 1e-12.
    const double tail = std::log(1e12) / decay;
    const auto first = static_cast<std::size_t>(std::ceil(onset * sample_rate));
    const auto last = std::min(out.size(),
                               static_cast<std::size_t>(std::ceil((onset + tail) * sample_rate)));
    for (std::size_t i = first; i < last; ++i) {
        const double tau = static_cast<double>(i) / sample_rate - onset;
        out[i] += amplitude * std::exp(-decay * tau) * std::sin(2.0 * std::numbers::pi * freq * tau);
    }
}

}  // namespace

SourceSignal gen_heart(const HeartParams& params, double duration, double sample_rate,
                       std::uint64_t seed) {
    const std::size_t n = sample_count(duration, sample_rate);
    if (!(params.rate_bpm > 0.0)) throw InvalidArgument("rate_bpm must be > 0");
    const double period = 60.0 / params.rate_bpm;
    if (!(params.s1_s2_interval > 0.0) || params.s1_s2_interval >= period) {
        throw InvalidArgument("s1_s2_interval must be in (0, 60/rate_bpm=" + std::to_string(period) +
                              ")");
    }
    require_below_nyquist(params.s1_freq, sample_rate, "s1_freq");
    require_below_nyquist(params.s2_freq, sample_rate, "s2_freq");
    if (!(params.decay > 0.0)) throw InvalidArgument("decay must be > 0");
    if (!(params.jitter_pct >= 0.0) || params.jitter_pct >= 50.0) {
        throw InvalidArgument("jitter_pct must be in [0, 50)");
    }

    Rng rng(seed);
    std::vector<double> samples(n, 0.0);
    for (std::size_t beat = 0;; ++beat) {
        const double jitter = params.jitter_pct / 100.0 * period * rng.uniform(-1.0, 1.0);
        const double onset = std::max(0.0, static_cast<double>(beat) * period + jitter);
        if (onset >= duration) break;
        add_damped_sinusoid(samples, onset, params.s1_freq, params.decay, 1.0, sample_rate);
        add_damped_sinusoid(samples, onset + params.s1_s2_interval, params.s2_freq, params.decay,
                            params.s2_amplitude, sample_rate);
    }
    peak_normalize(samples);
    return {std::move(samples), sample_rate, SourceKind::heart};
}

std::vector<double> breathing_envelope(const LungParams& params, std::size_t length,
                                       double sample_rate) {
    if (!(params.breaths_per_min > 0.0)) throw InvalidArgument("breaths_per_min must be > 0");
    if (!(params.inhale_exhale_ratio > 0.0)) throw InvalidArgument("inhale_exhale_ratio must be > 0");
    if (!(params.envelope_floor >= 0.0 && params.envelope_floor < 1.0)) {
        throw InvalidArgument("envelope_floor must be in [0, 1)");
    }
    const double period = 60.0 / params.breaths_per_min;
    const double inhale = params.inhale_exhale_ratio / (1.0 + params.inhale_exhale_ratio);
    std::vector<double> env(length);
    for (std::size_t i = 0; i < length; ++i) {
        const double phase = std::fmod(static_cast<double>(i) / sample_rate, period) / period;
        const double shape = phase < inhale
                                 ? std::sin(std::numbers::pi * phase / inhale)
                                 : 0.7 * std::sin(std::numbers::pi * (phase - inhale) / (1.0 - inhale));
        env[i] = params.envelope_floor + (1.0 - params.envelope_floor) * shape;
    }
    return env;
}

SourceSignal gen_lung(const LungParams& params, double duration, double sample_rate,
                      std::uint64_t seed) {
    const std::size_t n = sample_count(duration, sample_rate);
    if (!(params.band_low > 0.0) || !(params.band_low < params.band_high)) {
        throw InvalidArgument("lung band requires 0 < band_low < band_high");
    }
    require_below_nyquist(params.band_high, sample_rate, "band_high");

    std::size_t m = 1;
    while (m < n) m <<= 1;

    // Shape the noise in the frequency domain: Gaussian bins inside the band,
    // zero elsewhere, Hermitian-symmetric so the inverse is real.
    Rng rng(seed);
    std::vector<dsp::Complex> spectrum(m, dsp::Complex{});
    const double bin_hz = sample_rate / static_cast<double>(m);
    for (std::size_t k = 1; k < m / 2; ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        if (f < params.band_low || f > params.band_high) continue;
        const double re = rng.normal();
        const double im = rng.normal();
        spectrum[k] = {re, im};
        spectrum[m - k] = {re, -im};
    }
    dsp::fft(spectrum, true);

    const auto env = breathing_envelope(params, n, sample_rate);
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < n; ++i) samples[i] = spectrum[i].real() * env[i];
    peak_normalize(samples);
    return {std::move(samples), sample_rate, SourceKind::lung};
}

namespace {

void check_aligned(std::span<const SourceSignal> sources) {
    if (sources.empty()) throw InvalidArgument("at least one source is required");
    const auto& first = sources.front();
    for (std::size_t i = 1; i < sources.size(); ++i) {
        if (sources[i].samples.size() != first.samples.size()) {
            throw InvalidArgument("source " + std::to_string(i) + " has " +
                                  std::to_string(sources[i].samples.size()) + " samples, expected " +
                                  std::to_string(first.samples.size()));
        }
        if (sources[i].sample_rate != first.sample_rate) {
            throw InvalidArgument("source " + std::to_string(i) + " sample rate " +
                                  std::to_string(sources[i].sample_rate) + " differs from " +
                                  std::to_string(first.sample_rate));
        }
    }
}

}  // namespace

MixtureSignal mix(std::span<const SourceSignal> sources, std::span<const double> gains) {
    check_aligned(sources);
    if (gains.size() != sources.size()) {
        throw InvalidArgument("got " + std::to_string(gains.size()) + " gains for " +
                              std::to_string(sources.size()) + " sources");
    }
    for (double g : gains) {
        if (!std::isfinite(g)) throw InvalidArgument("mix gains must be finite");
    }

    MixtureSignal out;
    out.sample_rate = sources.front().sample_rate;
    out.samples.assign(sources.front().samples.size(), 0.0);
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const auto& x = sources[s].samples;
        for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] += gains[s] * x[i];
    }
    double peak = 0.0;
    for (double v : out.samples) peak = std::max(peak, std::abs(v));
    if (peak > 1.0) {
        out.rescale = 1.0 / peak;
        for (double& v : out.samples) v *= out.rescale;
    }
    out.component_gains.assign(gains.begin(), gains.end());
    for (double& g : out.component_gains) g *= out.rescale;
    return out;
}

std::vector<int> dominance_labels(std::span<const SourceSignal> sources, std::size_t frame_len,
                                  std::size_t hop) {
    if (sources.empty()) throw InvalidArgument("dominance_labels needs at least one source");
    check_aligned(sources);
    if (hop == 0 || frame_len < hop) {
        throw InvalidArgument("dominance_labels requires frame_len >= hop > 0");
    }
    const std::size_t frames = dsp::frame_count(sources.front().samples.size(), frame_len, hop);
    std::vector<int> labels(frames, 0);
    for (std::size_t t = 0; t < frames; ++t) {
        double best = -1.0;
        for (std::size_t s = 0; s < sources.size(); ++s) {
            const auto& x = sources[s].samples;
            double energy = 0.0;
            for (std::size_t i = t * hop; i < t * hop + frame_len; ++i) energy += x[i] * x[i];
            if (energy > best) {
                best = energy;
                labels[t] = static_cast<int>(s);
            }
        }
    }
    return labels;
}

std::vector<SourceSignal> alternate_segments(std::span<const SourceSignal> sources,
                                             double segment_seconds) {
    check_aligned(sources);
    if (!(segment_seconds > 0.0)) throw InvalidArgument("segment length must be > 0");
    const double rate = sources.front().sample_rate;
    const auto seg = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(segment_seconds * rate)));
    std::vector<SourceSignal> out(sources.begin(), sources.end());
    for (std::size_t s = 0; s < out.size(); ++s) {
        auto& x = out[s].samples;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if ((i / seg) % out.size() != s) x[i] = 0.0;
        }
    }
    return out;
}

}  // namespace cardiosep::siggen
