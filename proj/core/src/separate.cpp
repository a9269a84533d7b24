#include "cardiosep/separate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cardiosep/error.hpp"
#include "cardiosep/latent.hpp"

namespace cardiosep::separate {

const char* to_string(MaskMode mode) noexcept { return mode == MaskMode::hard ? "hard" : "wiener"; }

MaskMode mask_mode_from_string(const std::string& name) {
    if (name == "hard") return MaskMode::hard;
    if (name == "wiener") return MaskMode::wiener;
    throw InvalidArgument("unknown mask mode '" + name + "' (expected hard or wiener)");
}

namespace {

void check_frames(const vae::VaeModel& model, std::span<const dsp::FeatureFrame> frames) {
    if (frames.empty()) throw InvalidArgument("no frames to assign");
    for (const auto& f : frames) {
        if (f.values.size() != model.arch.input_dim) {
            throw InvalidArgument("feature length " + std::to_string(f.values.size()) +
                                  " does not match model input_dim " + std::to_string(model.arch.input_dim));
        }
    }
}

}  // namespace

FrameAssignment assign_frames(const vae::VaeModel& model, std::span<const dsp::FeatureFrame> frames,
                              std::size_t clusters, std::size_t restarts, std::uint64_t seed) {
    check_frames(model, frames);
    const Matrix mu = vae::posterior_means(model, frames);
    auto clustering = latent::kmeans(mu, clusters, restarts, seed);
    return {std::move(clustering.assignments), clusters, std::move(clustering.centroids)};
}

FrameAssignment assignment_from_labels(const vae::VaeModel& model, std::span<const dsp::FeatureFrame> frames,
                                       std::span<const int> labels, std::size_t clusters) {
    check_frames(model, frames);
    if (labels.size() != frames.size()) throw InvalidArgument("labels not aligned with frames");
    const Matrix mu = vae::posterior_means(model, frames);
    FrameAssignment out{std::vector<int>(labels.begin(), labels.end()), clusters,
                        Matrix(clusters, model.arch.latent_dim)};
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= clusters) {
            throw InvalidArgument("label " + std::to_string(labels[i]) + " outside [0, clusters)");
        }
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t d = 0; d < mu.cols(); ++d) out.centroids(c, d) += mu(i, d);
    }
    for (std::size_t c = 0; c < clusters; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t d = 0; d < mu.cols(); ++d) out.centroids(c, d) /= static_cast<double>(counts[c]);
    }
    return out;
}

SeparatedSources reconstruct(const dsp::ComplexSpectrogram& mix_spec, const vae::VaeModel& model,
                             const FrameAssignment& assignment, const dsp::FeatureStats& stats,
                             MaskMode mode, std::string model_id) {
    const std::size_t frames = mix_spec.frames;
    const std::size_t bins = mix_spec.freq_bins();
    const std::size_t sources = assignment.clusters;
    if (assignment.ids.size() != frames) {
        throw InvalidArgument("assignment has " + std::to_string(assignment.ids.size()) +
                              " frames, spectrogram has " + std::to_string(frames));
    }
    if (sources == 0) throw InvalidArgument("assignment has zero clusters");
    for (int id : assignment.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= sources) throw InvalidArgument("frame id outside [0, clusters)");
    }

    SeparatedSources out;
    out.sample_rate = mix_spec.sample_rate;
    out.model_id = std::move(model_id);
    out.mode = mode;
    out.masks.assign(sources, Matrix(frames, bins));

    if (mode == MaskMode::hard) {
        for (std::size_t t = 0; t < frames; ++t) {
            auto row = out.masks[static_cast<std::size_t>(assignment.ids[t])].row(t);
            std::fill(row.begin(), row.end(), 1.0);
        }
    } else {
        if (bins != model.arch.input_dim) {
            throw InvalidArgument("spectrogram has " + std::to_string(bins) + " bins, model input_dim is " +
                                  std::to_string(model.arch.input_dim));
        }
        if (assignment.centroids.rows() != sources || assignment.centroids.cols() != model.arch.latent_dim) {
            throw InvalidArgument("assignment centroids do not match cluster count and latent_dim");
        }
        // Decoded centroid magnitudes are frame-independent, so one mask row
        // per source serves every frame.
        Matrix power(sources, bins);
        for (std::size_t c = 0; c < sources; ++c) {
            auto decoded = vae::decode(model, assignment.centroids.row(c));
            dsp::denormalize_values(decoded, stats);
            for (std::size_t k = 0; k < bins; ++k) {
                const double mag = std::exp(decoded[k]);
                power(c, k) = mag * mag;
            }
        }
        Matrix mask_row(sources, bins);
        for (std::size_t k = 0; k < bins; ++k) {
            double denom = 0.0;
            for (std::size_t c = 0; c < sources; ++c) denom += power(c, k);
            for (std::size_t c = 0; c < sources; ++c) {
                mask_row(c, k) = denom < kMaskDenominatorFloor || !std::isfinite(denom)
                                     ? 1.0 / static_cast<double>(sources)
                                     : power(c, k) / denom;
            }
        }
        for (std::size_t c = 0; c < sources; ++c) {
            for (std::size_t t = 0; t < frames; ++t) {
                std::copy(mask_row.row(c).begin(), mask_row.row(c).end(), out.masks[c].row(t).begin());
            }
        }
    }

    for (std::size_t c = 0; c < sources; ++c) {
        dsp::ComplexSpectrogram masked = mix_spec;
        for (std::size_t t = 0; t < frames; ++t) {
            auto column = masked.frame(t);
            const auto m = out.masks[c].row(t);
            for (std::size_t k = 0; k < bins; ++k) column[k] *= m[k];
        }
        out.signals.push_back(dsp::istft(masked));
    }
    return out;
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
    if (estimate.size() != reference.size()) {
        throw InvalidArgument("si_sdr: estimate has " + std::to_string(estimate.size()) +
                              " samples, reference has " + std::to_string(reference.size()));
    }
    double dot = 0.0;
    double ref_energy = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        dot += estimate[i] * reference[i];
        ref_energy += reference[i] * reference[i];
    }
    if (ref_energy == 0.0) throw InvalidArgument("si_sdr: reference is all zeros");
    const double alpha = dot / ref_energy;
    double target = 0.0;
    double noise = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double s = alpha * reference[i];
        const double e = estimate[i] - s;
        target += s * s;
        noise += e * e;
    }
    // A silent estimate has no target and no residual; it must rank last.
    if (target < 1e-30) return -std::numeric_limits<double>::infinity();
    if (noise < 1e-30) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(target / noise);
}

double log_spectral_distance(std::span<const double> estimate, std::span<const double> reference,
                             dsp::StftParams params) {
    if (estimate.size() != reference.size()) throw InvalidArgument("log_spectral_distance: length mismatch");
    if (estimate.size() < params.n_fft) {
        throw InvalidArgument("log_spectral_distance: signals shorter than n_fft=" + std::to_string(params.n_fft));
    }
    const auto est = dsp::stft(estimate, 1.0, params);
    const auto ref = dsp::stft(reference, 1.0, params);
    double sum = 0.0;
    for (std::size_t i = 0; i < est.bins.size(); ++i) {
        const double a = std::log10(std::max(std::abs(est.bins[i]), kLsdFloor));
        const double b = std::log10(std::max(std::abs(ref.bins[i]), kLsdFloor));
        const double d = 20.0 * (a - b);
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(est.bins.size()));
}

double SeparationReport::mean_si_sdr() const {
    double s = 0.0;
    for (const auto& src : sources) s += src.si_sdr;
    return sources.empty() ? 0.0 : s / static_cast<double>(sources.size());
}

double SeparationReport::mean_si_sdr_improvement() const {
    double s = 0.0;
    for (const auto& src : sources) s += src.si_sdr_improvement;
    return sources.empty() ? 0.0 : s / static_cast<double>(sources.size());
}

SeparationReport evaluate(const SeparatedSources& separated, std::span<const siggen::SourceSignal> references,
                          std::span<const double> mixture, dsp::StftParams lsd_params) {
    const std::size_t count = separated.signals.size();
    if (count != references.size()) {
        throw InvalidArgument("evaluate: " + std::to_string(count) + " estimates vs " +
                              std::to_string(references.size()) + " references");
    }
    if (count == 0) throw InvalidArgument("evaluate: nothing to score");
    const std::size_t length = separated.signals.front().size();
    for (const auto& s : separated.signals) {
        if (s.size() != length) throw InvalidArgument("evaluate: estimates have unequal lengths");
    }
    for (const auto& r : references) {
        if (r.samples.size() < length) {
            throw InvalidArgument("evaluate: reference shorter than the estimates (" +
                                  std::to_string(r.samples.size()) + " < " + std::to_string(length) + ")");
        }
    }
    std::vector<double> mix(length, 0.0);
    if (mixture.empty()) {
        for (const auto& s : separated.signals) {
            for (std::size_t i = 0; i < length; ++i) mix[i] += s[i];
        }
    } else {
        if (mixture.size() < length) throw InvalidArgument("evaluate: mixture shorter than the estimates");
        std::copy_n(mixture.begin(), length, mix.begin());
    }

    // score[e][r]: SI-SDR of estimate e against reference r.
    std::vector<std::vector<double>> score(count, std::vector<double>(count));
    for (std::size_t e = 0; e < count; ++e) {
        for (std::size_t r = 0; r < count; ++r) {
            score[e][r] = si_sdr(separated.signals[e], std::span(references[r].samples).first(length));
        }
    }
    auto finite_rank = [](double v) { return std::clamp(v, -1e300, 1e300); };

    SeparationReport report;
    report.mode = separated.mode;
    report.model_id = separated.model_id;
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = -std::numeric_limits<double>::infinity();
    do {
        ++report.permutations_evaluated;
        double total = 0.0;
        for (std::size_t r = 0; r < count; ++r) total += finite_rank(score[perm[r]][r]) / static_cast<double>(count);
        if (report.permutation.empty() || total > best) {
            best = total;
            report.permutation = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    for (std::size_t r = 0; r < count; ++r) {
        const auto ref = std::span(references[r].samples).first(length);
        SourceScore s;
        s.reference = r;
        s.estimate = report.permutation[r];
        s.si_sdr = score[s.estimate][r];
        s.si_sdr_mixture = si_sdr(mix, ref);
        s.si_sdr_improvement = s.si_sdr - s.si_sdr_mixture;
        s.log_spectral_distance = log_spectral_distance(separated.signals[s.estimate], ref, lsd_params);
        report.sources.push_back(s);
    }
    return report;
}

}  // namespace cardiosep::separate
