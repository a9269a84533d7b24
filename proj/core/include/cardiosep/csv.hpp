#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/dsp.hpp"
#include "cardiosep/matrix.hpp"
#include "cardiosep/separate.hpp"
#include "cardiosep/vae.hpp"

namespace cardiosep::io {

/// Floats are printed with 9 significant digits; infinities as inf / -inf.
std::string format_number(double v);

std::string losses_csv(std::span<const vae::LossBreakdown> history);

struct EmbeddingRow {
    std::size_t frame_index = 0;
    double x = 0.0;
    double y = 0.0;
    int cluster = -1;
    int true_label = -1;  // -1 when unknown, written as an empty field
    std::size_t epoch = 0;
};

std::string embedding_csv(std::span<const EmbeddingRow> rows);

/// (frame, bin, magnitude_db) triples, 20*log10 of the magnitude floored at 1e-5.
std::string spectrogram_csv(const dsp::ComplexSpectrogram& spec);

std::string report_csv(const separate::SeparationReport& report);
std::string report_text(const separate::SeparationReport& report);

/// frame_index,epoch,mu_0..mu_{k-1}
std::string latent_snapshot_csv(const Matrix& means, std::size_t epoch);

/// Two-column integer table: frame,<column>.
std::string labels_csv(std::span<const int> labels, const std::string& column);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

/// frame,bin,mask_0..mask_{c-1}
std::string masks_csv(std::span<const Matrix> masks);

/// Latent snapshot back into points (rows ordered by frame_index as written).
Matrix read_latent_snapshot(const std::filesystem::path& path, std::vector<std::size_t>* frame_indices = nullptr);

}  // namespace cardiosep::io
