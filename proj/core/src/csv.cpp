#include "cardiosep/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cardiosep/error.hpp"

namespace cardiosep::io {

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string losses_csv(std::span<const vae::LossBreakdown> history) {
    std::string out = "epoch,recon,kl,total\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        out += std::to_string(e + 1) + "," + format_number(history[e].recon) + "," +
               format_number(history[e].kl) + "," + format_number(history[e].total) + "\n";
    }
    return out;
}

std::string embedding_csv(std::span<const EmbeddingRow> rows) {
    std::string out = "frame_index,x,y,cluster,true_label,epoch\n";
    for (const auto& r : rows) {
        out += std::to_string(r.frame_index) + "," + format_number(r.x) + "," + format_number(r.y) + "," +
               std::to_string(r.cluster) + "," + (r.true_label >= 0 ? std::to_string(r.true_label) : "") + "," +
               std::to_string(r.epoch) + "\n";
    }
    return out;
}

std::string spectrogram_csv(const dsp::ComplexSpectrogram& spec) {
    std::string out = "frame,bin,magnitude_db\n";
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const auto col = spec.frame(t);
        for (std::size_t k = 0; k < col.size(); ++k) {
            const double db = 20.0 * std::log10(std::max(std::abs(col[k]), 1e-5));
            out += std::to_string(t) + "," + std::to_string(k) + "," + format_number(db) + "\n";
        }
    }
    return out;
}

std::string report_csv(const separate::SeparationReport& report) {
    std::string out =
        "reference,estimate,si_sdr_db,si_sdr_mixture_db,si_sdr_improvement_db,log_spectral_distance_db,"
        "mode,permutations_evaluated,purity\n";
    for (const auto& s : report.sources) {
        out += std::to_string(s.reference) + "," + std::to_string(s.estimate) + "," + format_number(s.si_sdr) +
               "," + format_number(s.si_sdr_mixture) + "," + format_number(s.si_sdr_improvement) + "," +
               format_number(s.log_spectral_distance) + "," + separate::to_string(report.mode) + "," +
               std::to_string(report.permutations_evaluated) + "," +
               (report.purity ? format_number(*report.purity) : "") + "\n";
    }
    return out;
}

std::string report_text(const separate::SeparationReport& report) {
    std::ostringstream out;
    out << "separation report (mode " << separate::to_string(report.mode);
    if (!report.model_id.empty()) out << ", model " << report.model_id;
    out << ")\n";
    out << "  permutations evaluated: " << report.permutations_evaluated << "\n";
    for (const auto& s : report.sources) {
        out << "  reference " << s.reference << " <- estimate " << s.estimate << ": SI-SDR "
            << format_number(s.si_sdr) << " dB (mixture " << format_number(s.si_sdr_mixture)
            << " dB, improvement " << format_number(s.si_sdr_improvement) << " dB), LSD "
            << format_number(s.log_spectral_distance) << " dB\n";
    }
    out << "  mean SI-SDR improvement: " << format_number(report.mean_si_sdr_improvement()) << " dB\n";
    if (report.purity) out << "  cluster purity: " << format_number(*report.purity) << "\n";
    return out.str();
}

std::string latent_snapshot_csv(const Matrix& means, std::size_t epoch) {
    std::string out = "frame_index,epoch";
    for (std::size_t d = 0; d < means.cols(); ++d) out += ",mu_" + std::to_string(d);
    out += "\n";
    for (std::size_t r = 0; r < means.rows(); ++r) {
        out += std::to_string(r) + "," + std::to_string(epoch);
        for (double v : means.row(r)) out += "," + format_number(v);
        out += "\n";
    }
    return out;
}

std::string labels_csv(std::span<const int> labels, const std::string& column) {
    std::string out = "frame," + column + "\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
    return out;
}

namespace {

std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, std::string* header) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    if (!std::getline(f, line)) throw IoError(path.string() + ": empty CSV file");
    if (header != nullptr) *header = line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
    std::vector<int> labels;
    for (const auto& row : read_table(path, nullptr)) {
        if (row.size() < 2) throw IoError(path.string() + ": expected two columns per row");
        try {
            labels.push_back(std::stoi(row[1]));
        } catch (const std::exception&) {
            throw IoError(path.string() + ": bad label '" + row[1] + "'");
        }
    }
    return labels;
}

std::string masks_csv(std::span<const Matrix> masks) {
    std::string out = "frame,bin";
    for (std::size_t c = 0; c < masks.size(); ++c) out += ",mask_" + std::to_string(c);
    out += "\n";
    if (masks.empty()) return out;
    for (std::size_t t = 0; t < masks.front().rows(); ++t) {
        for (std::size_t k = 0; k < masks.front().cols(); ++k) {
            out += std::to_string(t) + "," + std::to_string(k);
            for (const auto& m : masks) out += "," + format_number(m(t, k));
            out += "\n";
        }
    }
    return out;
}

Matrix read_latent_snapshot(const std::filesystem::path& path, std::vector<std::size_t>* frame_indices) {
    std::string header;
    const auto rows = read_table(path, &header);
    if (header.rfind("frame_index,epoch,mu_", 0) != 0) {
        throw IoError(path.string() + ": not a latent snapshot CSV");
    }
    if (rows.empty()) return {};
    const std::size_t k = rows.front().size() - 2;
    Matrix points(rows.size(), k);
    if (frame_indices != nullptr) frame_indices->clear();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != k + 2) throw IoError(path.string() + ": ragged row " + std::to_string(r + 2));
        try {
            if (frame_indices != nullptr) frame_indices->push_back(std::stoul(rows[r][0]));
            for (std::size_t d = 0; d < k; ++d) points(r, d) = std::stod(rows[r][d + 2]);
        } catch (const std::exception&) {
            throw IoError(path.string() + ": bad number on line " + std::to_string(r + 2));
        }
    }
    return points;
}

}  // namespace cardiosep::io
