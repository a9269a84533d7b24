#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <regex>

#include "cardiosep/atomic_file.hpp"
#include "cardiosep/checkpoint.hpp"
#include "cardiosep/config.hpp"
#include "cardiosep/csv.hpp"
#include "cardiosep/dsp.hpp"
#include "cardiosep/error.hpp"
#include "cardiosep/latent.hpp"
#include "cardiosep/separate.hpp"
#include "cardiosep/siggen.hpp"
#include "cardiosep/vae.hpp"
#include "cardiosep/wav.hpp"

namespace cardiosep::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out_dir;
    std::string mixture;
    std::string out;
    std::string ckpt;
    std::string labels;
    std::string latent;
    std::size_t every = 1;
    std::string mode = "wiener";
    std::string est_dir;
    std::string ref_dir;
};

void log_config(std::ostream& err, const io::RunConfig& cfg) {
    std::stringstream ss(io::to_text(cfg));
    for (std::string line; std::getline(ss, line);) err << "cardiosep: config: " << line << "\n";
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string wav_bytes(std::span<const double> samples, double rate, io::WavEncoding enc) {
    const auto bytes = io::encode_wav(samples, rate, enc);
    return {bytes.begin(), bytes.end()};
}

void require_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

io::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? io::RunConfig{} : io::load_config(path);
}

siggen::SourceSignal read_mixture(const std::string& path, const io::RunConfig& cfg) {
    auto mixture = io::read_wav(path);
    if (mixture.sample_rate != cfg.sample_rate) {
        throw InvalidArgument("sample_rate mismatch: mixture=" + io::format_number(mixture.sample_rate) +
                              " config=" + io::format_number(cfg.sample_rate));
    }
    if (mixture.samples.size() < cfg.n_fft) {
        throw InvalidArgument("mixture has " + std::to_string(mixture.samples.size()) +
                              " samples, fewer than n_fft=" + std::to_string(cfg.n_fft));
    }
    return mixture;
}

/// A --config given alongside a checkpoint may change analysis-only settings
/// but not anything the model was trained against.
io::RunConfig resolve_against_checkpoint(const io::Checkpoint& ckpt, const std::string& config_path) {
    if (config_path.empty()) return ckpt.config;
    auto cfg = io::load_config(config_path);
    auto same = [](const char* key, auto a, auto b) {
        if (a != b) {
            throw InvalidArgument(std::string(key) + " mismatch: checkpoint=" + io::format_number(static_cast<double>(a)) +
                                  " analysis=" + io::format_number(static_cast<double>(b)));
        }
    };
    same("n_fft", ckpt.config.n_fft, cfg.n_fft);
    same("hop", ckpt.config.hop, cfg.hop);
    same("sample_rate", ckpt.config.sample_rate, cfg.sample_rate);
    same("floor", ckpt.config.floor, cfg.floor);
    return cfg;
}

std::vector<dsp::FeatureFrame> features(const dsp::ComplexSpectrogram& spec, const io::RunConfig& cfg,
                                        const dsp::FeatureStats& stats) {
    return dsp::normalize(dsp::log_mag(spec, cfg.floor), stats);
}

int cmd_synth(const Options& o, std::ostream& out, std::ostream& err) {
    const auto cfg = config_or_default(o.config);
    log_config(err, cfg);
    siggen::SourceSignal heart = siggen::gen_heart(cfg.heart(), cfg.duration, cfg.sample_rate, cfg.seed);
    siggen::SourceSignal lung = siggen::gen_lung(cfg.lung(), cfg.duration, cfg.sample_rate, cfg.seed + 1);
    std::vector<siggen::SourceSignal> sources{heart, lung};
    if (cfg.segment_seconds > 0.0) sources = siggen::alternate_segments(sources, cfg.segment_seconds);
    const std::vector<double> gains{cfg.heart_gain, cfg.lung_gain};
    const auto mixture = siggen::mix(sources, gains);

    // References are written as they appear inside the mixture, so they sum to it.
    for (std::size_t s = 0; s < sources.size(); ++s) {
        for (double& v : sources[s].samples) v *= mixture.component_gains[s];
    }
    const auto labels = siggen::dominance_labels(sources, cfg.n_fft, cfg.hop);

    require_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    io::StagedOutputs staged;
    staged.add(dir / "heart.wav", wav_bytes(sources[0].samples, cfg.sample_rate, cfg.wav_encoding));
    staged.add(dir / "lung.wav", wav_bytes(sources[1].samples, cfg.sample_rate, cfg.wav_encoding));
    staged.add(dir / "mixture.wav", wav_bytes(mixture.samples, cfg.sample_rate, cfg.wav_encoding));
    staged.add(dir / "labels.csv", io::labels_csv(labels, "label"));
    staged.commit();
    out << "wrote heart.wav, lung.wav, mixture.wav, labels.csv to " << dir.string() << " ("
        << mixture.samples.size() << " samples, " << labels.size() << " frames)\n";
    return kSuccess;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const auto cfg = config_or_default(o.config);
    log_config(err, cfg);
    const auto mixture = read_mixture(o.mixture, cfg);
    const auto spec = dsp::stft(mixture.samples, mixture.sample_rate, cfg.stft());
    const auto raw = dsp::log_mag(spec, cfg.floor);
    const auto stats = dsp::fit_stats(raw);
    const auto frames = dsp::normalize(raw, stats);

    Rng rng(cfg.seed);
    auto model = vae::VaeModel::create(cfg.architecture(), cfg.beta, rng);
    const auto result = vae::train(model, frames, cfg.train_config(), rng,
                                   [&](std::size_t epoch, const vae::LossBreakdown& l) {
                                       if (epoch == 1 || epoch % cfg.snapshot_stride == 0) {
                                           err << "cardiosep: epoch " << epoch << " recon=" << io::format_number(l.recon)
                                               << " kl=" << io::format_number(l.kl)
                                               << " total=" << io::format_number(l.total) << "\n";
                                       }
                                   });

    const fs::path ckpt_path(o.out);
    const fs::path dir = ckpt_path.has_parent_path() ? ckpt_path.parent_path() : fs::path(".");
    require_dir(dir);
    io::StagedOutputs staged;
    staged.add(ckpt_path, io::encode_checkpoint({model, stats, cfg, cfg.epochs}));
    staged.add(dir / "losses.csv", io::losses_csv(result.history));
    for (const auto& snap : result.snapshots) {
        char name[64];
        std::snprintf(name, sizeof name, "latent_epoch_%04zu.csv", snap.epoch);
        staged.add(dir / name, io::latent_snapshot_csv(snap.means, snap.epoch));
    }
    staged.commit();
    out << "trained " << cfg.epochs << " epochs on " << frames.size() << " frames; final total loss "
        << io::format_number(result.history.back().total) << "; wrote " << ckpt_path.string() << "\n";
    return kSuccess;
}

int cmd_project(const Options& o, std::ostream& out, std::ostream& err) {
    const auto ckpt = io::load_checkpoint(o.ckpt);
    const auto cfg = resolve_against_checkpoint(ckpt, o.config);
    log_config(err, cfg);
    if (o.every == 0) throw InvalidArgument("--every must be >= 1");

    Matrix points;
    std::vector<std::size_t> frame_index;
    std::size_t epoch = ckpt.epoch;
    if (!o.latent.empty()) {
        points = io::read_latent_snapshot(o.latent, &frame_index);
        if (points.cols() != ckpt.model.arch.latent_dim) {
            throw InvalidArgument("latent snapshot has " + std::to_string(points.cols()) +
                                  " dimensions, checkpoint latent_dim=" + std::to_string(ckpt.model.arch.latent_dim));
        }
        std::smatch m;
        const std::string name = fs::path(o.latent).filename().string();
        if (std::regex_search(name, m, std::regex("epoch_(\\d+)"))) epoch = std::stoul(m[1]);
    } else {
        const auto mixture = read_mixture(o.mixture, cfg);
        const auto spec = dsp::stft(mixture.samples, mixture.sample_rate, cfg.stft());
        points = vae::posterior_means(ckpt.model, features(spec, cfg, ckpt.stats));
        frame_index.resize(points.rows());
        for (std::size_t i = 0; i < frame_index.size(); ++i) frame_index[i] = i;
    }

    std::vector<int> labels;
    if (!o.labels.empty()) {
        labels = io::read_labels_csv(o.labels);
        if (labels.size() != points.rows()) {
            throw InvalidArgument("labels has " + std::to_string(labels.size()) + " frames, latent cloud has " +
                                  std::to_string(points.rows()));
        }
    }

    const auto clustering = latent::kmeans(points, cfg.clusters, cfg.restarts, cfg.seed);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < points.rows(); i += o.every) keep.push_back(i);
    latent::LatentCloud cloud{Matrix(keep.size(), points.cols()), epoch, {}};
    for (std::size_t r = 0; r < keep.size(); ++r) {
        std::copy(points.row(keep[r]).begin(), points.row(keep[r]).end(), cloud.points.row(r).begin());
        cloud.frame_indices.push_back(frame_index[keep[r]]);
    }
    latent::TsneConfig tcfg;
    tcfg.perplexity = cfg.perplexity;
    tcfg.iters = cfg.tsne_iters;
    tcfg.seed = cfg.seed;
    const auto embedding = latent::tsne(cloud, tcfg);

    std::vector<io::EmbeddingRow> rows;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        rows.push_back({cloud.frame_indices[r], embedding.coords(r, 0), embedding.coords(r, 1),
                        clustering.assignments[keep[r]], labels.empty() ? -1 : labels[keep[r]], epoch});
    }
    io::write_file_atomic(o.out, io::embedding_csv(rows));
    out << "embedded " << rows.size() << " latent points (epoch " << epoch << ") into " << o.out;
    if (!labels.empty()) out << "; cluster purity " << io::format_number(latent::purity(clustering.assignments, labels));
    out << "\n";
    return kSuccess;
}

int cmd_separate(const Options& o, std::ostream& out, std::ostream& err) {
    const auto ckpt_bytes = slurp(o.ckpt);
    const auto ckpt = io::decode_checkpoint(ckpt_bytes);
    const auto cfg = resolve_against_checkpoint(ckpt, o.config);
    log_config(err, cfg);
    const auto mode = separate::mask_mode_from_string(o.mode);
    const auto mixture = read_mixture(o.mixture, cfg);
    const auto spec = dsp::stft(mixture.samples, mixture.sample_rate, cfg.stft());
    const auto frames = features(spec, cfg, ckpt.stats);
    const auto assignment = separate::assign_frames(ckpt.model, frames, cfg.clusters, cfg.restarts, cfg.seed);
    const auto id = io::content_id(ckpt_bytes);
    auto sources = separate::reconstruct(spec, ckpt.model, assignment, ckpt.stats, mode, id);

    // WAV samples must stay in [-1, 1]; one shared factor keeps the sources
    // summing to (a scaled) mixture.
    double peak = 0.0;
    for (const auto& s : sources.signals) {
        for (double v : s) peak = std::max(peak, std::abs(v));
    }
    if (peak > 1.0) {
        err << "cardiosep: rescaling separated sources by " << io::format_number(1.0 / peak) << "\n";
        for (auto& s : sources.signals) {
            for (double& v : s) v /= peak;
        }
    }

    require_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    io::StagedOutputs staged;
    for (std::size_t c = 0; c < sources.signals.size(); ++c) {
        staged.add(dir / ("source_" + std::to_string(c) + ".wav"),
                   wav_bytes(sources.signals[c], cfg.sample_rate, cfg.wav_encoding));
    }
    staged.add(dir / "masks.csv", io::masks_csv(sources.masks));
    staged.add(dir / "assignments.csv", io::labels_csv(assignment.ids, "cluster"));
    staged.add(dir / "provenance.txt", "mode = " + std::string(separate::to_string(mode)) + "\nmodel = " + id + "\n");
    staged.commit();
    out << "separated " << sources.signals.size() << " sources (" << separate::to_string(mode) << " masks, model "
        << id << ") into " << dir.string() << "\n";
    return kSuccess;
}

std::vector<fs::path> wav_files(const fs::path& dir, const std::regex& pattern) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, pattern)) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
    const fs::path est_dir(o.est_dir);
    const fs::path ref_dir(o.ref_dir);
    auto estimates = wav_files(est_dir, std::regex("source_(\\d+)\\.wav"));
    std::sort(estimates.begin(), estimates.end(), [](const fs::path& a, const fs::path& b) {
        auto index = [](const fs::path& p) { return std::stoul(p.stem().string().substr(7)); };
        return index(a) < index(b);
    });
    std::vector<fs::path> refs;
    if (fs::exists(ref_dir / "heart.wav") && fs::exists(ref_dir / "lung.wav")) {
        refs = {ref_dir / "heart.wav", ref_dir / "lung.wav"};
    } else {
        for (const auto& p : wav_files(ref_dir, std::regex(".*\\.wav"))) {
            if (p.filename() != "mixture.wav") refs.push_back(p);
        }
    }
    if (estimates.empty()) throw IoError("no source_<i>.wav files in " + est_dir.string());
    if (refs.empty()) throw IoError("no reference WAV files in " + ref_dir.string());

    separate::SeparatedSources sep;
    for (const auto& p : estimates) {
        auto s = io::read_wav(p);
        sep.sample_rate = s.sample_rate;
        sep.signals.push_back(std::move(s.samples));
    }
    if (fs::exists(est_dir / "provenance.txt")) {
        std::ifstream f(est_dir / "provenance.txt");
        for (std::string line; std::getline(f, line);) {
            if (line.rfind("mode = ", 0) == 0) sep.mode = separate::mask_mode_from_string(line.substr(7));
            if (line.rfind("model = ", 0) == 0) sep.model_id = line.substr(8);
        }
    }
    std::vector<siggen::SourceSignal> references;
    for (const auto& p : refs) {
        references.push_back(io::read_wav(p));
        if (references.back().sample_rate != sep.sample_rate) {
            throw InvalidArgument("sample_rate mismatch: estimates=" + io::format_number(sep.sample_rate) + " " +
                                  p.filename().string() + "=" + io::format_number(references.back().sample_rate));
        }
    }
    std::vector<double> mixture;
    if (fs::exists(ref_dir / "mixture.wav")) mixture = io::read_wav(ref_dir / "mixture.wav").samples;

    auto report = separate::evaluate(sep, references, mixture);
    if (fs::exists(est_dir / "assignments.csv") && fs::exists(ref_dir / "labels.csv")) {
        const auto assignments = io::read_labels_csv(est_dir / "assignments.csv");
        const auto labels = io::read_labels_csv(ref_dir / "labels.csv");
        if (assignments.size() == labels.size()) {
            report.purity = latent::purity(assignments, labels);
        } else {
            err << "cardiosep: skipping purity: " << assignments.size() << " assignments vs " << labels.size()
                << " labels\n";
        }
    }
    io::write_file_atomic(o.out, io::report_csv(report));
    out << io::report_text(report);
    return kSuccess;
}

int report_error(std::ostream& err, const char* category, const std::string& what, int code) {
    std::string line = what;
    std::replace(line.begin(), line.end(), '\n', ' ');
    err << "cardiosep: error[" << category << "]: " << line << "\n";
    return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unsupervised heart/lung sound separation with a variational autoencoder", "cardiosep"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "Generate synthetic heart, lung and mixture WAVs plus frame labels");
    synth->add_option("--config", o.config, "Config file (key = value)")->check(CLI::ExistingFile);
    synth->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train the VAE on a mixture recording");
    train->add_option("--config", o.config, "Config file (key = value)")->check(CLI::ExistingFile);
    train->add_option("--mixture", o.mixture, "Mono WAV mixture")->required();
    train->add_option("--out", o.out, "Checkpoint path; losses and latent snapshots go beside it")->required();

    auto* project = app.add_subcommand("project", "t-SNE embedding and clustering of the latent space");
    project->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    project->add_option("--mixture", o.mixture, "Mono WAV mixture");
    project->add_option("--latent", o.latent, "Latent snapshot CSV to project instead of encoding --mixture");
    project->add_option("--labels", o.labels, "Per-frame true labels CSV");
    project->add_option("--every", o.every, "Embed every N-th frame (t-SNE is O(N^2))");
    project->add_option("--config", o.config, "Override analysis settings (must match the checkpoint)");
    project->add_option("--out", o.out, "Embedding CSV")->required();

    auto* sep = app.add_subcommand("separate", "Separate a mixture into per-cluster sources");
    sep->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    sep->add_option("--mixture", o.mixture, "Mono WAV mixture")->required();
    sep->add_option("--mode", o.mode, "Mask mode")->check(CLI::IsMember({"hard", "wiener"}));
    sep->add_option("--config", o.config, "Override analysis settings (must match the checkpoint)");
    sep->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* eval = app.add_subcommand("evaluate", "Score separated sources against references");
    eval->add_option("--est-dir", o.est_dir, "Directory with source_<i>.wav")->required();
    eval->add_option("--ref-dir", o.ref_dir, "Directory with reference WAVs (heart.wav, lung.wav, mixture.wav)")
        ->required();
    eval->add_option("--out", o.out, "Report CSV")->required();

    try {
        std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
        std::reverse(reversed.begin(), reversed.end());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what(), kUsage);
        err << app.help();
        return kUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(o, out, err);
        if (train->parsed()) return cmd_train(o, out, err);
        if (project->parsed()) {
            if (o.mixture.empty() == o.latent.empty()) {
                return report_error(err, "usage", "project needs exactly one of --mixture or --latent", kUsage);
            }
            return cmd_project(o, out, err);
        }
        if (sep->parsed()) return cmd_separate(o, out, err);
        if (eval->parsed()) return cmd_evaluate(o, out, err);
    } catch (const InvalidArgument& e) {
        return report_error(err, "validation", e.what(), kValidation);
    } catch (const StateError& e) {
        return report_error(err, "validation", e.what(), kValidation);
    } catch (const IoError& e) {
        return report_error(err, "io", e.what(), kIo);
    } catch (const std::filesystem::filesystem_error& e) {
        return report_error(err, "io", e.what(), kIo);
    } catch (const NumericError& e) {
        return report_error(err, "numeric", e.what(), kNumeric);
    } catch (const std::exception& e) {
        return report_error(err, "numeric", e.what(), kNumeric);
    }
    return kUsage;
}

}  // namespace cardiosep::cli
