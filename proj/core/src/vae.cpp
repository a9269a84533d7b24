#include "cardiosep/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cardiosep/error.hpp"

namespace cardiosep::vae {

std::vector<std::size_t> Architecture::encoder_sizes() const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * latent_dim);
    return sizes;
}

std::vector<std::size_t> Architecture::decoder_sizes() const {
    std::vector<std::size_t> sizes{latent_dim};
    sizes.insert(sizes.end(), hidden.rbegin(), hidden.rend());
    sizes.push_back(input_dim);
    return sizes;
}

VaeModel VaeModel::create(const Architecture& arch, double beta, Rng& rng) {
    if (arch.input_dim == 0 || arch.latent_dim == 0) {
        throw InvalidArgument("VAE input and latent dimensions must be positive");
    }
    if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
    VaeModel m;
    m.arch = arch;
    m.beta = beta;
    const auto enc = arch.encoder_sizes();
    const auto dec = arch.decoder_sizes();
    m.encoder = nn::ParamSet::mlp("encoder", enc, arch.hidden_activation, nn::Activation::identity, rng);
    m.decoder = nn::ParamSet::mlp("decoder", dec, arch.hidden_activation, nn::Activation::identity, rng);
    return m;
}

void VaeModel::validate() const {
    auto check = [](const nn::ParamSet& p, const std::vector<std::size_t>& sizes, const char* which) {
        if (p.layers.size() + 1 != sizes.size()) {
            throw InvalidArgument(std::string(which) + " has " + std::to_string(p.layers.size()) +
                                  " layers, architecture declares " + std::to_string(sizes.size() - 1));
        }
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            const auto& layer = p.layers[l];
            if (layer.weight.rows() != sizes[l] || layer.weight.cols() != sizes[l + 1] ||
                layer.bias.size() != sizes[l + 1]) {
                throw InvalidArgument(layer.name + " shape does not match the architecture");
            }
        }
    };
    check(encoder, arch.encoder_sizes(), "encoder");
    check(decoder, arch.decoder_sizes(), "decoder");
    if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
}

namespace {

Matrix as_row(std::span<const double> v) { return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end())); }

void check_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw InvalidArgument(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                              std::to_string(want));
    }
}

double clamp_logvar(double v) { return std::clamp(v, kLogvarMin, kLogvarMax); }

}  // namespace

GaussianPosterior encode(const VaeModel& model, std::span<const double> x) {
    check_dim(x.size(), model.arch.input_dim, "encoder input");
    const Matrix out = nn::forward(model.encoder, as_row(x));
    const std::size_t k = model.arch.latent_dim;
    GaussianPosterior post{std::vector<double>(k), std::vector<double>(k)};
    for (std::size_t i = 0; i < k; ++i) {
        post.mu[i] = out(0, i);
        post.logvar[i] = clamp_logvar(out(0, k + i));
    }
    return post;
}

LatentSample reparameterize(const GaussianPosterior& post, std::span<const double> eps) {
    check_dim(post.logvar.size(), post.mu.size(), "logvar");
    check_dim(eps.size(), post.mu.size(), "eps");
    LatentSample s{std::vector<double>(eps.size())};
    for (std::size_t i = 0; i < eps.size(); ++i) {
        s.z[i] = post.mu[i] + std::exp(0.5 * post.logvar[i]) * eps[i];
    }
    return s;
}

std::vector<double> decode(const VaeModel& model, std::span<const double> z) {
    check_dim(z.size(), model.arch.latent_dim, "latent vector");
    return nn::forward(model.decoder, as_row(z)).values();
}

double kl_divergence(const GaussianPosterior& post) {
    check_dim(post.logvar.size(), post.mu.size(), "logvar");
    double kl = 0.0;
    for (std::size_t i = 0; i < post.mu.size(); ++i) {
        kl += post.mu[i] * post.mu[i] + std::exp(post.logvar[i]) - 1.0 - post.logvar[i];
    }
    return 0.5 * kl;
}

LossBreakdown loss(const VaeModel& model, std::span<const double> x, std::span<const double> eps) {
    const auto post = encode(model, x);
    const auto z = reparameterize(post, eps);
    const auto x_hat = decode(model, z.z);
    LossBreakdown out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_hat[i];
        out.recon += 0.5 * d * d;
    }
    out.kl = kl_divergence(post);
    out.total = out.recon + model.beta * out.kl;
    if (!std::isfinite(out.total)) throw NumericError("non-finite VAE loss");
    return out;
}

BatchGradients loss_and_gradients(const VaeModel& model, const Matrix& x, const Matrix& eps) {
    const std::size_t batch = x.rows();
    const std::size_t n = model.arch.input_dim;
    const std::size_t k = model.arch.latent_dim;
    check_dim(x.cols(), n, "batch row");
    check_dim(eps.cols(), k, "noise row");
    check_dim(eps.rows(), batch, "noise batch");
    if (batch == 0) throw InvalidArgument("empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch);

    nn::GradTape enc_tape;
    const Matrix enc_out = nn::forward(model.encoder, x, &enc_tape);

    Matrix z(batch, k);
    Matrix logvar(batch, k);
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            logvar(r, i) = clamp_logvar(enc_out(r, k + i));
            z(r, i) = enc_out(r, i) + std::exp(0.5 * logvar(r, i)) * eps(r, i);
        }
    }

    nn::GradTape dec_tape;
    const Matrix x_hat = nn::forward(model.decoder, z, &dec_tape);

    BatchGradients out;
    out.encoder = model.encoder.zero_gradients();
    out.decoder = model.decoder.zero_gradients();

    Matrix d_xhat(batch, n);
    double recon = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x_hat(r, i) - x(r, i);
            recon += 0.5 * d * d;
            d_xhat(r, i) = d * inv_batch;
        }
    }
    double kl = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double mu = enc_out(r, i);
            const double lv = logvar(r, i);
            kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
        }
    }
    out.loss.recon = recon * inv_batch;
    out.loss.kl = kl * inv_batch;
    out.loss.total = out.loss.recon + model.beta * out.loss.kl;
    if (!std::isfinite(out.loss.total)) throw NumericError("non-finite VAE loss");

    const Matrix d_z = nn::backward(dec_tape, model.decoder, d_xhat, out.decoder);

    Matrix d_enc(batch, 2 * k);
    const double kl_scale = model.beta * inv_batch;
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double mu = enc_out(r, i);
            const double raw = enc_out(r, k + i);
            const double lv = logvar(r, i);
            d_enc(r, i) = d_z(r, i) + kl_scale * mu;
            // The clamp passes gradient only inside its range.
            if (raw >= kLogvarMin && raw <= kLogvarMax) {
                const double sigma = std::exp(0.5 * lv);
                d_enc(r, k + i) = d_z(r, i) * eps(r, i) * 0.5 * sigma + kl_scale * 0.5 * (std::exp(lv) - 1.0);
            }
        }
    }
    nn::backward(enc_tape, model.encoder, d_enc, out.encoder);
    return out;
}

LossBreakdown evaluate_loss(const VaeModel& model, const Matrix& x, const Matrix& eps) {
    const std::size_t k = model.arch.latent_dim;
    check_dim(x.cols(), model.arch.input_dim, "batch row");
    check_dim(eps.cols(), k, "noise row");
    check_dim(eps.rows(), x.rows(), "noise batch");
    if (x.rows() == 0) throw InvalidArgument("empty batch");
    const Matrix enc = nn::forward(model.encoder, x);
    Matrix z(x.rows(), k);
    double kl = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double mu = enc(r, i);
            const double lv = clamp_logvar(enc(r, k + i));
            z(r, i) = mu + std::exp(0.5 * lv) * eps(r, i);
            kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
        }
    }
    const Matrix x_hat = nn::forward(model.decoder, z);
    double recon = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x_hat.data()[i] - x.data()[i];
        recon += 0.5 * d * d;
    }
    const double inv = 1.0 / static_cast<double>(x.rows());
    LossBreakdown out{recon * inv, kl * inv, 0.0};
    out.total = out.recon + model.beta * out.kl;
    if (!std::isfinite(out.total)) throw NumericError("non-finite VAE loss");
    return out;
}

Matrix posterior_means(const VaeModel& model, std::span<const dsp::FeatureFrame> frames) {
    const std::size_t k = model.arch.latent_dim;
    Matrix x(frames.size(), model.arch.input_dim);
    for (std::size_t r = 0; r < frames.size(); ++r) {
        check_dim(frames[r].values.size(), model.arch.input_dim, "feature frame");
        std::copy(frames[r].values.begin(), frames[r].values.end(), x.row(r).begin());
    }
    const Matrix out = nn::forward(model.encoder, x);
    Matrix mu(frames.size(), k);
    for (std::size_t r = 0; r < frames.size(); ++r) {
        std::copy_n(out.row(r).begin(), k, mu.row(r).begin());
    }
    return mu;
}

const char* to_string(LrSchedule s) noexcept { return s == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule lr_schedule_from_string(const std::string& name) {
    if (name == "cosine") return LrSchedule::cosine;
    if (name == "constant") return LrSchedule::constant;
    throw InvalidArgument("unknown learning-rate schedule '" + name + "' (expected cosine or constant)");
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
    if (cfg.schedule == LrSchedule::constant || total_steps == 0) return cfg.lr;
    const double progress = static_cast<double>(step - 1) / static_cast<double>(total_steps);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train(VaeModel& model, std::span<const dsp::FeatureFrame> frames, const TrainConfig& cfg,
                  Rng& rng, const EpochCallback& on_epoch) {
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.snapshot_stride == 0 || !(cfg.lr > 0.0)) {
        throw InvalidArgument("epochs, batch_size, snapshot_stride and lr must be positive");
    }
    if (!(cfg.beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
    if (frames.size() < cfg.batch_size) {
        throw InvalidArgument("training needs at least batch_size=" + std::to_string(cfg.batch_size) +
                              " frames, got " + std::to_string(frames.size()));
    }
    model.validate();
    model.beta = cfg.beta;
    const std::size_t n = model.arch.input_dim;
    const std::size_t k = model.arch.latent_dim;
    for (const auto& f : frames) check_dim(f.values.size(), n, "feature frame");

    TrainResult result;
    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batches_per_epoch = (frames.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = batches_per_epoch * cfg.epochs;

    Matrix all_x(frames.size(), n);
    Matrix eval_eps(frames.size(), k);
    for (std::size_t r = 0; r < frames.size(); ++r) {
        std::copy(frames[r].values.begin(), frames[r].values.end(), all_x.row(r).begin());
        for (double& e : eval_eps.row(r)) e = rng.normal();
    }

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        LossBreakdown sum;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
            Matrix x(batch, n);
            Matrix eps(batch, k);
            for (std::size_t r = 0; r < batch; ++r) {
                const auto& f = frames[order[start + r]].values;
                std::copy(f.begin(), f.end(), x.row(r).begin());
                for (double& e : eps.row(r)) e = rng.normal();
            }
            BatchGradients step;
            try {
                step = loss_and_gradients(model, x, eps);
                ++result.steps;
                const nn::AdamConfig adam{scheduled_lr(cfg, result.steps, total_steps)};
                nn::adam_step(model.encoder, step.encoder, adam, result.steps);
                nn::adam_step(model.decoder, step.decoder, adam, result.steps);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
            const double w = static_cast<double>(batch);
            sum.recon += step.loss.recon * w;
            sum.kl += step.loss.kl * w;
        }
        const double count = static_cast<double>(frames.size());
        LossBreakdown mean{sum.recon / count, sum.kl / count, 0.0};
        mean.total = mean.recon + model.beta * mean.kl;
        result.batch_history.push_back(mean);

        LossBreakdown eval;
        try {
            eval = evaluate_loss(model, all_x, eval_eps);
        } catch (const NumericError& e) {
            throw NumericError("non-finite loss after epoch " + std::to_string(epoch) + ": " + e.what());
        }
        result.history.push_back(eval);
        if (on_epoch) on_epoch(epoch, eval);

        if (epoch == 1 || epoch % cfg.snapshot_stride == 0 || epoch == cfg.epochs) {
            result.snapshots.push_back({epoch, posterior_means(model, frames)});
        }
    }
    return result;
}

}  // namespace cardiosep::vae
