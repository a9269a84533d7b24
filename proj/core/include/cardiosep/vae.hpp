#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/dsp.hpp"
#include "cardiosep/matrix.hpp"
#include "cardiosep/nngrad.hpp"
#include "cardiosep/random.hpp"

namespace cardiosep::vae {

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct Architecture {
    std::size_t input_dim = 129;
    std::size_t latent_dim = 8;
    std::vector<std::size_t> hidden{64, 32};
    nn::Activation hidden_activation = nn::Activation::tanh;

    /// input -> hidden... -> 2k (mean and log-variance halves).
    std::vector<std::size_t> encoder_sizes() const;
    /// k -> reversed hidden... -> input.
    std::vector<std::size_t> decoder_sizes() const;
};

/// Diagonal Gaussian q(z|x).
struct GaussianPosterior {
    std::vector<double> mu;
    std::vector<double> logvar;
};

struct LatentSample {
    std::vector<double> z;
};

/// Negative ELBO split into its two terms: total == recon + beta * kl.
struct LossBreakdown {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

/// Encoder/decoder pair with a fixed N(0, I) prior and unit-variance
/// Gaussian likelihood.
struct VaeModel {
    Architecture arch;
    double beta = 1.0;
    nn::ParamSet encoder;
    nn::ParamSet decoder;

    static VaeModel create(const Architecture& arch, double beta, Rng& rng);

    /// Throws InvalidArgument when the parameter shapes disagree with `arch`.
    void validate() const;
};

GaussianPosterior encode(const VaeModel& model, std::span<const double> x);
LatentSample reparameterize(const GaussianPosterior& post, std::span<const double> eps);
std::vector<double> decode(const VaeModel& model, std::span<const double> z);

/// Closed form KL(q || N(0, I)).
double kl_divergence(const GaussianPosterior& post);

/// Single-sample loss for one frame with the given noise draw.
LossBreakdown loss(const VaeModel& model, std::span<const double> x, std::span<const double> eps);

struct BatchGradients {
    LossBreakdown loss;  // means over the batch
    nn::Gradients encoder;
    nn::Gradients decoder;
};

/// Batch loss (mean over rows of `x`) and its exact gradients. Row r of `eps`
/// is the reparameterization noise for row r of `x`.
BatchGradients loss_and_gradients(const VaeModel& model, const Matrix& x, const Matrix& eps);

/// Batch loss without gradients (means over rows).
LossBreakdown evaluate_loss(const VaeModel& model, const Matrix& x, const Matrix& eps);

/// Encoder means for every frame, one row per frame.
Matrix posterior_means(const VaeModel& model, std::span<const dsp::FeatureFrame> frames);

enum class LrSchedule { constant, cosine };

const char* to_string(LrSchedule s) noexcept;
LrSchedule lr_schedule_from_string(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double lr = 1e-3;  // peak rate; cosine decays it to zero over the run
    double beta = 1.0;
    std::size_t snapshot_stride = 10;
    LrSchedule schedule = LrSchedule::cosine;
};

/// Learning rate for optimizer step `step` (1-based) out of `total_steps`.
double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

struct LatentSnapshot {
    std::size_t epoch = 0;
    Matrix means;
};

struct TrainResult {
    /// Full-dataset loss at the end of each epoch, evaluated with one fixed
    /// noise draw per frame so epochs are comparable. Index 0 is epoch 1.
    std::vector<LossBreakdown> history;
    /// Mean of the minibatch losses seen during each epoch.
    std::vector<LossBreakdown> batch_history;
    std::vector<LatentSnapshot> snapshots;
    std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, const LossBreakdown&)>;

/// Shuffled minibatch Adam on the negative ELBO. All randomness (evaluation
/// noise, shuffles and reparameterization noise) is drawn from `rng`. Snapshots of the posterior
/// means are taken after epoch 1, every `snapshot_stride` epochs, and the
/// final epoch.
TrainResult train(VaeModel& model, std::span<const dsp::FeatureFrame> frames, const TrainConfig& cfg,
                  Rng& rng, const EpochCallback& on_epoch = {});

}  // namespace cardiosep::vae
