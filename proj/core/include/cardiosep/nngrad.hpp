#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/matrix.hpp"
#include "cardiosep/random.hpp"

namespace cardiosep::nn {

enum class Activation { identity, relu, tanh };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& name);

/// y = act(x W + b) with W stored in x out so a batch is a row-major matmul.
struct DenseLayer {
    std::string name;
    Matrix weight;
    std::vector<double> bias;
    Activation activation = Activation::identity;
};

struct LayerGrad {
    Matrix weight;
    std::vector<double> bias;
};

using Gradients = std::vector<LayerGrad>;

/// Parameters of one MLP chain plus its optimizer moment buffers.
class ParamSet {
  public:
    std::vector<DenseLayer> layers;
    Gradients first_moment;
    Gradients second_moment;

    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width
    /// including input and output.
    static ParamSet mlp(const std::string& prefix, std::span<const std::size_t> sizes,
                        Activation hidden, Activation output, Rng& rng);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    Gradients zero_gradients() const;
    void reset_moments();
};

class GradTape;

/// x W + b for layer `layer`; records onto `tape` when one is given.
Matrix affine(GradTape* tape, const Matrix& input, const ParamSet& params, std::size_t layer);

Matrix activation(GradTape* tape, const Matrix& input, Activation kind);

/// Full chain: affine + activation for every layer.
Matrix forward(const ParamSet& params, const Matrix& input, GradTape* tape = nullptr);

/// Records a forward pass over one ParamSet so its gradient can be replayed.
/// A tape may be consumed by exactly one backward() per recorded forward.
class GradTape {
  public:
    bool ready() const noexcept { return state_ == State::recorded; }
    std::size_t size() const noexcept { return entries_.size(); }

  private:
    enum class Kind { affine, activation };
    struct Entry {
        Kind kind;
        std::size_t layer = 0;
        Activation act = Activation::identity;
        Matrix cache;  // affine: input; activation: output
    };
    enum class State { empty, recorded, consumed };

    void record(Entry entry);

    std::vector<Entry> entries_;
    State state_ = State::empty;

    friend Matrix affine(GradTape*, const Matrix&, const ParamSet&, std::size_t);
    friend Matrix activation(GradTape*, const Matrix&, Activation);
    friend Matrix backward(GradTape&, const ParamSet&, const Matrix&, Gradients&);
};

/// Reverse pass. `output_grad` is dLoss/dOutput for the recorded chain;
/// parameter gradients are accumulated into `grads`. Returns dLoss/dInput.
/// Throws StateError when nothing was recorded or the tape was already used.
Matrix backward(GradTape& tape, const ParamSet& params, const Matrix& output_grad, Gradients& grads);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

/// Bias-corrected adaptive-moment update applied in place; `step` >= 1.
/// Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(ParamSet& params, const Gradients& grads, const AdamConfig& cfg, std::size_t step);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    std::size_t failures = 0;
    double tolerance = 0.0;

    bool passed() const noexcept { return failures == 0; }
};

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares `analytic[i]` (aligned with `params[i]`) against fourth-order
/// central finite differences of `loss` (points at +-step and +-2 step), which
/// must read the current parameter values.
/// Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor); the step is
/// h * max(1, |theta|).
GradCheckReport grad_check(std::span<ParamSet* const> params, std::span<const Gradients> analytic,
                           const std::function<double()>& loss, double tolerance,
                           double h = kGradCheckStep);

}  // namespace cardiosep::nn
