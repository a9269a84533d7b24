#include "cardiosep/nngrad.hpp"

#include <algorithm>
#include <cmath>

#include "cardiosep/error.hpp"

namespace cardiosep::nn {

const char* to_string(Activation a) noexcept {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + name + "'");
}

ParamSet ParamSet::mlp(const std::string& prefix, std::span<const std::size_t> sizes,
                       Activation hidden, Activation output, Rng& rng) {
    if (sizes.size() < 2) throw InvalidArgument("an MLP needs at least input and output sizes");
    ParamSet p;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        if (in == 0 || out == 0) throw InvalidArgument("MLP layer widths must be positive");
        DenseLayer layer;
        layer.name = prefix + "." + std::to_string(l);
        layer.weight = Matrix(in, out);
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
        layer.bias.assign(out, 0.0);
        layer.activation = (l + 2 == sizes.size()) ? output : hidden;
        p.layers.push_back(std::move(layer));
    }
    p.reset_moments();
    return p;
}

std::size_t ParamSet::input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
std::size_t ParamSet::output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

Gradients ParamSet::zero_gradients() const {
    Gradients g;
    g.reserve(layers.size());
    for (const auto& l : layers) {
        g.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
}

void ParamSet::reset_moments() {
    first_moment = zero_gradients();
    second_moment = zero_gradients();
}

void GradTape::record(Entry entry) {
    if (state_ != State::recorded) {
        entries_.clear();
        state_ = State::recorded;
    }
    entries_.push_back(std::move(entry));
}

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.all_finite()) throw NumericError(std::string("non-finite value produced by ") + what);
}

}  // namespace

Matrix affine(GradTape* tape, const Matrix& input, const ParamSet& params, std::size_t layer) {
    if (layer >= params.layers.size()) throw InvalidArgument("layer index out of range");
    const auto& l = params.layers[layer];
    if (input.cols() != l.weight.rows()) {
        throw InvalidArgument("affine " + l.name + ": input has " + std::to_string(input.cols()) +
                              " columns, layer expects " + std::to_string(l.weight.rows()));
    }
    const std::size_t batch = input.rows();
    const std::size_t in = l.weight.rows();
    const std::size_t out = l.weight.cols();
    Matrix y(batch, out);
    for (std::size_t r = 0; r < batch; ++r) {
        auto yr = y.row(r);
        std::copy(l.bias.begin(), l.bias.end(), yr.begin());
        const auto xr = input.row(r);
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const auto wi = l.weight.row(i);
            for (std::size_t j = 0; j < out; ++j) yr[j] += xi * wi[j];
        }
    }
    require_finite(y, "affine");
    if (tape != nullptr) tape->record({GradTape::Kind::affine, layer, Activation::identity, input});
    return y;
}

Matrix activation(GradTape* tape, const Matrix& input, Activation kind) {
    Matrix y = input;
    switch (kind) {
        case Activation::identity: break;
        case Activation::relu:
            for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::tanh:
            for (double& v : y.data()) v = std::tanh(v);
            break;
    }
    require_finite(y, "activation");
    if (tape != nullptr) tape->record({GradTape::Kind::activation, 0, kind, y});
    return y;
}

Matrix forward(const ParamSet& params, const Matrix& input, GradTape* tape) {
    Matrix x = input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        x = activation(tape, affine(tape, x, params, l), params.layers[l].activation);
    }
    return x;
}

Matrix backward(GradTape& tape, const ParamSet& params, const Matrix& output_grad, Gradients& grads) {
    if (tape.state_ == GradTape::State::empty) throw StateError("backward called before any forward pass");
    if (tape.state_ == GradTape::State::consumed) {
        throw StateError("backward called twice without a new forward pass");
    }
    if (grads.size() != params.layers.size()) {
        throw InvalidArgument("gradient buffer does not match the parameter set");
    }
    tape.state_ = GradTape::State::consumed;

    Matrix grad = output_grad;
    for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
        if (it->kind == GradTape::Kind::activation) {
            const Matrix& y = it->cache;
            if (y.rows() != grad.rows() || y.cols() != grad.cols()) {
                throw InvalidArgument("output gradient shape does not match recorded activation");
            }
            auto g = grad.data();
            const auto yv = y.data();
            switch (it->act) {
                case Activation::identity: break;
                case Activation::relu:
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] = yv[i] > 0.0 ? g[i] : 0.0;
                    break;
                case Activation::tanh:
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - yv[i] * yv[i];
                    break;
            }
            continue;
        }

        const auto& l = params.layers[it->layer];
        auto& lg = grads[it->layer];
        const Matrix& x = it->cache;
        const std::size_t in = l.weight.rows();
        const std::size_t out = l.weight.cols();
        if (grad.cols() != out || grad.rows() != x.rows()) {
            throw InvalidArgument("output gradient shape does not match layer " + l.name);
        }
        Matrix input_grad(x.rows(), in);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto gr = grad.row(r);
            const auto xr = x.row(r);
            auto ir = input_grad.row(r);
            for (std::size_t j = 0; j < out; ++j) lg.bias[j] += gr[j];
            for (std::size_t i = 0; i < in; ++i) {
                const auto wi = l.weight.row(i);
                auto dwi = lg.weight.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < out; ++j) {
                    dwi[j] += xr[i] * gr[j];
                    acc += gr[j] * wi[j];
                }
                ir[i] = acc;
            }
        }
        grad = std::move(input_grad);
    }
    require_finite(grad, "backward");
    return grad;
}

void adam_step(ParamSet& params, const Gradients& grads, const AdamConfig& cfg, std::size_t step) {
    if (step < 1) throw InvalidArgument("adam step index must be >= 1");
    if (grads.size() != params.layers.size() || params.first_moment.size() != params.layers.size()) {
        throw InvalidArgument("gradient/moment buffers do not match the parameter set");
    }
    for (std::size_t l = 0; l < grads.size(); ++l) {
        const auto& layer = params.layers[l];
        if (grads[l].weight.size() != layer.weight.size() || grads[l].bias.size() != layer.bias.size()) {
            throw InvalidArgument("gradient shape mismatch for " + layer.name);
        }
        if (!grads[l].weight.all_finite()) throw NumericError("non-finite gradient in " + layer.name + ".weight");
        if (!std::all_of(grads[l].bias.begin(), grads[l].bias.end(), [](double v) { return std::isfinite(v); })) {
            throw NumericError("non-finite gradient in " + layer.name + ".bias");
        }
    }

    const double t = static_cast<double>(step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m,
                      std::span<double> v) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_hat);
        }
    };
    for (std::size_t l = 0; l < grads.size(); ++l) {
        auto& layer = params.layers[l];
        update(layer.weight.data(), grads[l].weight.data(), params.first_moment[l].weight.data(),
               params.second_moment[l].weight.data());
        update(layer.bias, grads[l].bias, params.first_moment[l].bias, params.second_moment[l].bias);
    }
}

GradCheckReport grad_check(std::span<ParamSet* const> params, std::span<const Gradients> analytic,
                           const std::function<double()>& loss, double tolerance, double h) {
    if (params.size() != analytic.size()) throw InvalidArgument("analytic gradients not aligned with params");
    GradCheckReport report;
    report.tolerance = tolerance;

    auto probe = [&](double& theta, double a, const std::string& name) {
        const double saved = theta;
        const double step = h * std::max(1.0, std::abs(saved));
        auto at = [&](double offset) {
            theta = saved + offset;
            return loss();
        };
        // Five-point central stencil: the plain two-point difference carries
        // O(h^2) truncation error, which swamps small gradients of deep nets.
        const double near = at(step) - at(-step);
        const double far = at(2.0 * step) - at(-2.0 * step);
        theta = saved;
        const double numeric = (8.0 * near - far) / (12.0 * step);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
        ++report.checked;
        if (!(rel < tolerance)) ++report.failures;
        if (!(rel <= report.max_rel_error)) {
            report.max_rel_error = rel;
            report.worst_parameter = name;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    };

    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& set = *params[p];
        for (std::size_t l = 0; l < set.layers.size(); ++l) {
            auto& layer = set.layers[l];
            const auto& g = analytic[p][l];
            auto w = layer.weight.data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                probe(w[i], g.weight.data()[i], layer.name + ".weight[" + std::to_string(i) + "]");
            }
            for (std::size_t i = 0; i < layer.bias.size(); ++i) {
                probe(layer.bias[i], g.bias[i], layer.name + ".bias[" + std::to_string(i) + "]");
            }
        }
    }
    return report;
}

}  // namespace cardiosep::nn
