#include "flowcouple/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>

#include "flowcouple/error.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill)
{
}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_product(shape_) != data_.size()) {
        throw ContractViolation("DenseArray: shape product " + std::to_string(shape_product(shape_)) +
                                " does not match data length " + std::to_string(data_.size()));
    }
}

DenseArray DenseArray::vector(std::vector<double> values)
{
    const std::size_t n = values.size();
    return DenseArray({n}, std::move(values));
}

DenseArray DenseArray::vector(std::span<const double> values)
{
    return vector(std::vector<double>(values.begin(), values.end()));
}

void DenseArray::fill(double v)
{
    std::fill(data_.begin(), data_.end(), v);
}

bool DenseArray::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseArray concat(std::span<const double> a, std::span<const double> b)
{
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return DenseArray::vector(std::move(out));
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b)
{
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

ParameterSet zeros_like(const ParameterSet& params)
{
    ParameterSet out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.emplace_back(p.shape(), 0.0);
    }
    return out;
}

std::array<double, kTimeFeatureDim> time_features(double t)
{
    const double angle = 2.0 * std::numbers::pi * t;
    return {t, std::sin(angle), std::cos(angle), t * t};
}

// ---------------------------------------------------------------- VelocityNet

VelocityNet::VelocityNet(NetConfig config, std::uint64_t seed) : VelocityNet(zeros(std::move(config)))
{
    Rng rng(seed, "net_init");
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(weight(l).shape()[1]));
        for (double& w : weight(l)) {
            w = rng.uniform(-bound, bound);
        }
        for (double& b : bias(l)) {
            b = rng.uniform(-bound, bound);
        }
    }
}

VelocityNet VelocityNet::zeros(NetConfig config)
{
    if (config.state_dim == 0) {
        throw ContractViolation("VelocityNet: state_dim must be >= 1");
    }
    VelocityNet net;
    std::size_t fan_in = config.input_dim();
    for (std::size_t width : config.hidden) {
        if (width == 0) {
            throw ContractViolation("VelocityNet: hidden width must be >= 1");
        }
        net.params_.emplace_back(std::vector<std::size_t>{width, fan_in}, 0.0);
        net.params_.emplace_back(std::vector<std::size_t>{width}, 0.0);
        fan_in = width;
    }
    net.params_.emplace_back(std::vector<std::size_t>{config.state_dim, fan_in}, 0.0);
    net.params_.emplace_back(std::vector<std::size_t>{config.state_dim}, 0.0);
    net.config_ = std::move(config);
    return net;
}

VelocityNet VelocityNet::from_parameters(std::size_t state_dim, std::size_t context_dim, ParameterSet params)
{
    if (params.empty() || params.size() % 2 != 0) {
        throw ContractViolation("VelocityNet: parameter list must hold (weight, bias) pairs, got " +
                                std::to_string(params.size()) + " arrays");
    }
    NetConfig config{state_dim, context_dim, {}};
    std::size_t fan_in = config.input_dim();
    for (std::size_t i = 0; i < params.size(); i += 2) {
        const auto& w = params[i];
        const auto& b = params[i + 1];
        if (w.rank() != 2 || b.rank() != 1 || w.shape()[1] != fan_in || b.shape()[0] != w.shape()[0]) {
            throw ContractViolation("VelocityNet: layer " + std::to_string(i / 2) +
                                    " shapes do not chain (expected fan_in " + std::to_string(fan_in) + ")");
        }
        fan_in = w.shape()[0];
        if (i + 2 < params.size()) {
            config.hidden.push_back(fan_in);
        }
    }
    if (fan_in != state_dim) {
        throw ContractViolation("VelocityNet: output dimension " + std::to_string(fan_in) +
                                " does not match state_dim " + std::to_string(state_dim));
    }
    VelocityNet net;
    net.config_ = std::move(config);
    net.params_ = std::move(params);
    return net;
}

std::size_t VelocityNet::parameter_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.size();
    }
    return n;
}

void VelocityNet::check_inputs(std::span<const double> x_t, double t, std::span<const double> context) const
{
    if (x_t.size() != config_.state_dim) {
        throw ContractViolation("net_forward: x_t has dimension " + std::to_string(x_t.size()) + ", expected " +
                                std::to_string(config_.state_dim));
    }
    if (context.size() != config_.context_dim) {
        throw ContractViolation("net_forward: context has dimension " + std::to_string(context.size()) +
                                ", expected " + std::to_string(config_.context_dim));
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ContractViolation("net_forward: t = " + std::to_string(t) + " outside [0, 1]");
    }
}

ForwardPass VelocityNet::forward_pass(std::span<const double> x_t, double t, std::span<const double> context) const
{
    check_inputs(x_t, t, context);

    ForwardPass pass;
    pass.activations.reserve(layer_count());

    std::vector<double> input;
    input.reserve(input_dim());
    input.insert(input.end(), x_t.begin(), x_t.end());
    input.insert(input.end(), context.begin(), context.end());
    const auto tf = time_features(t);
    input.insert(input.end(), tf.begin(), tf.end());
    pass.activations.push_back(std::move(input));

    for (std::size_t l = 0; l < layer_count(); ++l) {
        const DenseArray& w = weight(l);
        const DenseArray& b = bias(l);
        const std::vector<double>& in = pass.activations.back();
        const std::size_t rows = w.shape()[0];
        const std::size_t cols = w.shape()[1];
        const bool hidden = l + 1 < layer_count();

        std::vector<double> out(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* wr = w.data() + r * cols;
            double acc = b[r];
            for (std::size_t c = 0; c < cols; ++c) {
                acc += wr[c] * in[c];
            }
            out[r] = hidden ? std::tanh(acc) : acc;
        }
        if (hidden) {
            pass.activations.push_back(std::move(out));
        } else {
            pass.output = std::move(out);
        }
    }
    return pass;
}

DenseArray VelocityNet::forward(std::span<const double> x_t, double t, std::span<const double> context) const
{
    return DenseArray::vector(std::move(forward_pass(x_t, t, context).output));
}

void VelocityNet::accumulate_backward(const ForwardPass& pass, std::span<const double> upstream,
                                      ParameterSet& grads, double scale) const
{
    if (upstream.size() != output_dim()) {
        throw ContractViolation("net_backward: upstream gradient has dimension " + std::to_string(upstream.size()) +
                                ", expected " + std::to_string(output_dim()));
    }
    if (grads.size() != params_.size()) {
        throw ContractViolation("net_backward: gradient buffer does not match parameter list");
    }

    // delta holds d<out, upstream>/d(pre-activation) of the current layer.
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (double& d : delta) {
        d *= scale;
    }

    for (std::size_t l = layer_count(); l-- > 0;) {
        const DenseArray& w = weight(l);
        const std::size_t rows = w.shape()[0];
        const std::size_t cols = w.shape()[1];
        const std::vector<double>& in = pass.activations[l];
        DenseArray& gw = grads[2 * l];
        DenseArray& gb = grads[2 * l + 1];

        for (std::size_t r = 0; r < rows; ++r) {
            const double d = delta[r];
            gb[r] += d;
            if (d == 0.0) {
                continue;
            }
            double* gwr = gw.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                gwr[c] += d * in[c];
            }
        }

        if (l == 0) {
            break;
        }
        // in = tanh(pre) for hidden activations, so d tanh = 1 - in².
        std::vector<double> prev(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) {
                continue;
            }
            const double* wr = w.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                prev[c] += d * wr[c];
            }
        }
        for (std::size_t c = 0; c < cols; ++c) {
            prev[c] *= 1.0 - in[c] * in[c];
        }
        delta = std::move(prev);
    }
}

ParameterSet VelocityNet::backward(std::span<const double> x_t, double t, std::span<const double> context,
                                   std::span<const double> upstream) const
{
    ParameterSet grads = zeros_like(params_);
    accumulate_backward(forward_pass(x_t, t, context), upstream, grads);
    return grads;
}

// ------------------------------------------------------ finite differences

ParameterSet finite_diff_grad(const VelocityNet& net, std::span<const double> x_t, double t,
                              std::span<const double> context, std::span<const double> upstream, double step)
{
    if (!(step > 0.0)) {
        throw ContractViolation("finite_diff_grad: step must be > 0");
    }
    if (upstream.size() != net.output_dim()) {
        throw ContractViolation("finite_diff_grad: upstream gradient has dimension " +
                                std::to_string(upstream.size()) + ", expected " + std::to_string(net.output_dim()));
    }

    VelocityNet probe = net;
    auto objective = [&]() {
        const DenseArray out = probe.forward(x_t, t, context);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            acc += out[i] * upstream[i];
        }
        return acc;
    };

    ParameterSet grads = zeros_like(net.parameters());
    for (std::size_t p = 0; p < grads.size(); ++p) {
        DenseArray& param = probe.parameters()[p];
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double saved = param[i];
            param[i] = saved + step;
            const double plus = objective();
            param[i] = saved - step;
            const double minus = objective();
            param[i] = saved;
            grads[p][i] = (plus - minus) / (2.0 * step);
        }
    }
    return grads;
}

double max_relative_error(const ParameterSet& a, const ParameterSet& b, double floor)
{
    if (a.size() != b.size()) {
        throw ContractViolation("max_relative_error: parameter lists differ in length");
    }
    double worst = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (!a[p].same_shape(b[p])) {
            throw ContractViolation("max_relative_error: shape mismatch at array " + std::to_string(p));
        }
        for (std::size_t i = 0; i < a[p].size(); ++i) {
            const double denom = std::max({std::abs(a[p][i]), std::abs(b[p][i]), floor});
            worst = std::max(worst, std::abs(a[p][i] - b[p][i]) / denom);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------- Adam

AdamState AdamState::for_parameters(const ParameterSet& params, double learning_rate, double beta1, double beta2,
                                    double epsilon)
{
    AdamState state;
    state.first_moment = zeros_like(params);
    state.second_moment = zeros_like(params);
    state.learning_rate = learning_rate;
    state.beta1 = beta1;
    state.beta2 = beta2;
    state.epsilon = epsilon;
    return state;
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw ContractViolation("adam_step: parameter, gradient and moment lists differ in length");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].same_shape(grads[p]) || !params[p].same_shape(state.first_moment[p]) ||
            !params[p].same_shape(state.second_moment[p])) {
            throw ContractViolation("adam_step: shape mismatch at parameter array " + std::to_string(p));
        }
    }
    const std::uint64_t step = state.step_count + 1;
    for (std::size_t p = 0; p < grads.size(); ++p) {
        if (!grads[p].all_finite()) {
            throw NonFiniteError("adam_step: non-finite gradient in parameter array " + std::to_string(p) +
                                     " at step " + std::to_string(step),
                                 static_cast<long long>(step));
        }
    }

    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        DenseArray& theta = params[p];
        DenseArray& m = state.first_moment[p];
        DenseArray& v = state.second_moment[p];
        const DenseArray& g = grads[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
    state.step_count = step;
}

} // namespace flowcouple
