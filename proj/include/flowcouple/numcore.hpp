#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace flowcouple {

// Row-major array of doubles. Rank 1 for latent vectors, rank 2 for
// weight matrices (out x in).
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
    DenseArray(std::vector<std::size_t> shape, std::vector<double> data);

    static DenseArray vector(std::vector<double> values);
    static DenseArray vector(std::span<const double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-2 access.
    double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    void fill(double v);
    bool all_finite() const noexcept;
    bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    friend bool operator==(const DenseArray&, const DenseArray&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

DenseArray concat(std::span<const double> a, std::span<const double> b);

// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(std::span<const double> a, std::span<const double> b);

// Flat list of parameter-shaped arrays: [W0, b0, W1, b1, ...].
using ParameterSet = std::vector<DenseArray>;

ParameterSet zeros_like(const ParameterSet& params);

inline constexpr std::size_t kTimeFeatureDim = 4;

// [t, sin 2πt, cos 2πt, t²]
std::array<double, kTimeFeatureDim> time_features(double t);

struct NetConfig {
    std::size_t state_dim = 0;   // 2·d_s
    std::size_t context_dim = 0; // d_t + d_v
    std::vector<std::size_t> hidden = {128, 128};

    std::size_t input_dim() const noexcept { return state_dim + context_dim + kTimeFeatureDim; }
};

class VelocityNet;

// Activations kept from one forward evaluation, consumed by backward().
struct ForwardPass {
    std::vector<std::vector<double>> activations; // activations[0] = input features
    std::vector<double> output;
};

// u(x_t, t | context): tanh MLP with an identity output layer. Input is
// concat(x_t, context, time_features(t)).
class VelocityNet {
public:
    VelocityNet() = default;

    // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases likewise.
    VelocityNet(NetConfig config, std::uint64_t seed);

    static VelocityNet zeros(NetConfig config);

    // Rebuilds a net from a parameter list (e.g. a checkpoint). Validates
    // that shapes chain from input_dim to state_dim.
    static VelocityNet from_parameters(std::size_t state_dim, std::size_t context_dim, ParameterSet params);

    const NetConfig& config() const noexcept { return config_; }
    std::size_t input_dim() const noexcept { return config_.input_dim(); }
    std::size_t output_dim() const noexcept { return config_.state_dim; }
    std::size_t layer_count() const noexcept { return params_.size() / 2; }
    std::size_t parameter_count() const noexcept;

    DenseArray& weight(std::size_t layer) { return params_[2 * layer]; }
    const DenseArray& weight(std::size_t layer) const { return params_[2 * layer]; }
    DenseArray& bias(std::size_t layer) { return params_[2 * layer + 1]; }
    const DenseArray& bias(std::size_t layer) const { return params_[2 * layer + 1]; }

    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    DenseArray forward(std::span<const double> x_t, double t, std::span<const double> context) const;
    ForwardPass forward_pass(std::span<const double> x_t, double t, std::span<const double> context) const;

    // Gradient of <output, upstream> w.r.t. every parameter, added into
    // `grads` scaled by `scale`.
    void accumulate_backward(const ForwardPass& pass, std::span<const double> upstream, ParameterSet& grads,
                             double scale = 1.0) const;

    ParameterSet backward(std::span<const double> x_t, double t, std::span<const double> context,
                          std::span<const double> upstream) const;

private:
    void check_inputs(std::span<const double> x_t, double t, std::span<const double> context) const;

    NetConfig config_;
    ParameterSet params_;
};

// Central differences of <forward(θ), upstream>, one perturbation per parameter.
ParameterSet finite_diff_grad(const VelocityNet& net, std::span<const double> x_t, double t,
                              std::span<const double> context, std::span<const double> upstream, double step);

// max over parameters of |a - b| / max(|a|, |b|, floor)
double max_relative_error(const ParameterSet& a, const ParameterSet& b, double floor = 1e-6);

struct AdamState {
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    static AdamState for_parameters(const ParameterSet& params, double learning_rate, double beta1 = 0.9,
                                    double beta2 = 0.999, double epsilon = 1e-8);
};

// Bias-corrected Adam. On a non-finite gradient nothing is modified and a
// NonFiniteError carrying the would-be step index is thrown.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

} // namespace flowcouple
