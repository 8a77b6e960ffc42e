#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowcouple/editlab.hpp"
#include "flowcouple/error.hpp"
#include "flowcouple/experiments.hpp"
#include "flowcouple/flowloss.hpp"
#include "flowcouple/rng.hpp"
#include "flowcouple/sampler.hpp"

using namespace flowcouple;

namespace {

VelocityField constant_field(std::vector<double> c)
{
    return [c](std::span<const double>, double, std::span<double> out) {
        std::copy(c.begin(), c.end(), out.begin());
    };
}

Trajectory hand_trajectory(std::vector<std::vector<double>> states, std::vector<std::vector<double>> velocities)
{
    Trajectory tr;
    const std::size_t k = velocities.size();
    for (std::size_t i = 0; i < states.size(); ++i) {
        tr.states.push_back({DenseArray::vector(states[i]), static_cast<double>(i) / static_cast<double>(k)});
    }
    for (auto& v : velocities) {
        tr.velocities.push_back(DenseArray::vector(v));
    }
    tr.nfe = static_cast<int>(k);
    return tr;
}

} // namespace

TEST_CASE("zero and constant fields")
{
    const std::vector<double> x0{0.25, -1.0, 3.0};
    const auto still = euler_sample(constant_field({0, 0, 0}), x0, 9);
    CHECK(bitwise_equal(still.endpoint().values(), x0));

    for (int k : {1, 2, 5, 64}) {
        const auto tr = euler_sample(constant_field({1.0, -2.0, 0.5}), x0, k);
        CHECK(tr.nfe == k);
        CHECK(tr.steps() == k);
        CHECK(tr.states.size() == static_cast<std::size_t>(k + 1));
        CHECK(tr.endpoint()[0] == doctest::Approx(1.25));
        CHECK(tr.endpoint()[1] == doctest::Approx(-3.0));
        CHECK(tr.endpoint()[2] == doctest::Approx(3.5));
        CHECK(straightness(tr) == doctest::Approx(0.0).epsilon(1e-20));
    }
}

TEST_CASE("time grid is uniform and ends exactly at one")
{
    const auto tr = euler_sample(constant_field({0.0}), std::vector<double>{0.0}, 7);
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        CHECK(tr.states[i].t == doctest::Approx(static_cast<double>(i) / 7.0));
        if (i > 0) {
            CHECK(tr.states[i].t > tr.states[i - 1].t);
        }
    }
    CHECK(tr.states.front().t == 0.0);
    CHECK(tr.states.back().t == 1.0);
    CHECK_THROWS_AS(euler_sample(constant_field({0.0}), std::vector<double>{0.0}, 0), ContractViolation);
}

TEST_CASE("exactly K field evaluations")
{
    int calls = 0;
    const VelocityField counted = [&](std::span<const double> x, double, std::span<double> out) {
        ++calls;
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = -x[i];
        }
    };
    for (int k : {1, 3, 25}) {
        calls = 0;
        const auto tr = euler_sample(counted, std::vector<double>{1.0, 2.0}, k);
        CHECK(calls == k);
        CHECK(tr.nfe == k);
    }
}

TEST_CASE("non-finite state truncates and invalidates")
{
    const VelocityField boom = [](std::span<const double> x, double t, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = t >= 0.5 ? std::nan("") : 1.0;
        }
    };
    const auto tr = euler_sample(boom, std::vector<double>{0.0}, 4);
    CHECK_FALSE(tr.valid);
    CHECK(tr.steps() < 4);
    CHECK_THROWS_AS(straightness(tr), ContractViolation);
}

TEST_CASE("straightness hand arithmetic")
{
    // velocities (1,0), (0,1); chord taken as the displacement (1,1) of the listed path
    const auto tr = hand_trajectory({{0, 0}, {1, 0}, {1, 1}}, {{1, 0}, {0, 1}});
    CHECK(straightness(tr) == doctest::Approx(1.0));

    // the same velocities integrated with dt = 1/2 give chord (0.5, 0.5)
    const auto euler = hand_trajectory({{0, 0}, {0.5, 0}, {0.5, 0.5}}, {{1, 0}, {0, 1}});
    CHECK(straightness(euler) == doctest::Approx(0.5));
}

TEST_CASE("Euler converges at first order for an affine field")
{
    // u(x, t) = -x + 1: exact endpoint 1 + (x0 - 1) e^{-1}
    const VelocityField affine = [](std::span<const double> x, double, std::span<double> out) {
        out[0] = -x[0] + 1.0;
    };
    const std::vector<double> x0{3.0};
    const double ref = euler_sample(affine, x0, 4096).endpoint()[0];
    double prev = std::abs(euler_sample(affine, x0, 8).endpoint()[0] - ref);
    for (int k : {16, 32, 64, 128}) {
        const double err = std::abs(euler_sample(affine, x0, k).endpoint()[0] - ref);
        CHECK(prev / err == doctest::Approx(2.0).epsilon(0.2));
        prev = err;
    }
}

TEST_CASE("Gaussian oracle field reproduces the target marginal")
{
    // u(x, t) = k(t) x transports N(0, s² + σ²) to N(0, s²)
    const double s = 1.0, sigma = 1.0;
    const VelocityField oracle = [&](std::span<const double> x, double t, std::span<double> out) {
        out[0] = gaussian_optimal_slope(t, s, sigma) * x[0];
    };
    Rng rng(3, "oracle_marginal");
    double acc = 0.0;
    const std::size_t n = 4000;
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = rng.normal(0.0, std::sqrt(s * s + sigma * sigma));
        const double x1 = euler_sample(oracle, std::vector<double>{x0}, 100).endpoint()[0];
        acc += x1 * x1;
    }
    CHECK(acc / n == doctest::Approx(s * s).epsilon(0.1));
}

TEST_CASE("inference initialization")
{
    const auto suite = default_task_suite(64);
    const auto inst = gen_instance(suite[1], 77);
    const double sigma = local_sigma(inst.x_src.values());

    const auto a = init_inference_state(inst, CouplingKind::independent, 5);
    CHECK(a == init_inference_state(inst, CouplingKind::independent, 5));
    CHECK(a.size() == 128);

    // noise energy around x_src in both halves ~ sigma²
    double acc = 0.0;
    const std::size_t seeds = 1000;
    for (std::size_t k = 0; k < seeds; ++k) {
        const auto x = init_inference_state(inst, CouplingKind::local_gaussian, derive_seed(1, "init", k));
        double half = 0.0;
        for (std::size_t i = 0; i < 64; ++i) {
            const double d = x[64 + i] - inst.x_src[i];
            half += d * d;
        }
        acc += half / 64.0;
    }
    CHECK(acc / seeds == doctest::Approx(sigma * sigma).epsilon(0.15));

    EditInstance flat = inst;
    flat.x_src.fill(0.4);
    const auto f = init_inference_state(flat, CouplingKind::local_gaussian, 9);
    for (std::size_t i = 0; i < 128; ++i) {
        CHECK(std::abs(f[i] - 0.4) < 1e-2);
    }
    CHECK_THROWS_AS(init_inference_state(inst, CouplingKind::minibatch_ot, 1), ContractViolation);
}

TEST_CASE("decode_edit returns the target half")
{
    const auto tr = hand_trajectory({{1, 2, 3, 4}}, {});
    EditInstance inst;
    inst.x_src = DenseArray({2}, 0.0);
    const auto out = decode_edit(tr, inst);
    CHECK(out == DenseArray::vector(std::vector<double>{3, 4}));
    const auto [zs, zt] = slice_outputs(tr.endpoint().values());
    CHECK(bitwise_equal(out.values(), zt));
}

TEST_CASE("exact single-pair field decodes onto the target")
{
    // the ideal field for one pair: v(x, t) = (x1 - x) / (1 - t)
    const EditInstance inst = gen_instance(default_task_suite(16)[1], 6, {16, 4});
    const DenseArray x1 = inst.joint();
    const VelocityField perfect = [&](std::span<const double> x, double t, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = (x1[i] - x[i]) / (1.0 - t);
        }
    };
    for (int k : {1, 5, 25}) {
        for (auto kind : {CouplingKind::local_gaussian, CouplingKind::independent}) {
            const DenseArray x0 = init_inference_state(inst, kind, 40 + k);
            const DenseArray edit = decode_edit(euler_sample(perfect, x0.values(), k), inst);
            double sq = 0.0;
            for (std::size_t i = 0; i < edit.size(); ++i) {
                sq += (edit[i] - inst.x_tgt[i]) * (edit[i] - inst.x_tgt[i]);
            }
            CHECK(std::sqrt(sq / static_cast<double>(edit.size())) < 1e-2);
        }
    }
}

TEST_CASE("trajectory csv layout")
{
    const auto tr = euler_sample(constant_field({1.0, 0.0}), std::vector<double>{0.0, 0.0}, 2);
    const std::string csv = trajectory_csv(tr);
    CHECK(csv.rfind("step,t,coordinate_index,value\n", 0) == 0);
    CHECK(csv.find("2,1,0,1\n") != std::string::npos);
    std::size_t lines = 0;
    for (char c : csv) {
        lines += c == '\n';
    }
    CHECK(lines == 1 + 3 * 2);
}
