#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "flowcouple/coupling.hpp"
#include "flowcouple/error.hpp"
#include "flowcouple/flowloss.hpp"
#include "flowcouple/rng.hpp"

using namespace flowcouple;

namespace {

EditInstance with_text(std::vector<double> text)
{
    EditInstance inst;
    const std::size_t d = text.size();
    inst.x_src = DenseArray({d}, 0.0);
    inst.x_tgt = DenseArray({d}, 0.0);
    inst.x_text = DenseArray::vector(std::move(text));
    inst.x_vit = DenseArray({1}, 0.0);
    inst.edit_mask.assign(d, true);
    return inst;
}

std::vector<double> pred_from(const std::vector<double>& z_src, const std::vector<double>& z_tgt)
{
    std::vector<double> p = z_src;
    p.insert(p.end(), z_tgt.begin(), z_tgt.end());
    return p;
}

// Central differences of a scalar function of pred.
template <class F>
std::vector<double> numeric_grad(F f, std::vector<double> x, double h = 1e-6)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double plus = f(x);
        x[i] = saved - h;
        const double minus = f(x);
        x[i] = saved;
        g[i] = (plus - minus) / (2 * h);
    }
    return g;
}

double rel(double a, double b)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

} // namespace

TEST_CASE("target velocity is -eps")
{
    CouplingSample s;
    s.x1 = DenseArray::vector(std::vector<double>{0.0, 0.0});
    s.x0 = DenseArray::vector(std::vector<double>{1.0, -2.0});
    s.eps = s.x0;
    CHECK(target_velocity(s) == DenseArray::vector(std::vector<double>{-1.0, 2.0}));

    s.x0 = s.x1;
    CHECK(target_velocity(s) == DenseArray({2}, 0.0));

    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng(k, "target");
        std::vector<double> x1(6);
        rng.fill_normal(x1, 5.0);
        const auto c = local_gaussian_couple(x1, 0.3, k);
        DenseArray neg = c.eps;
        for (double& v : neg) {
            v = -v;
        }
        CHECK(bitwise_equal(target_velocity(c).values(), neg.values()));
    }
}

TEST_CASE("fm loss is a mean over coordinates")
{
    const auto c = local_gaussian_couple(std::vector<double>{1, 2, 3, 4}, 0.5, 3);
    const DenseArray target = target_velocity(c);
    CHECK(fm_loss(target.values(), c) == 0.0);
    DenseArray off = target;
    for (double& v : off) {
        v += 1.0;
    }
    CHECK(fm_loss(off.values(), c) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(fm_loss(std::vector<double>{1.0}, c), ContractViolation);
}

TEST_CASE("fm loss with zero prediction estimates sigma squared")
{
    const double sigma = 0.7;
    double acc = 0.0;
    const std::size_t n = 10000;
    const std::vector<double> zero(4, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto c = local_gaussian_couple(std::vector<double>{1, -1, 0.5, 2}, sigma, derive_seed(2, "chi", k));
        acc += fm_loss(zero, c);
    }
    CHECK(acc / n == doctest::Approx(sigma * sigma).epsilon(0.1));
}

TEST_CASE("fm loss gradient")
{
    const auto c = independent_couple(std::vector<double>{0.1, 0.2, 0.3}, 4);
    const std::vector<double> pred{0.5, -1.0, 2.0};
    const auto g = fm_loss_grad(pred, c);
    const auto n = numeric_grad([&](const std::vector<double>& p) { return fm_loss(p, c); }, pred);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rel(g[i], n[i]) < 1e-7);
    }
}

TEST_CASE("slice_outputs splits halves")
{
    const std::vector<double> p{1, 2, 3, 4};
    const auto [a, b] = slice_outputs(p);
    CHECK(std::vector<double>(a.begin(), a.end()) == std::vector<double>{1, 2});
    CHECK(std::vector<double>(b.begin(), b.end()) == std::vector<double>{3, 4});
    CHECK(concat(a, b) == DenseArray::vector(p));
    CHECK_THROWS_AS(slice_outputs(std::vector<double>{1, 2, 3}), ContractViolation);

    const VelocityNet net({6, 2, {4}}, 12);
    const auto out = net.forward(std::vector<double>{1, 2, 3, 4, 5, 6}, 0.5, std::vector<double>{1, 1});
    const auto [zs, zt] = slice_outputs(out.values());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(zs[i] == out[i]);
        CHECK(zt[i] == out[3 + i]);
    }
}

TEST_CASE("ccl on aligned, antipodal and orthogonal directions")
{
    const auto inst = with_text({3.0, 4.0});
    CHECK(std::abs(ccl(pred_from({1, 1}, {1.6, 1.8}), inst)) < 1e-9);       // dz = 0.2·(3,4)
    CHECK(std::abs(ccl(pred_from({0, 0}, {-3, -4}), inst) - 4.0) < 1e-9);
    CHECK(std::abs(ccl(pred_from({2, 2}, {6, -1}), inst) - 2.0) < 1e-9);     // dz = (4, -3)
}

TEST_CASE("ccl range and scale invariance")
{
    for (std::uint64_t k = 0; k < 200; ++k) {
        Rng rng(k, "ccl_range");
        std::vector<double> text(5), pred(10);
        rng.fill_normal(text);
        rng.fill_normal(pred);
        const auto inst = with_text(text);
        const double v = ccl(pred, inst);
        CHECK(v >= 0.0);
        CHECK(v <= 4.0 + 1e-6);
        double norm = 0.0;
        for (double x : text) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        // rescaled to these norms; norm_eps shifts ccl by at most 4e-12 / norm
        for (double target : {1e-2, 0.5, 7.0, 1e4}) {
            std::vector<double> scaled = text;
            for (double& x : scaled) {
                x *= target / norm;
            }
            CHECK(std::abs(ccl(pred, with_text(scaled)) - v) < 1e-9);
        }
    }
}

TEST_CASE("ccl with zero delta is about one")
{
    const auto inst = with_text({1.0, 0.0});
    CHECK(ccl(pred_from({2, 3}, {2, 3}), inst) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ccl gradient matches finite differences")
{
    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng(k, "ccl_grad");
        std::vector<double> text(4), pred(8);
        rng.fill_normal(text);
        rng.fill_normal(pred);
        const auto inst = with_text(text);
        const auto g = ccl_backward(pred, inst);
        const auto n = numeric_grad([&](const std::vector<double>& p) { return ccl(p, inst); }, pred);
        double worst = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            worst = std::max(worst, rel(g[i], n[i]));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("ccl gradient vanishes when aligned; rescaling dz is second order")
{
    const auto inst = with_text({1.0, 2.0, -1.0});
    const auto aligned = pred_from({0, 0, 0}, {2, 4, -2});
    for (double v : ccl_backward(aligned, inst)) {
        CHECK(std::abs(v) < 1e-9);
    }

    const auto p = pred_from({0.1, 0.2, 0.3}, {1.0, -0.5, 0.25});
    const double base = ccl(p, inst);
    for (double c : {1e-3, 1e-4}) {
        auto q = p;
        for (std::size_t i = 0; i < 3; ++i) {
            q[3 + i] += c * (p[3 + i] - p[i]); // dz -> (1 + c) dz
        }
        CHECK(std::abs(ccl(q, inst) - base) < 10 * c * c);
    }
}

TEST_CASE("combined loss decomposition")
{
    const auto inst = with_text({1.0, 0.0});
    const auto c = independent_couple(std::vector<double>{0.3, 0.1, -0.2, 0.9}, 11);
    const std::vector<double> pred{0.1, 0.2, 0.3, 0.4};

    const auto zero = combined_loss(pred, c, inst, 0.0);
    CHECK(zero.total == zero.fm);
    CHECK(zero.ccl > 0.0); // still reported

    for (double alpha : {0.1, 0.37, 2.0}) {
        const auto lb = combined_loss(pred, c, inst, alpha);
        CHECK(lb.alpha == alpha);
        CHECK(lb.fm == fm_loss(pred, c));
        CHECK(lb.ccl == ccl(pred, inst));
        const double recomposed = lb.fm + alpha * lb.ccl;
        CHECK(std::memcmp(&recomposed, &lb.total, sizeof(double)) == 0);
    }
    CHECK_THROWS_AS(combined_loss(pred, c, inst, -0.1), ContractViolation);

    // fm = 0.5 and ccl = 2 (dz = (0, -2) against text (1, 0)) -> total 0.7
    CouplingSample still;
    still.x0 = DenseArray({4}, 0.0);
    still.x1 = DenseArray({4}, 0.0);
    still.eps = DenseArray({4}, 0.0);
    const auto lb = combined_loss(std::vector<double>{0, 1, 0, -1}, still, inst, 0.1);
    CHECK(lb.fm == 0.5);
    CHECK(lb.ccl == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(lb.total == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("combined loss gradient matches finite differences")
{
    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng(k, "combined_grad");
        std::vector<double> text(3), pred(6), x1(6);
        rng.fill_normal(text);
        rng.fill_normal(pred);
        rng.fill_normal(x1);
        const auto inst = with_text(text);
        const auto c = local_gaussian_couple(x1, 0.4, k);
        const double alpha = rng.uniform(0.0, 2.0);
        const auto g = combined_loss_grad(pred, c, inst, alpha);
        const auto n = numeric_grad([&](const std::vector<double>& p) { return combined_loss(p, c, inst, alpha).total; },
                                    pred);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            CHECK(rel(g[i], n[i]) < 1e-4);
        }
    }
}
