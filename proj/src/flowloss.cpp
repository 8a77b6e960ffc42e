#include "flowcouple/flowloss.hpp"

#include <cmath>
#include <string>

#include "flowcouple/error.hpp"

namespace flowcouple {

namespace {

void check_pred(std::span<const double> pred, const CouplingSample& s)
{
    if (pred.size() != s.x1.size()) {
        throw ContractViolation("fm_loss: prediction has length " + std::to_string(pred.size()) + ", expected " +
                                std::to_string(s.x1.size()));
    }
}

double l2_norm(std::span<const double> v)
{
    double ss = 0.0;
    for (double x : v) {
        ss += x * x;
    }
    return std::sqrt(ss);
}

struct CclTerms {
    std::vector<double> text_hat;
    std::vector<double> delta;
    std::vector<double> delta_hat;
    double delta_norm = 0.0;
};

CclTerms ccl_terms(std::span<const double> pred, const EditInstance& inst)
{
    const auto [z_src, z_tgt] = slice_outputs(pred);
    if (inst.x_text.size() != z_src.size()) {
        throw ContractViolation("ccl: text embedding has dimension " + std::to_string(inst.x_text.size()) +
                                ", expected d_s = " + std::to_string(z_src.size()));
    }
    CclTerms terms;
    const std::size_t d = z_src.size();
    const double text_norm = l2_norm(inst.x_text.values());
    terms.text_hat.resize(d);
    terms.delta.resize(d);
    terms.delta_hat.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        terms.text_hat[i] = inst.x_text[i] / (text_norm + kNormEps);
        terms.delta[i] = z_tgt[i] - z_src[i];
    }
    terms.delta_norm = l2_norm(terms.delta);
    for (std::size_t i = 0; i < d; ++i) {
        terms.delta_hat[i] = terms.delta[i] / (terms.delta_norm + kNormEps);
    }
    return terms;
}

} // namespace

DenseArray target_velocity(const CouplingSample& s)
{
    DenseArray v({s.x1.size()});
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = s.x1[i] - s.x0[i];
    }
    return v;
}

double fm_loss(std::span<const double> pred, const CouplingSample& s)
{
    check_pred(pred, s);
    const DenseArray target = target_velocity(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        acc += r * r;
    }
    return acc / static_cast<double>(pred.size());
}

DenseArray fm_loss_grad(std::span<const double> pred, const CouplingSample& s)
{
    check_pred(pred, s);
    const DenseArray target = target_velocity(s);
    DenseArray g({pred.size()});
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        g[i] = scale * (pred[i] - target[i]);
    }
    return g;
}

std::pair<std::span<const double>, std::span<const double>> slice_outputs(std::span<const double> pred)
{
    if (pred.size() % 2 != 0) {
        throw ContractViolation("slice_outputs: prediction length " + std::to_string(pred.size()) + " is odd");
    }
    const std::size_t d = pred.size() / 2;
    return {pred.first(d), pred.subspan(d, d)};
}

double ccl(std::span<const double> pred, const EditInstance& inst)
{
    const CclTerms terms = ccl_terms(pred, inst);
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.delta.size(); ++i) {
        const double r = terms.text_hat[i] - terms.delta_hat[i];
        acc += r * r;
    }
    return acc;
}

DenseArray ccl_backward(std::span<const double> pred, const EditInstance& inst)
{
    const CclTerms terms = ccl_terms(pred, inst);
    const std::size_t d = terms.delta.size();

    // L = |a - b|², b = dz / (n + e), n = |dz|.
    // dL/db = 2 (b - a); db/ddz = I/(n+e) - dz dzᵀ / (n (n+e)²).
    std::vector<double> g_hat(d);
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        g_hat[i] = 2.0 * (terms.delta_hat[i] - terms.text_hat[i]);
        proj += terms.delta[i] * g_hat[i];
    }
    const double n = terms.delta_norm;
    const double inv = 1.0 / (n + kNormEps);
    const double radial = n > 0.0 ? proj / (n * (n + kNormEps)) : 0.0;

    DenseArray grad({2 * d});
    for (std::size_t i = 0; i < d; ++i) {
        const double g_delta = inv * (g_hat[i] - terms.delta[i] * radial);
        grad[i] = -g_delta;
        grad[d + i] = g_delta;
    }
    return grad;
}

LossBreakdown combined_loss(std::span<const double> pred, const CouplingSample& s, const EditInstance& inst,
                            double alpha)
{
    if (!(alpha >= 0.0)) {
        throw ContractViolation("combined_loss: alpha must be >= 0");
    }
    LossBreakdown out;
    out.fm = fm_loss(pred, s);
    out.ccl = ccl(pred, inst);
    out.alpha = alpha;
    out.total = out.fm + alpha * out.ccl;
    return out;
}

DenseArray combined_loss_grad(std::span<const double> pred, const CouplingSample& s, const EditInstance& inst,
                              double alpha)
{
    if (!(alpha >= 0.0)) {
        throw ContractViolation("combined_loss: alpha must be >= 0");
    }
    DenseArray g = fm_loss_grad(pred, s);
    if (alpha > 0.0) {
        const DenseArray gc = ccl_backward(pred, inst);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += alpha * gc[i];
        }
    }
    return g;
}

} // namespace flowcouple
