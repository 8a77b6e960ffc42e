#pragma once

#include <span>
#include <utility>

#include "flowcouple/coupling.hpp"
#include "flowcouple/numcore.hpp"

namespace flowcouple {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kDefaultAlpha = 0.1;

struct LossBreakdown {
    double fm = 0.0;
    double ccl = 0.0;
    double alpha = 0.0;
    double total = 0.0; // fm + alpha * ccl
};

// x1 - x0, which is -eps for every coupling kind.
DenseArray target_velocity(const CouplingSample& s);

// Mean over coordinates of (pred - target)².
double fm_loss(std::span<const double> pred, const CouplingSample& s);
DenseArray fm_loss_grad(std::span<const double> pred, const CouplingSample& s);

// (first half, second half) = (z_src, z_tgt)
std::pair<std::span<const double>, std::span<const double>> slice_outputs(std::span<const double> pred);

// Content consistency: || x_text/(|x_text|+e) - dz/(|dz|+e) ||² with
// dz = z_tgt - z_src. Range [0, 4].
double ccl(std::span<const double> pred, const EditInstance& inst);
DenseArray ccl_backward(std::span<const double> pred, const EditInstance& inst);

LossBreakdown combined_loss(std::span<const double> pred, const CouplingSample& s, const EditInstance& inst,
                            double alpha);

// d total / d pred
DenseArray combined_loss_grad(std::span<const double> pred, const CouplingSample& s, const EditInstance& inst,
                              double alpha);

} // namespace flowcouple
