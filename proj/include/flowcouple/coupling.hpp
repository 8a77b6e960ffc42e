#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcouple/numcore.hpp"

namespace flowcouple {

inline constexpr double kDefaultSigmaFloor = 1e-3;

// One source/target latent pair plus its conditioning. Each image half is a
// single d_s-vector (one patch block per half).
struct EditInstance {
    DenseArray x_src;  // [d_s]
    DenseArray x_tgt;  // [d_s]
    DenseArray x_text; // [d_t], d_t == d_s
    DenseArray x_vit;  // [d_v]
    std::vector<bool> edit_mask; // [d_s], true on edited coordinates
    int task_id = 0;
    std::uint64_t seed = 0;

    std::size_t latent_dim() const noexcept { return x_src.size(); }

    // concat(x_src, x_tgt)
    DenseArray joint() const { return concat(x_src.values(), x_tgt.values()); }
    // concat(x_text, x_vit), the conditioning the velocity net sees.
    DenseArray context() const { return concat(x_text.values(), x_vit.values()); }
};

enum class CouplingKind { independent, local_gaussian, minibatch_ot };

std::string_view to_string(CouplingKind kind);
CouplingKind parse_coupling_kind(std::string_view name);

// Invariant for every kind: x1 - x0 == -eps bitwise. eps is stored as the
// realized difference x0 - x1, never as the pre-rounding draw.
struct CouplingSample {
    DenseArray x0;
    DenseArray x1;
    DenseArray eps;
    double sigma = 0.0;
    CouplingKind kind = CouplingKind::independent;
};

struct FlowState {
    DenseArray x_t;
    double t = 0.0;
};

// Population standard deviation over all elements.
double element_std(std::span<const double> values);

// max(element_std(x_src), floor)
double local_sigma(std::span<const double> x_src, double sigma_floor = kDefaultSigmaFloor);

// x0 = x1 + N(0, sigma² I). Lower-level form used when sigma is given.
CouplingSample local_gaussian_couple(std::span<const double> x1, double sigma, std::uint64_t rng_seed);

// Local Gaussian noise coupling of concat(x_src, x_tgt) with
// sigma = max(std(x_src), sigma_floor).
CouplingSample local_gaussian_couple(const EditInstance& inst, std::uint64_t rng_seed,
                                     double sigma_floor = kDefaultSigmaFloor);

// x0 ~ N(0, I), independent of x1.
CouplingSample independent_couple(std::span<const double> x1, std::uint64_t rng_seed);
CouplingSample independent_couple(const EditInstance& inst, std::uint64_t rng_seed);

// ||x_tgt||² / (sigma² · d_z)
double snr(std::span<const double> x_tgt, double sigma);

// x_t = (1 - t) x0 + t x1
FlowState interpolate(const CouplingSample& s, double t);

// ---------------------------------------------------------------- assignment

inline constexpr std::size_t kMaxAssignmentSize = 64;
inline constexpr std::size_t kMaxBruteForceSize = 8;

// perm[i] = column assigned to row i
using Permutation = std::vector<std::size_t>;

// Sum of cost(i, perm[i]) in ascending row order.
double assignment_cost(const DenseArray& cost, const Permutation& perm);

// Exact minimum-cost assignment (Hungarian / Kuhn-Munkres with potentials).
// Among optimal assignments the lexicographically smallest is returned.
// Square cost matrices up to kMaxAssignmentSize.
Permutation solve_assignment(const DenseArray& cost);

// Exhaustive search over all B! permutations in lexicographic order; first
// permutation within tolerance of the minimum wins. B <= kMaxBruteForceSize.
Permutation brute_force_assign(const DenseArray& cost);

// Squared Euclidean cost between two batches of equal-length vectors.
DenseArray squared_distance_cost(std::span<const DenseArray> x0_batch, std::span<const DenseArray> x1_batch);

// Minibatch OT pairing: perm[i] = index of the x1 matched to x0_batch[i].
Permutation minibatch_ot_couple(std::span<const DenseArray> x0_batch, std::span<const DenseArray> x1_batch);

// Re-pairs the noise draws of `samples` (any kind) with their targets by
// minibatch OT. x1 stays with its slot so instance conditioning is kept;
// x0 moves. Result kind is minibatch_ot.
std::vector<CouplingSample> ot_repair_batch(std::span<const CouplingSample> samples);

// ---------------------------------------------------------------- reflow

struct ReflowTally {
    std::size_t kept = 0;
    std::size_t dropped_non_finite = 0;
};

// Replaces each x1 with the K-step Euler endpoint of `net` started from x0.
// contexts has one entry per sample, or a single shared entry.
std::vector<CouplingSample> reflow_pairs(const VelocityNet& net, std::span<const CouplingSample> samples,
                                         std::span<const DenseArray> contexts, int steps, ReflowTally* tally = nullptr);

} // namespace flowcouple
