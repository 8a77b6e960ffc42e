#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "flowcouple/coupling.hpp"
#include "flowcouple/numcore.hpp"

namespace flowcouple {

// Writes u(x, t) into `out` (same length as x).
using VelocityField = std::function<void(std::span<const double> x, double t, std::span<double> out)>;

VelocityField as_field(const VelocityNet& net, std::span<const double> context);

// states[k] is the state at t = k/K; velocities[k] was evaluated at states[k].
struct Trajectory {
    std::vector<FlowState> states;
    std::vector<DenseArray> velocities;
    int nfe = 0;
    bool valid = true;

    int steps() const noexcept { return static_cast<int>(velocities.size()); }
    const DenseArray& endpoint() const { return states.back().x_t; }
};

// independent: N(0, I) over both halves.
// local_gaussian: concat(x_src + e1, x_src + e2), e ~ N(0, sigma² I) with
// sigma = max(std(x_src), sigma_floor). The unknown target half starts from
// the source latent.
DenseArray init_inference_state(const EditInstance& inst, CouplingKind kind, std::uint64_t rng_seed,
                                double sigma_floor = kDefaultSigmaFloor);

// Explicit Euler on the uniform grid t_k = k/K: exactly K field evaluations.
// A non-finite velocity or state truncates the trajectory and marks it invalid.
Trajectory euler_sample(const VelocityField& field, std::span<const double> x0, int steps);
Trajectory euler_sample(const VelocityNet& net, std::span<const double> x0, std::span<const double> context,
                        int steps);

// Mean over k of ||v_k - (x_K - x_0)||².
double straightness(const Trajectory& traj);

// Target half of the final state.
DenseArray decode_edit(const Trajectory& traj, const EditInstance& inst);

// CSV columns: step,t,coordinate_index,value
std::string trajectory_csv(const Trajectory& traj);

} // namespace flowcouple
