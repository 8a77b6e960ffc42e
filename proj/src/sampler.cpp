#include "flowcouple/sampler.hpp"

#include <cmath>
#include <string>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

VelocityField as_field(const VelocityNet& net, std::span<const double> context)
{
    return [&net, context](std::span<const double> x, double t, std::span<double> out) {
        const ForwardPass pass = net.forward_pass(x, t, context);
        std::copy(pass.output.begin(), pass.output.end(), out.begin());
    };
}

DenseArray init_inference_state(const EditInstance& inst, CouplingKind kind, std::uint64_t rng_seed,
                                double sigma_floor)
{
    const std::size_t d = inst.latent_dim();
    Rng rng(rng_seed, "inference_init");
    DenseArray x0({2 * d});
    switch (kind) {
    case CouplingKind::independent:
        rng.fill_normal(x0.values());
        break;
    case CouplingKind::local_gaussian: {
        const double sigma = local_sigma(inst.x_src.values(), sigma_floor);
        for (std::size_t half = 0; half < 2; ++half) {
            for (std::size_t i = 0; i < d; ++i) {
                x0[half * d + i] = inst.x_src[i] + rng.normal(0.0, sigma);
            }
        }
        break;
    }
    default:
        throw ContractViolation("init_inference_state: kind must be independent or local_gaussian, got " +
                                std::string(to_string(kind)));
    }
    return x0;
}

Trajectory euler_sample(const VelocityField& field, std::span<const double> x0, int steps)
{
    if (steps < 1) {
        throw ContractViolation("euler_sample: steps must be >= 1, got " + std::to_string(steps));
    }
    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.velocities.reserve(static_cast<std::size_t>(steps));
    traj.states.push_back({DenseArray::vector(x0), 0.0});

    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const FlowState& cur = traj.states.back();
        DenseArray v({x0.size()});
        field(cur.x_t.values(), cur.t, v.values());
        ++traj.nfe;
        if (!v.all_finite()) {
            traj.valid = false;
            return traj;
        }
        DenseArray next = cur.x_t;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] += dt * v[i];
        }
        traj.velocities.push_back(std::move(v));
        if (!next.all_finite()) {
            traj.valid = false;
            return traj;
        }
        const double t_next = (k + 1 == steps) ? 1.0 : static_cast<double>(k + 1) / steps;
        traj.states.push_back({std::move(next), t_next});
    }
    return traj;
}

Trajectory euler_sample(const VelocityNet& net, std::span<const double> x0, std::span<const double> context,
                        int steps)
{
    return euler_sample(as_field(net, context), x0, steps);
}

double straightness(const Trajectory& traj)
{
    if (!traj.valid || traj.velocities.empty() || traj.states.size() != traj.velocities.size() + 1) {
        throw ContractViolation("straightness: trajectory is invalid or truncated");
    }
    const DenseArray& first = traj.states.front().x_t;
    const DenseArray& last = traj.states.back().x_t;
    double total = 0.0;
    for (const DenseArray& v : traj.velocities) {
        double sq = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d = v[i] - (last[i] - first[i]);
            sq += d * d;
        }
        total += sq;
    }
    return total / static_cast<double>(traj.velocities.size());
}

DenseArray decode_edit(const Trajectory& traj, const EditInstance& inst)
{
    if (!traj.valid) {
        throw ContractViolation("decode_edit: trajectory is invalid");
    }
    const DenseArray& end = traj.endpoint();
    const std::size_t d = inst.latent_dim();
    if (end.size() != 2 * d) {
        throw ContractViolation("decode_edit: final state has length " + std::to_string(end.size()) +
                                ", expected " + std::to_string(2 * d));
    }
    return DenseArray::vector(end.values().subspan(d, d));
}

std::string trajectory_csv(const Trajectory& traj)
{
    std::string out = "step,t,coordinate_index,value\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const FlowState& s = traj.states[k];
        for (std::size_t i = 0; i < s.x_t.size(); ++i) {
            out += std::to_string(k) + ',' + format_exact(s.t) + ',' + std::to_string(i) + ',' +
                   format_exact(s.x_t[i]) + '\n';
        }
    }
    return out;
}

} // namespace flowcouple
