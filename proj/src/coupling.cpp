#include "flowcouple/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "flowcouple/error.hpp"
#include "flowcouple/rng.hpp"
#include "flowcouple/sampler.hpp"

namespace flowcouple {

std::string_view to_string(CouplingKind kind)
{
    switch (kind) {
    case CouplingKind::independent:
        return "independent";
    case CouplingKind::local_gaussian:
        return "local_gaussian";
    case CouplingKind::minibatch_ot:
        return "minibatch_ot";
    }
    return "unknown";
}

CouplingKind parse_coupling_kind(std::string_view name)
{
    if (name == "independent") {
        return CouplingKind::independent;
    }
    if (name == "local_gaussian") {
        return CouplingKind::local_gaussian;
    }
    if (name == "minibatch_ot") {
        return CouplingKind::minibatch_ot;
    }
    throw ContractViolation("unknown coupling kind '" + std::string(name) + "'");
}

double element_std(std::span<const double> values)
{
    if (values.empty()) {
        throw ContractViolation("element_std: empty input");
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / static_cast<double>(values.size()));
}

double local_sigma(std::span<const double> x_src, double sigma_floor)
{
    return std::max(element_std(x_src), sigma_floor);
}

namespace {

// eps is recorded as the realized x0 - x1 so that x1 - x0 == -eps holds
// bitwise (IEEE subtraction is sign-symmetric).
void record_noise(CouplingSample& s)
{
    s.eps = DenseArray({s.x0.size()});
    for (std::size_t i = 0; i < s.x0.size(); ++i) {
        s.eps[i] = s.x0[i] - s.x1[i];
    }
}

} // namespace

CouplingSample local_gaussian_couple(std::span<const double> x1, double sigma, std::uint64_t rng_seed)
{
    if (x1.empty()) {
        throw ContractViolation("local_gaussian_couple: empty target");
    }
    if (!(sigma >= 0.0)) {
        throw ContractViolation("local_gaussian_couple: sigma must be >= 0");
    }
    Rng rng(rng_seed, "local_gaussian");
    CouplingSample s;
    s.kind = CouplingKind::local_gaussian;
    s.sigma = sigma;
    s.x1 = DenseArray::vector(x1);
    s.x0 = DenseArray({x1.size()});
    for (std::size_t i = 0; i < x1.size(); ++i) {
        s.x0[i] = x1[i] + rng.normal(0.0, sigma);
    }
    record_noise(s);
    return s;
}

CouplingSample local_gaussian_couple(const EditInstance& inst, std::uint64_t rng_seed, double sigma_floor)
{
    return local_gaussian_couple(inst.joint().values(), local_sigma(inst.x_src.values(), sigma_floor), rng_seed);
}

CouplingSample independent_couple(std::span<const double> x1, std::uint64_t rng_seed)
{
    Rng rng(rng_seed, "independent");
    CouplingSample s;
    s.kind = CouplingKind::independent;
    s.sigma = 1.0;
    s.x1 = DenseArray::vector(x1);
    s.x0 = DenseArray({x1.size()});
    rng.fill_normal(s.x0.values());
    record_noise(s);
    return s;
}

CouplingSample independent_couple(const EditInstance& inst, std::uint64_t rng_seed)
{
    return independent_couple(inst.joint().values(), rng_seed);
}

double snr(std::span<const double> x_tgt, double sigma)
{
    if (!(sigma > 0.0)) {
        throw ContractViolation("snr: sigma must be > 0");
    }
    if (x_tgt.empty()) {
        throw ContractViolation("snr: empty x_tgt");
    }
    double energy = 0.0;
    for (double v : x_tgt) {
        energy += v * v;
    }
    return energy / (sigma * sigma * static_cast<double>(x_tgt.size()));
}

FlowState interpolate(const CouplingSample& s, double t)
{
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ContractViolation("interpolate: t = " + std::to_string(t) + " outside [0, 1]");
    }
    FlowState state{DenseArray({s.x0.size()}), t};
    // Endpoints are copied so that t = 0 and t = 1 are exact.
    if (t == 0.0) {
        state.x_t = s.x0;
    } else if (t == 1.0) {
        state.x_t = s.x1;
    } else {
        for (std::size_t i = 0; i < s.x0.size(); ++i) {
            state.x_t[i] = (1.0 - t) * s.x0[i] + t * s.x1[i];
        }
    }
    return state;
}

// ---------------------------------------------------------------- assignment

namespace {

void check_square(const DenseArray& cost, std::size_t limit, const char* who)
{
    if (cost.rank() != 2 || cost.shape()[0] != cost.shape()[1]) {
        throw ContractViolation(std::string(who) + ": cost must be a square matrix");
    }
    if (cost.shape()[0] > limit) {
        throw ContractViolation(std::string(who) + ": batch size " + std::to_string(cost.shape()[0]) +
                                " exceeds limit " + std::to_string(limit));
    }
    if (!cost.all_finite()) {
        throw ContractViolation(std::string(who) + ": cost matrix contains non-finite entries");
    }
}

double tie_tolerance(const DenseArray& cost)
{
    double scale = 1.0;
    for (double c : cost) {
        scale = std::max(scale, std::abs(c));
    }
    return 1e-9 * scale;
}

} // namespace

double assignment_cost(const DenseArray& cost, const Permutation& perm)
{
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        total += cost.at(i, perm[i]);
    }
    return total;
}

Permutation brute_force_assign(const DenseArray& cost)
{
    check_square(cost, kMaxBruteForceSize, "brute_force_assign");
    const std::size_t n = cost.shape()[0];
    Permutation perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    if (n == 0) {
        return perm;
    }

    double best = std::numeric_limits<double>::infinity();
    Permutation p = perm;
    do {
        best = std::min(best, assignment_cost(cost, p));
    } while (std::next_permutation(p.begin(), p.end()));

    const double tol = tie_tolerance(cost);
    p = perm;
    do {
        if (assignment_cost(cost, p) <= best + tol) {
            return p;
        }
    } while (std::next_permutation(p.begin(), p.end()));
    return perm; // unreachable: the minimum is attained
}

Permutation solve_assignment(const DenseArray& cost)
{
    check_square(cost, kMaxAssignmentSize, "solve_assignment");
    const std::size_t n = cost.shape()[0];
    if (n == 0) {
        return {};
    }

    // Shortest augmenting path with row/column potentials, 1-indexed.
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Permutation row_to_col(n), col_to_row(n);
    for (std::size_t j = 1; j <= n; ++j) {
        row_to_col[owner[j] - 1] = j - 1;
        col_to_row[j - 1] = owner[j] - 1;
    }

    // Every optimal assignment uses only edges that are tight under the
    // optimal potentials. Walk rows in order and take the smallest tight
    // column that still admits a perfect matching on the remaining rows.
    const double tol = tie_tolerance(cost);
    auto tight = [&](std::size_t r, std::size_t c) { return cost.at(r, c) - u[r + 1] - v[c + 1] <= tol; };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (row_to_col[i] == j) {
                break;
            }
            if (!tight(i, j) || col_to_row[j] < i) {
                continue;
            }
            // Row r loses column j; find an alternating path for r that ends
            // at the column row i gives up, avoiding fixed rows and column j.
            const std::size_t freed = row_to_col[i];
            const std::size_t r = col_to_row[j];
            std::vector<bool> seen(n, false);
            seen[j] = true;
            std::vector<std::size_t> path_cols;
            auto augment = [&](auto&& self, std::size_t row) -> bool {
                for (std::size_t c = 0; c < n; ++c) {
                    if (seen[c] || !tight(row, c)) {
                        continue;
                    }
                    const std::size_t holder = col_to_row[c];
                    if (c != freed && holder <= i) {
                        continue;
                    }
                    seen[c] = true;
                    if (c == freed || self(self, holder)) {
                        path_cols.push_back(c);
                        row_to_col[row] = c;
                        return true;
                    }
                }
                return false;
            };
            if (augment(augment, r)) {
                row_to_col[i] = j;
                for (std::size_t row = 0; row < n; ++row) {
                    col_to_row[row_to_col[row]] = row;
                }
                break;
            }
        }
    }
    return row_to_col;
}

DenseArray squared_distance_cost(std::span<const DenseArray> x0_batch, std::span<const DenseArray> x1_batch)
{
    if (x0_batch.size() != x1_batch.size()) {
        throw ContractViolation("squared_distance_cost: batches differ in size");
    }
    const std::size_t n = x0_batch.size();
    DenseArray cost({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const DenseArray& a = x0_batch[i];
            const DenseArray& b = x1_batch[j];
            if (a.size() != b.size()) {
                throw ContractViolation("squared_distance_cost: vector length mismatch");
            }
            double d2 = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double d = a[k] - b[k];
                d2 += d * d;
            }
            cost.at(i, j) = d2;
        }
    }
    return cost;
}

Permutation minibatch_ot_couple(std::span<const DenseArray> x0_batch, std::span<const DenseArray> x1_batch)
{
    if (x0_batch.empty()) {
        throw ContractViolation("minibatch_ot_couple: batch must be nonempty");
    }
    if (x0_batch.size() > kMaxAssignmentSize) {
        throw ContractViolation("minibatch_ot_couple: batch size " + std::to_string(x0_batch.size()) +
                                " exceeds exact solver limit " + std::to_string(kMaxAssignmentSize));
    }
    return solve_assignment(squared_distance_cost(x0_batch, x1_batch));
}

std::vector<CouplingSample> ot_repair_batch(std::span<const CouplingSample> samples)
{
    std::vector<DenseArray> x0s, x1s;
    for (const auto& s : samples) {
        x0s.push_back(s.x0);
        x1s.push_back(s.x1);
    }
    const Permutation perm = minibatch_ot_couple(x0s, x1s);
    std::vector<CouplingSample> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        // x0 drawn in slot i is transported to target perm[i].
        CouplingSample& s = out[perm[i]];
        s.x0 = x0s[i];
        s.x1 = x1s[perm[i]];
        s.sigma = samples[i].sigma;
        s.kind = CouplingKind::minibatch_ot;
        record_noise(s);
    }
    return out;
}

std::vector<CouplingSample> reflow_pairs(const VelocityNet& net, std::span<const CouplingSample> samples,
                                         std::span<const DenseArray> contexts, int steps, ReflowTally* tally)
{
    if (steps < 1) {
        throw ContractViolation("reflow_pairs: steps must be >= 1");
    }
    if (contexts.size() != 1 && contexts.size() != samples.size()) {
        throw ContractViolation("reflow_pairs: need one context per sample or a single shared context");
    }
    ReflowTally local;
    std::vector<CouplingSample> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DenseArray& ctx = contexts.size() == 1 ? contexts[0] : contexts[i];
        const Trajectory traj = euler_sample(net, samples[i].x0.values(), ctx.values(), steps);
        if (!traj.valid) {
            ++local.dropped_non_finite;
            continue;
        }
        CouplingSample s = samples[i];
        s.x1 = traj.endpoint();
        record_noise(s);
        out.push_back(std::move(s));
        ++local.kept;
    }
    if (tally) {
        tally->kept += local.kept;
        tally->dropped_non_finite += local.dropped_non_finite;
    }
    return out;
}

} // namespace flowcouple
