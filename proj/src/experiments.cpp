#include "flowcouple/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "flowcouple/error.hpp"
#include "flowcouple/flowloss.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

// ------------------------------------------------------------ edit evaluation

std::vector<EditEvaluation> evaluate_edits(const VelocityNet& net, std::span<const EditInstance> instances,
                                           CouplingKind init, int steps, std::uint64_t seed, double sigma_floor)
{
    std::vector<EditEvaluation> out;
    out.reserve(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const EditInstance& inst = instances[i];
        const DenseArray x0 = init_inference_state(inst, init, derive_seed(seed, "eval_init", i), sigma_floor);
        const DenseArray ctx = inst.context();
        const Trajectory traj = euler_sample(net, x0.values(), ctx.values(), steps);
        EditEvaluation e;
        e.instance = i;
        e.task_id = inst.task_id;
        e.seed = inst.seed;
        e.nfe = traj.nfe;
        e.valid = traj.valid;
        if (traj.valid) {
            const DenseArray edited = decode_edit(traj, inst);
            e.metrics = edit_metrics(edited.values(), inst);
            e.over_edit = over_edit_index(edited.values(), inst);
        } else {
            const double inf = std::numeric_limits<double>::infinity();
            e.metrics = {inf, inf, 0.0};
            e.over_edit = inf;
        }
        out.push_back(e);
    }
    return out;
}

double mean_preserved_rmse(std::span<const EditEvaluation> evals, std::span<const EditInstance> instances)
{
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& e : evals) {
        const auto& mask = instances[e.instance].edit_mask;
        if (std::all_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
            continue;
        }
        acc += e.metrics.preserved_rmse;
        ++n;
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

double median(std::vector<double> values)
{
    if (values.empty()) {
        throw ContractViolation("median: empty input");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ------------------------------------------------ 1-D Gaussian field oracle

double gaussian_optimal_slope(double t, double s, double sigma)
{
    const double r = 1.0 - t;
    return -r * sigma * sigma / (s * s + r * r * sigma * sigma);
}

double regress_noise_slope(double t, double s, double sigma, std::size_t samples, std::uint64_t seed)
{
    Rng rng(seed, "noise_regression");
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double x1 = rng.normal(0.0, s);
        const double eps = rng.normal(0.0, sigma);
        const double xt = (1.0 - t) * (x1 + eps) + t * x1;
        sxy += xt * -eps;
        sxx += xt * xt;
    }
    return sxy / sxx;
}

namespace {

// Conditioning stub for the low-dimensional toys: d_s = d_t = d_v = 1.
EditInstance toy_instance()
{
    EditInstance inst;
    inst.x_src = DenseArray::vector(std::vector<double>{0.0});
    inst.x_tgt = DenseArray::vector(std::vector<double>{0.0});
    inst.x_text = DenseArray::vector(std::vector<double>{1.0});
    inst.x_vit = DenseArray::vector(std::vector<double>{0.0});
    inst.edit_mask = {true};
    return inst;
}

double cosine_lr(double base, long long step, long long total)
{
    const double progress = static_cast<double>(step) / static_cast<double>(std::max<long long>(total, 1));
    const double floor = 0.02;
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

} // namespace

GaussianFitResult fit_gaussian_field(const GaussianFitConfig& config)
{
    const EditInstance inst = toy_instance();
    const DenseArray ctx = inst.context();
    TrainConfig tc;
    tc.d_s = tc.d_t = tc.d_v = 1;
    tc.alpha = 0.0;
    tc.seed = config.seed;
    tc.batch_size = config.batch_size;
    tc.hidden = config.hidden;

    VelocityNet net(tc.net_config(), derive_seed(config.seed, "gaussian_net"));
    AdamState adam = AdamState::for_parameters(net.parameters(), config.learning_rate);

    for (long long step = 0; step < config.steps; ++step) {
        std::vector<TrainingPair> pairs;
        pairs.reserve(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            Rng rng(config.seed, "gaussian_data", static_cast<std::uint64_t>(step), i);
            const std::vector<double> x1 = {rng.normal(0.0, config.s), rng.normal(0.0, config.s)};
            pairs.push_back({local_gaussian_couple(x1, config.sigma, rng.engine()()), &inst});
        }
        adam.learning_rate = cosine_lr(config.learning_rate, step, config.steps);
        train_on_pairs(net, adam, pairs, step, tc);
    }

    GaussianFitResult result;
    for (std::size_t k = 0; k < config.probe_times.size(); ++k) {
        const double t = config.probe_times[k];
        Rng rng(config.seed, "gaussian_probe", k);
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < config.probe_samples; ++i) {
            std::vector<double> xt(2);
            for (double& v : xt) {
                const double x1 = rng.normal(0.0, config.s);
                const double eps = rng.normal(0.0, config.sigma);
                v = (1.0 - t) * (x1 + eps) + t * x1;
            }
            const DenseArray out = net.forward(xt, t, ctx.values());
            for (std::size_t c = 0; c < 2; ++c) {
                sxy += out[c] * xt[c];
                sxx += xt[c] * xt[c];
            }
        }
        const double analytic = gaussian_optimal_slope(t, config.s, config.sigma);
        const double fitted = sxy / sxx;
        result.times.push_back(t);
        result.analytic.push_back(analytic);
        result.fitted.push_back(fitted);
        result.regression.push_back(
            regress_noise_slope(t, config.s, config.sigma, 200000, derive_seed(config.seed, "regression", k)));
        result.max_relative_error = std::max(result.max_relative_error, std::abs(fitted - analytic) / std::abs(analytic));
    }
    return result;
}

// ------------------------------------------------------------ reflow toy

namespace {

std::vector<double> mixture_draw(Rng& rng)
{
    const double cx = rng.bernoulli(0.5) ? 3.0 : -3.0;
    return {cx + rng.normal(0.0, 0.5), rng.normal(0.0, 0.5)};
}

double median_straightness(const VelocityNet& net, const DenseArray& ctx, std::span<const DenseArray> starts,
                           int steps)
{
    std::vector<double> values;
    for (const auto& x0 : starts) {
        const Trajectory traj = euler_sample(net, x0.values(), ctx.values(), steps);
        if (traj.valid) {
            values.push_back(straightness(traj));
        }
    }
    return median(std::move(values));
}

} // namespace

ReflowToyResult run_reflow_toy(const ReflowToyConfig& config)
{
    const EditInstance inst = toy_instance();
    const DenseArray ctx = inst.context();
    TrainConfig tc;
    tc.d_s = tc.d_t = tc.d_v = 1;
    tc.alpha = 0.0;
    tc.seed = config.seed;
    tc.batch_size = config.batch_size;
    tc.hidden = config.hidden;

    std::vector<DenseArray> eval_starts;
    {
        Rng rng(config.seed, "reflow_eval");
        for (std::size_t i = 0; i < config.eval_draws; ++i) {
            DenseArray x0({2});
            rng.fill_normal(x0.values());
            eval_starts.push_back(std::move(x0));
        }
    }

    // Round 0: independent coupling with fresh draws every step.
    VelocityNet net0(tc.net_config(), derive_seed(config.seed, "reflow_net", 0));
    AdamState adam0 = AdamState::for_parameters(net0.parameters(), config.learning_rate);
    for (long long step = 0; step < config.steps; ++step) {
        std::vector<TrainingPair> pairs;
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            Rng rng(config.seed, "reflow_data", static_cast<std::uint64_t>(step), i);
            pairs.push_back({independent_couple(mixture_draw(rng), rng.engine()()), &inst});
        }
        adam0.learning_rate = cosine_lr(config.learning_rate, step, config.steps);
        train_on_pairs(net0, adam0, pairs, step, tc);
    }

    // Round 1: fixed pairs (x0, endpoint of round-0 flow from x0).
    std::vector<CouplingSample> starts;
    for (std::size_t i = 0; i < config.reflow_pairs; ++i) {
        Rng rng(config.seed, "reflow_starts", i);
        starts.push_back(independent_couple(mixture_draw(rng), rng.engine()()));
    }
    ReflowTally tally;
    const std::vector<DenseArray> shared{ctx};
    const auto reflowed = reflow_pairs(net0, starts, shared, config.reflow_steps, &tally);

    tc.seed = derive_seed(config.seed, "round1");
    VelocityNet net1(tc.net_config(), derive_seed(config.seed, "reflow_net", 1));
    AdamState adam1 = AdamState::for_parameters(net1.parameters(), config.learning_rate);
    for (long long step = 0; step < config.steps; ++step) {
        Rng pick(config.seed, "reflow_pick", static_cast<std::uint64_t>(step));
        std::vector<TrainingPair> pairs;
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            pairs.push_back({reflowed[pick.index(reflowed.size())], &inst});
        }
        adam1.learning_rate = cosine_lr(config.learning_rate, step, config.steps);
        train_on_pairs(net1, adam1, pairs, step, tc);
    }

    ReflowToyResult result;
    result.median_straightness_before = median_straightness(net0, ctx, eval_starts, config.eval_steps);
    result.median_straightness_after = median_straightness(net1, ctx, eval_starts, config.eval_steps);
    result.dropped = tally.dropped_non_finite;
    return result;
}

// ------------------------------------------------------ regime comparison

double RegimeComparisonResult::lgcc_median(int k) const
{
    const auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) {
        throw ContractViolation("regime comparison: K = " + std::to_string(k) + " was not evaluated");
    }
    const auto idx = static_cast<std::size_t>(it - ks.begin());
    std::vector<double> v;
    for (const auto& s : per_seed) {
        v.push_back(s.lgcc_preserved[idx]);
    }
    return median(std::move(v));
}

double RegimeComparisonResult::baseline_median(int k) const
{
    const auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) {
        throw ContractViolation("regime comparison: K = " + std::to_string(k) + " was not evaluated");
    }
    const auto idx = static_cast<std::size_t>(it - ks.begin());
    std::vector<double> v;
    for (const auto& s : per_seed) {
        v.push_back(s.baseline_preserved[idx]);
    }
    return median(std::move(v));
}

RegimeComparisonResult run_regime_comparison(const RegimeComparisonConfig& config, const ProgressFn& progress)
{
    const auto suite = default_task_suite(config.shape.d_s);
    RegimeComparisonResult result;
    result.ks = config.ks;

    for (std::size_t k = 0; k < config.seeds; ++k) {
        const std::uint64_t seed = derive_seed(config.base_seed, "regime_seed", k);
        const auto train = make_dataset(suite, config.train_per_task, seed, "train", config.shape);
        const auto eval = make_dataset(suite, config.eval_per_task, seed, "eval", config.shape);

        TrainConfig tc;
        tc.d_s = tc.d_t = config.shape.d_s;
        tc.d_v = config.shape.d_v;
        tc.batch_size = config.batch_size;
        tc.learning_rate = config.learning_rate;
        tc.hidden = config.hidden;
        tc.seed = seed;
        tc.threads = config.threads;

        tc.regime = CouplingRegime::curriculum;
        tc.alpha = config.alpha;
        const auto lgcc = train_run(tc, train, config.schedule);

        tc.regime = CouplingRegime::pure_independent;
        tc.alpha = 0.0;
        const auto baseline = train_run(tc, train, config.schedule);

        RegimeSeedResult sr;
        sr.seed = seed;
        for (int steps : config.ks) {
            const auto el = evaluate_edits(lgcc.net, eval, CouplingKind::local_gaussian, steps, seed);
            const auto eb = evaluate_edits(baseline.net, eval, CouplingKind::independent, steps, seed);
            sr.lgcc_preserved.push_back(mean_preserved_rmse(el, eval));
            sr.baseline_preserved.push_back(mean_preserved_rmse(eb, eval));
            double ed_l = 0.0, ed_b = 0.0;
            for (std::size_t i = 0; i < eval.size(); ++i) {
                ed_l += el[i].metrics.edited_rmse;
                ed_b += eb[i].metrics.edited_rmse;
            }
            sr.lgcc_edited.push_back(ed_l / static_cast<double>(eval.size()));
            sr.baseline_edited.push_back(ed_b / static_cast<double>(eval.size()));
        }
        if (progress) {
            std::ostringstream msg;
            msg << "seed " << (k + 1) << "/" << config.seeds << ":";
            for (std::size_t j = 0; j < config.ks.size(); ++j) {
                msg << " K=" << config.ks[j] << " lgcc " << format_fixed(sr.lgcc_preserved[j], 4) << " baseline "
                    << format_fixed(sr.baseline_preserved[j], 4);
            }
            progress(msg.str());
        }
        result.per_seed.push_back(std::move(sr));
    }
    return result;
}

// ------------------------------------------------------------ oracle suite

namespace {

OracleOutcome oracle_gradient(const OracleOptions& opt)
{
    OracleOutcome o{"gradient", true, {}};
    double worst_net = 0.0, worst_loss = 0.0;
    for (std::size_t draw = 0; draw < 50; ++draw) {
        Rng rng(opt.seed, "oracle_gradient", draw);
        const std::size_t d_s = 3;
        NetConfig nc{2 * d_s, d_s + 2, {6, 5}};
        const VelocityNet net(nc, rng.engine()());
        std::vector<double> x(2 * d_s), ctx(d_s + 2), up(2 * d_s);
        rng.fill_normal(x);
        rng.fill_normal(ctx);
        rng.fill_normal(up);
        const double t = rng.uniform();

        ParameterSet analytic = net.backward(x, t, ctx, up);
        if (opt.inject_failure && draw == 0) {
            analytic[0][0] += 1.0;
        }
        worst_net = std::max(worst_net, max_relative_error(analytic, finite_diff_grad(net, x, t, ctx, up, 1e-5)));

        // Full loss: d(fm + alpha ccl)/dθ through the network.
        EditInstance inst;
        inst.x_text = DenseArray::vector(std::span<const double>(ctx).first(d_s));
        CouplingSample s = independent_couple(std::vector<double>(x.begin(), x.end()), rng.engine()());
        const double alpha = 0.1 + rng.uniform();
        const ForwardPass pass = net.forward_pass(x, t, ctx);
        const DenseArray g = combined_loss_grad(pass.output, s, inst, alpha);
        ParameterSet loss_grad = zeros_like(net.parameters());
        net.accumulate_backward(pass, g.values(), loss_grad);

        VelocityNet probe = net;
        ParameterSet fd = zeros_like(net.parameters());
        for (std::size_t p = 0; p < fd.size(); ++p) {
            for (std::size_t i = 0; i < fd[p].size(); ++i) {
                const double saved = probe.parameters()[p][i];
                probe.parameters()[p][i] = saved + 1e-5;
                const double plus = combined_loss(probe.forward(x, t, ctx).values(), s, inst, alpha).total;
                probe.parameters()[p][i] = saved - 1e-5;
                const double minus = combined_loss(probe.forward(x, t, ctx).values(), s, inst, alpha).total;
                probe.parameters()[p][i] = saved;
                fd[p][i] = (plus - minus) / 2e-5;
            }
        }
        worst_loss = std::max(worst_loss, max_relative_error(loss_grad, fd));
    }
    o.passed = worst_net < 1e-4 && worst_loss < 1e-4;
    o.detail = "max rel error: net " + format_fixed(worst_net, 10) + ", combined loss " + format_fixed(worst_loss, 10) +
               " (limit 1e-4, 50 draws)";
    return o;
}

OracleOutcome oracle_ot(const OracleOptions& opt)
{
    OracleOutcome o{"ot", true, {}};
    std::size_t mismatches = 0;
    for (std::size_t trial = 0; trial < 1000; ++trial) {
        Rng rng(opt.seed, "oracle_ot", trial);
        const std::size_t n = 1 + trial % 7;
        DenseArray cost({n, n});
        const bool ties = trial % 3 == 0;
        for (double& c : cost) {
            c = ties ? static_cast<double>(rng.index(3)) : rng.uniform(0.0, 10.0);
        }
        if (solve_assignment(cost) != brute_force_assign(cost)) {
            ++mismatches;
        }
    }
    if (opt.inject_failure) {
        ++mismatches;
    }
    o.passed = mismatches == 0;
    o.detail = std::to_string(mismatches) + " mismatches in 1000 trials (B <= 7, every third trial tie-heavy)";
    return o;
}

OracleOutcome oracle_gaussian(const OracleOptions& opt)
{
    OracleOutcome o{"gaussian", true, {}};
    GaussianFitConfig cfg;
    cfg.seed = opt.seed;
    const auto r = fit_gaussian_field(cfg);
    std::ostringstream msg;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        msg << "k(" << r.times[i] << ") target " << format_fixed(r.analytic[i], 4) << " regression "
            << format_fixed(r.regression[i], 4) << " fitted " << format_fixed(r.fitted[i], 4) << "; ";
    }
    msg << "max rel error " << format_fixed(r.max_relative_error, 4) << " (limit 0.05)";
    o.passed = r.max_relative_error < 0.05 && !opt.inject_failure;
    o.detail = msg.str();
    return o;
}

// Two readings of "matched variances": the nominal sigma = 1 (every seed must
// land in range) and sigma estimated from an independent unit-variance
// source, where the extra estimation noise only allows a mean check.
OracleOutcome oracle_snr(const OracleOptions& opt)
{
    OracleOutcome o{"snr", true, {}};
    double lo = 1e9, hi = -1e9, est_sum = 0.0;
    const std::size_t seeds = 100;
    for (std::size_t k = 0; k < seeds; ++k) {
        Rng rng(opt.seed, "oracle_snr", k);
        std::vector<double> src(1024), tgt(1024);
        rng.fill_normal(tgt);
        rng.fill_normal(src);
        const double v = snr(tgt, 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        est_sum += snr(tgt, local_sigma(src));
    }
    const double est_mean = est_sum / static_cast<double>(seeds);
    o.passed = lo >= 0.85 && hi <= 1.15 && est_mean >= 0.85 && est_mean <= 1.15 && !opt.inject_failure;
    o.detail = "sigma=1: SNR range over 100 seeds [" + format_fixed(lo, 4) + ", " + format_fixed(hi, 4) +
               "]; sigma=std(x_src): mean " + format_fixed(est_mean, 4) + " (limit [0.85, 1.15])";
    return o;
}

OracleOutcome oracle_ccl(const OracleOptions& opt)
{
    OracleOutcome o{"ccl", true, {}};
    EditInstance inst;
    inst.x_text = DenseArray::vector(std::vector<double>{1.0, 0.0});
    const double aligned = ccl(std::vector<double>{0.0, 0.0, 2.0, 0.0}, inst);
    const double antipodal = ccl(std::vector<double>{0.0, 0.0, -2.0, 0.0}, inst);
    const double orthogonal = ccl(std::vector<double>{0.0, 0.0, 0.0, 3.0}, inst);
    o.passed = std::abs(aligned) < 1e-6 && std::abs(antipodal - 4.0) < 1e-6 && std::abs(orthogonal - 2.0) < 1e-6 &&
               !opt.inject_failure;
    o.detail = "aligned " + format_exact(aligned) + ", antipodal " + format_exact(antipodal) + ", orthogonal " +
               format_exact(orthogonal);
    return o;
}

OracleOutcome oracle_curriculum(const OracleOptions& opt)
{
    OracleOutcome o{"curriculum", true, {}};
    const CurriculumSchedule schedule;
    std::size_t warm = 0, main = 0;
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) {
        warm += choose_coupling(schedule, 0, derive_seed(opt.seed, "oracle_curriculum_w", i)) ==
                CouplingKind::local_gaussian;
        main += choose_coupling(schedule, 300, derive_seed(opt.seed, "oracle_curriculum_m", i)) ==
                CouplingKind::local_gaussian;
    }
    const double fw = static_cast<double>(warm) / n;
    const double fm = static_cast<double>(main) / n;
    o.passed = std::abs(fw - 0.25) <= 0.01 && std::abs(fm - 0.5) <= 0.01 && !opt.inject_failure;
    o.detail = "warmup local fraction " + format_fixed(fw, 4) + ", main " + format_fixed(fm, 4);
    return o;
}

} // namespace

std::vector<OracleOutcome> run_oracles(const OracleOptions& options)
{
    using Fn = OracleOutcome (*)(const OracleOptions&);
    const std::vector<std::pair<std::string, Fn>> all = {
        {"gradient", oracle_gradient}, {"ot", oracle_ot},   {"gaussian", oracle_gaussian},
        {"snr", oracle_snr},           {"ccl", oracle_ccl}, {"curriculum", oracle_curriculum},
    };
    std::vector<OracleOutcome> out;
    for (const auto& [name, fn] : all) {
        if (options.only.empty() || options.only == name) {
            out.push_back(fn(options));
        }
    }
    if (out.empty()) {
        throw ContractViolation("unknown oracle '" + options.only + "'");
    }
    return out;
}

} // namespace flowcouple
