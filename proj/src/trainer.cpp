#include "flowcouple/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "flowcouple/checkpoint.hpp"
#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

void CurriculumSchedule::validate() const
{
    auto frac_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!frac_ok(warmup_local_frac) || !frac_ok(main_local_frac)) {
        throw ContractViolation("curriculum: local fractions must lie in [0, 1]");
    }
    if (warmup_steps < 0 || max_steps < 0) {
        throw ContractViolation("curriculum: step counts must be >= 0");
    }
}

double CurriculumSchedule::local_frac(long long step) const
{
    return step < warmup_steps ? warmup_local_frac : main_local_frac;
}

std::string_view to_string(CouplingRegime regime)
{
    switch (regime) {
    case CouplingRegime::curriculum:
        return "curriculum";
    case CouplingRegime::pure_local:
        return "pure_local";
    case CouplingRegime::pure_independent:
        return "pure_independent";
    case CouplingRegime::minibatch_ot:
        return "minibatch_ot";
    }
    return "unknown";
}

CouplingRegime parse_regime(std::string_view name)
{
    for (auto r : {CouplingRegime::curriculum, CouplingRegime::pure_local, CouplingRegime::pure_independent,
                   CouplingRegime::minibatch_ot}) {
        if (to_string(r) == name) {
            return r;
        }
    }
    throw ContractViolation("unknown coupling regime '" + std::string(name) + "'");
}

void TrainConfig::validate() const
{
    if (batch_size < 1) {
        throw ContractViolation("train config: batch_size must be >= 1");
    }
    if (d_s < 1 || d_t < 1 || d_v < 1) {
        throw ContractViolation("train config: d_s, d_t and d_v must be >= 1");
    }
    if (d_t != d_s) {
        throw ContractViolation("train config: d_t (" + std::to_string(d_t) + ") must equal d_s (" +
                                std::to_string(d_s) + ")");
    }
    if (!(learning_rate >= 0.0) || !(alpha >= 0.0)) {
        throw ContractViolation("train config: learning_rate and alpha must be >= 0");
    }
    if (regime == CouplingRegime::minibatch_ot && batch_size > kMaxAssignmentSize) {
        throw ContractViolation("train config: minibatch_ot needs batch_size <= " + std::to_string(kMaxAssignmentSize));
    }
    if (reflow_rounds < 0 || reflow_steps < 1) {
        throw ContractViolation("train config: reflow_rounds must be >= 0 and reflow_steps >= 1");
    }
    if (threads < 1) {
        throw ContractViolation("train config: threads must be >= 1");
    }
}

CouplingKind choose_coupling(const CurriculumSchedule& schedule, long long step, std::uint64_t rng_seed)
{
    if (step < 0) {
        throw ContractViolation("choose_coupling: step must be >= 0");
    }
    Rng rng(rng_seed, "choose_coupling", static_cast<std::uint64_t>(step));
    return rng.bernoulli(schedule.local_frac(step)) ? CouplingKind::local_gaussian : CouplingKind::independent;
}

std::vector<TrainingPair> build_pairs(std::span<const EditInstance> batch, const CurriculumSchedule& schedule,
                                      long long step, const TrainConfig& config)
{
    const auto ustep = static_cast<std::uint64_t>(step);
    std::vector<TrainingPair> pairs;
    pairs.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const EditInstance& inst = batch[i];
        const std::uint64_t noise_seed = derive_seed(config.seed, "coupling_noise", ustep, i);
        CouplingKind kind = CouplingKind::independent;
        switch (config.regime) {
        case CouplingRegime::curriculum:
            kind = choose_coupling(schedule, step, derive_seed(config.seed, "coupling_choice", ustep, i));
            break;
        case CouplingRegime::pure_local:
            kind = CouplingKind::local_gaussian;
            break;
        case CouplingRegime::pure_independent:
        case CouplingRegime::minibatch_ot:
            kind = CouplingKind::independent;
            break;
        }
        TrainingPair pair;
        pair.inst = &inst;
        pair.sample = kind == CouplingKind::local_gaussian ? local_gaussian_couple(inst, noise_seed, config.sigma_floor)
                                                            : independent_couple(inst, noise_seed);
        pairs.push_back(std::move(pair));
    }
    if (config.regime == CouplingRegime::minibatch_ot) {
        std::vector<CouplingSample> samples;
        for (const auto& p : pairs) {
            samples.push_back(p.sample);
        }
        auto repaired = ot_repair_batch(samples);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            pairs[i].sample = std::move(repaired[i]);
        }
    }
    return pairs;
}

namespace {

struct PairResult {
    LossBreakdown loss;
    ParameterSet grads;
};

PairResult evaluate_pair(const VelocityNet& net, const TrainingPair& pair, double t, double alpha)
{
    const FlowState state = interpolate(pair.sample, t);
    const DenseArray context = pair.inst->context();
    const ForwardPass pass = net.forward_pass(state.x_t.values(), t, context.values());
    PairResult r;
    r.loss = combined_loss(pass.output, pair.sample, *pair.inst, alpha);
    const DenseArray g = combined_loss_grad(pass.output, pair.sample, *pair.inst, alpha);
    r.grads = zeros_like(net.parameters());
    net.accumulate_backward(pass, g.values(), r.grads);
    return r;
}

} // namespace

StepStats train_on_pairs(VelocityNet& net, AdamState& adam, std::span<const TrainingPair> pairs, long long step,
                         const TrainConfig& config)
{
    if (pairs.empty()) {
        throw ContractViolation("train_step: batch must be nonempty");
    }
    const std::size_t n = pairs.size();
    std::vector<double> times(n);
    for (std::size_t i = 0; i < n; ++i) {
        times[i] = Rng(config.seed, "flow_time", static_cast<std::uint64_t>(step), i).uniform();
    }

    // Per-pair results land in fixed slots; the reduction below always runs
    // in ascending pair order, so the worker count cannot change the sum.
    std::vector<PairResult> results(n);
    const std::size_t workers = std::min(config.threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            results[i] = evaluate_pair(net, pairs[i], times[i], config.alpha);
        }
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += workers) {
                    results[i] = evaluate_pair(net, pairs[i], times[i], config.alpha);
                }
            });
        }
    }

    StepStats stats;
    stats.batch_size = n;
    stats.loss.alpha = config.alpha;
    ParameterSet grads = zeros_like(net.parameters());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const PairResult& r = results[i];
        stats.loss.fm += r.loss.fm;
        stats.loss.ccl += r.loss.ccl;
        if (pairs[i].sample.kind == CouplingKind::local_gaussian) {
            ++stats.local_count;
        }
        for (std::size_t p = 0; p < grads.size(); ++p) {
            for (std::size_t k = 0; k < grads[p].size(); ++k) {
                grads[p][k] += r.grads[p][k];
            }
        }
    }
    stats.loss.fm *= inv_n;
    stats.loss.ccl *= inv_n;
    stats.loss.total = stats.loss.fm + config.alpha * stats.loss.ccl;
    if (!std::isfinite(stats.loss.total)) {
        throw NonFiniteError("train_step: non-finite loss at step " + std::to_string(step), step);
    }
    for (auto& g : grads) {
        for (double& v : g) {
            v *= inv_n;
        }
    }
    adam_step(net.parameters(), grads, adam);
    return stats;
}

StepStats train_step(VelocityNet& net, AdamState& adam, std::span<const EditInstance> batch,
                     const CurriculumSchedule& schedule, long long step, const TrainConfig& config)
{
    if (batch.empty()) {
        throw ContractViolation("train_step: batch must be nonempty");
    }
    const auto pairs = build_pairs(batch, schedule, step, config);
    return train_on_pairs(net, adam, pairs, step, config);
}

std::string metrics_csv(std::span<const MetricsRow> rows)
{
    std::string out = "step,fm_loss,ccl_loss,total_loss,local_frac_running,wallclock_ms\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + ',' + format_exact(r.fm_loss) + ',' + format_exact(r.ccl_loss) + ',' +
               format_exact(r.total_loss) + ',' + format_exact(r.local_frac_running) + ',' +
               format_exact(r.wallclock_ms) + '\n';
    }
    return out;
}

namespace {

std::string step_checkpoint_name(long long step)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "step_%06lld.fckp", step);
    return buf;
}

} // namespace

TrainRunResult train_run(const TrainConfig& config, std::span<const EditInstance> dataset,
                         const CurriculumSchedule& schedule, const std::filesystem::path& out_dir)
{
    config.validate();
    schedule.validate();
    if (dataset.empty() && schedule.max_steps > 0) {
        throw ContractViolation("train_run: dataset is empty");
    }

    using Clock = std::chrono::steady_clock;
    const auto started = Clock::now();
    auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - started).count(); };

    TrainRunResult result;
    result.net = VelocityNet(config.net_config(), derive_seed(config.seed, "net"));
    result.adam = AdamState::for_parameters(result.net.parameters(), config.learning_rate);
    const bool writing = !out_dir.empty();

    auto record_output = [&](const std::filesystem::path& p) {
        if (std::find(result.outputs.begin(), result.outputs.end(), p) == result.outputs.end()) {
            result.outputs.push_back(p);
        }
    };
    auto write_checkpoint = [&](const std::filesystem::path& p) {
        save_checkpoint(p, result.net, result.adam);
        record_output(p);
    };
    auto write_metrics = [&] {
        const auto p = out_dir / "metrics.csv";
        write_file_atomic(p, metrics_csv(result.metrics));
        record_output(p);
    };

    if (schedule.max_steps == 0 && config.reflow_rounds == 0) {
        if (writing) {
            write_checkpoint(out_dir / "checkpoint.fckp");
        }
        result.wallclock_ms = elapsed_ms();
        return result;
    }

    std::size_t local_total = 0, seen_total = 0;
    long long global_step = 0;
    auto log_step = [&](const StepStats& stats) {
        local_total += stats.local_count;
        seen_total += stats.batch_size;
        MetricsRow row;
        row.step = global_step;
        row.fm_loss = stats.loss.fm;
        row.ccl_loss = stats.loss.ccl;
        row.total_loss = stats.loss.total;
        row.local_frac_running = static_cast<double>(local_total) / static_cast<double>(seen_total);
        row.wallclock_ms = config.record_wallclock ? elapsed_ms() : 0.0;
        result.metrics.push_back(row);
        ++global_step;
        if (writing && config.checkpoint_interval > 0 && global_step % config.checkpoint_interval == 0) {
            write_checkpoint(out_dir / "checkpoints" / step_checkpoint_name(global_step));
        }
    };

    try {
        std::vector<EditInstance> batch;
        for (long long step = 0; step < schedule.max_steps; ++step) {
            batch.clear();
            Rng pick(config.seed, "batch", static_cast<std::uint64_t>(step));
            for (std::size_t b = 0; b < config.batch_size; ++b) {
                batch.push_back(dataset[pick.index(dataset.size())]);
            }
            const auto pairs = build_pairs(batch, schedule, step, config);
            for (const auto& p : pairs) {
                const bool warm = step < schedule.warmup_steps;
                switch (p.sample.kind) {
                case CouplingKind::local_gaussian:
                    ++(warm ? result.counts.warmup_local : result.counts.main_local);
                    break;
                case CouplingKind::independent:
                    ++(warm ? result.counts.warmup_independent : result.counts.main_independent);
                    break;
                case CouplingKind::minibatch_ot:
                    ++result.counts.minibatch_ot;
                    break;
                }
            }
            log_step(train_on_pairs(result.net, result.adam, pairs, global_step, config));
        }

        // Reflow: re-pair each instance's initial draw with the current
        // field's Euler endpoint, then keep training on the fixed pairs.
        for (int round = 1; round <= config.reflow_rounds; ++round) {
            std::vector<CouplingSample> starts;
            std::vector<DenseArray> contexts;
            const bool local = config.regime == CouplingRegime::curriculum || config.regime == CouplingRegime::pure_local;
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                const std::uint64_t s = derive_seed(config.seed, "reflow_noise", static_cast<std::uint64_t>(round), i);
                starts.push_back(local ? local_gaussian_couple(dataset[i], s, config.sigma_floor)
                                       : independent_couple(dataset[i], s));
                contexts.push_back(dataset[i].context());
            }
            ReflowTally tally;
            const auto reflowed = reflow_pairs(result.net, starts, contexts, config.reflow_steps, &tally);
            // reflow_pairs drops non-finite trajectories; keep instance links.
            std::vector<TrainingPair> pool;
            std::size_t next = 0;
            for (std::size_t i = 0; i < dataset.size() && next < reflowed.size(); ++i) {
                if (bitwise_equal(reflowed[next].x0.values(), starts[i].x0.values())) {
                    pool.push_back({reflowed[next++], &dataset[i]});
                }
            }
            if (pool.empty()) {
                throw NonFiniteError("train_run: every reflow trajectory diverged in round " + std::to_string(round),
                                     global_step);
            }
            for (long long step = 0; step < schedule.max_steps; ++step) {
                Rng pick(config.seed, "reflow_batch", static_cast<std::uint64_t>(global_step));
                std::vector<TrainingPair> batch;
                for (std::size_t b = 0; b < config.batch_size; ++b) {
                    batch.push_back(pool[pick.index(pool.size())]);
                }
                result.counts.reflow += batch.size();
                log_step(train_on_pairs(result.net, result.adam, batch, global_step, config));
            }
        }
    } catch (...) {
        if (writing) {
            try {
                write_checkpoint(out_dir / "checkpoint.partial.fckp");
                write_metrics();
            } catch (...) {
                // The original error is more informative.
            }
        }
        throw;
    }

    if (writing) {
        write_checkpoint(out_dir / "checkpoint.fckp");
        write_metrics();
    }
    result.wallclock_ms = elapsed_ms();
    return result;
}

} // namespace flowcouple
