#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcouple/coupling.hpp"
#include "flowcouple/flowloss.hpp"
#include "flowcouple/numcore.hpp"

namespace flowcouple {

// Probability of drawing a local Gaussian coupling: warmup_local_frac for
// steps < warmup_steps, main_local_frac afterwards (including past max_steps).
struct CurriculumSchedule {
    long long warmup_steps = 300;
    double warmup_local_frac = 0.25;
    double main_local_frac = 0.5;
    long long max_steps = 1000;

    void validate() const;
    double local_frac(long long step) const;
};

enum class CouplingRegime { curriculum, pure_local, pure_independent, minibatch_ot };

std::string_view to_string(CouplingRegime regime);
CouplingRegime parse_regime(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double alpha = kDefaultAlpha;
    std::size_t d_s = 64;
    std::size_t d_t = 64;
    std::size_t d_v = 16;
    std::uint64_t seed = 0;
    CouplingRegime regime = CouplingRegime::curriculum;
    int reflow_rounds = 0;
    int reflow_steps = 25;
    std::vector<std::size_t> hidden = {128, 128};
    double sigma_floor = kDefaultSigmaFloor;
    long long checkpoint_interval = 100;
    bool record_wallclock = false;
    std::size_t threads = 1;

    void validate() const;
    NetConfig net_config() const { return {2 * d_s, d_t + d_v, hidden}; }
};

// Bernoulli draw with P(local_gaussian) = schedule.local_frac(step).
CouplingKind choose_coupling(const CurriculumSchedule& schedule, long long step, std::uint64_t rng_seed);

// A coupled pair together with the instance that supplies its conditioning.
struct TrainingPair {
    CouplingSample sample;
    const EditInstance* inst = nullptr;
};

struct StepStats {
    LossBreakdown loss;       // batch means
    std::size_t local_count = 0;
    std::size_t batch_size = 0;
};

// Builds the couplings for `batch` under config.regime (curriculum uses
// choose_coupling per instance). Randomness keyed by (seed, step, index).
std::vector<TrainingPair> build_pairs(std::span<const EditInstance> batch, const CurriculumSchedule& schedule,
                                      long long step, const TrainConfig& config);

// One optimizer step on fixed pairs: t ~ U[0,1] per pair, interpolate,
// forward, combined loss, gradients averaged in ascending pair order, one
// Adam update. Throws NonFiniteError (state untouched) on a non-finite loss.
StepStats train_on_pairs(VelocityNet& net, AdamState& adam, std::span<const TrainingPair> pairs, long long step,
                         const TrainConfig& config);

StepStats train_step(VelocityNet& net, AdamState& adam, std::span<const EditInstance> batch,
                     const CurriculumSchedule& schedule, long long step, const TrainConfig& config);

struct MetricsRow {
    long long step = 0;
    double fm_loss = 0.0;
    double ccl_loss = 0.0;
    double total_loss = 0.0;
    double local_frac_running = 0.0;
    double wallclock_ms = 0.0;
};

// Header: step,fm_loss,ccl_loss,total_loss,local_frac_running,wallclock_ms
std::string metrics_csv(std::span<const MetricsRow> rows);

struct PhaseCounts {
    std::size_t warmup_local = 0;
    std::size_t warmup_independent = 0;
    std::size_t main_local = 0;
    std::size_t main_independent = 0;
    std::size_t minibatch_ot = 0;
    std::size_t reflow = 0;
};

struct TrainRunResult {
    VelocityNet net;
    AdamState adam;
    std::vector<MetricsRow> metrics;
    PhaseCounts counts;
    std::vector<std::filesystem::path> outputs;
    double wallclock_ms = 0.0;
};

// Runs schedule.max_steps steps (plus reflow_rounds x max_steps on reflowed
// pairs). With a non-empty out_dir writes checkpoints/step_NNNNNN.fckp every
// checkpoint_interval steps, checkpoint.fckp and metrics.csv at the end.
// With zero steps only the initial checkpoint is written. On failure the
// last good state is checkpointed to checkpoint.partial.fckp and the error
// is rethrown.
TrainRunResult train_run(const TrainConfig& config, std::span<const EditInstance> dataset,
                         const CurriculumSchedule& schedule, const std::filesystem::path& out_dir = {});

} // namespace flowcouple
