#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowcouple/editlab.hpp"
#include "flowcouple/sampler.hpp"
#include "flowcouple/trainer.hpp"

namespace flowcouple {

// ------------------------------------------------------------ edit evaluation

struct EditEvaluation {
    std::size_t instance = 0;
    int task_id = 0;
    std::uint64_t seed = 0;
    int nfe = 0;
    bool valid = true;
    EditMetrics metrics;
    double over_edit = 0.0;
};

// Samples every instance from `init` with K Euler steps and scores the
// decoded target half. Initial noise keyed by (seed, "eval_init", index).
std::vector<EditEvaluation> evaluate_edits(const VelocityNet& net, std::span<const EditInstance> instances,
                                           CouplingKind init, int steps, std::uint64_t seed,
                                           double sigma_floor = kDefaultSigmaFloor);

// Mean preserved_rmse over instances that have preserved coordinates.
double mean_preserved_rmse(std::span<const EditEvaluation> evals, std::span<const EditInstance> instances);

double median(std::vector<double> values);

// ------------------------------------------------ 1-D Gaussian field oracle

// Optimal LGNC velocity slope for x1 ~ N(0, s²), x0 = x1 + N(0, sigma²):
// E[-eps | x_t] = k(t) x_t with k(t) = -(1-t) sigma² / (s² + (1-t)² sigma²).
double gaussian_optimal_slope(double t, double s, double sigma);

// Least-squares slope of -eps on x_t from `samples` Monte Carlo draws.
double regress_noise_slope(double t, double s, double sigma, std::size_t samples, std::uint64_t seed);

struct GaussianFitConfig {
    double s = 1.0;
    double sigma = 1.0;
    std::vector<std::size_t> hidden = {32, 32};
    std::size_t batch_size = 256;
    long long steps = 4000;
    double learning_rate = 1e-2;
    std::uint64_t seed = 7;
    std::vector<double> probe_times = {0.0, 0.25, 0.5, 0.75};
    std::size_t probe_samples = 4096;
};

struct GaussianFitResult {
    std::vector<double> times;
    std::vector<double> analytic;   // closed form
    std::vector<double> regression; // Monte Carlo regression of -eps on x_t
    std::vector<double> fitted;     // trained network slope
    double max_relative_error = 0.0; // fitted vs analytic
};

// Trains a velocity net on the two-coordinate (d_s = 1) LGNC Gaussian task
// with fixed sigma and measures the fitted slope at each probe time.
GaussianFitResult fit_gaussian_field(const GaussianFitConfig& config);

// ------------------------------------------------------------ reflow toy

struct ReflowToyConfig {
    std::uint64_t seed = 11;
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t batch_size = 128;
    long long steps = 1500;
    double learning_rate = 2e-3;
    std::size_t reflow_pairs = 2048;
    int reflow_steps = 50;
    int eval_steps = 20;
    std::size_t eval_draws = 256;
};

struct ReflowToyResult {
    double median_straightness_before = 0.0;
    double median_straightness_after = 0.0;
    std::size_t dropped = 0;
};

// x0 ~ N(0, I_2); x1 from an equal mixture of N((-3, 0), 0.25 I) and
// N((3, 0), 0.25 I). Round 0 trains on independent pairs, round 1 on the
// reflowed pairs of round 0.
ReflowToyResult run_reflow_toy(const ReflowToyConfig& config);

// ------------------------------------------------------ regime comparison

struct RegimeComparisonConfig {
    std::size_t seeds = 20;
    std::uint64_t base_seed = 2024;
    LatentShape shape{};
    std::size_t train_per_task = 128;
    std::size_t eval_per_task = 8;
    CurriculumSchedule schedule{};
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double alpha = kDefaultAlpha;
    std::vector<std::size_t> hidden = {128, 128};
    std::vector<int> ks = {5, 10, 50};
    std::size_t threads = 1;
};

struct RegimeSeedResult {
    std::uint64_t seed = 0;
    std::vector<double> lgcc_preserved;     // per K, curriculum LGNC + CCL, local init
    std::vector<double> baseline_preserved; // per K, independent coupling, independent init
    std::vector<double> lgcc_edited;
    std::vector<double> baseline_edited;
};

struct RegimeComparisonResult {
    std::vector<int> ks;
    std::vector<RegimeSeedResult> per_seed;

    // Median over seeds of the per-seed mean preserved RMSE at steps K.
    double lgcc_median(int k) const;
    double baseline_median(int k) const;
};

using ProgressFn = std::function<void(const std::string&)>;

RegimeComparisonResult run_regime_comparison(const RegimeComparisonConfig& config, const ProgressFn& progress = {});

// ------------------------------------------------------------ oracle suite

struct OracleOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct OracleOptions {
    std::string only;            // empty = all
    bool inject_failure = false; // corrupts one analytic gradient
    std::uint64_t seed = 1;
};

std::vector<OracleOutcome> run_oracles(const OracleOptions& options);

} // namespace flowcouple
