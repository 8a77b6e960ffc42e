// flowcouple: train / sample / eval / score / oracle front end.
// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "flowcouple/checkpoint.hpp"
#include "flowcouple/config.hpp"
#include "flowcouple/editlab.hpp"
#include "flowcouple/error.hpp"
#include "flowcouple/experiments.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/manifest.hpp"
#include "flowcouple/report.hpp"
#include "flowcouple/rng.hpp"
#include "flowcouple/scorebench.hpp"

namespace fs = std::filesystem;
using namespace flowcouple;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// Thrown for problems the user can fix on the command line.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SharedFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string steps;
    std::string regime;
    std::optional<double> alpha;
};

void add_shared(CLI::App* cmd, SharedFlags& f)
{
    cmd->add_option("--config", f.config, "key=value config file");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "master seed (overrides config)");
    cmd->add_option("--steps", f.steps, "train: optimizer steps; sample: Euler steps, comma list allowed");
    cmd->add_option("--regime", f.regime, "curriculum | pure_local | pure_independent | minibatch_ot");
    cmd->add_option("--alpha", f.alpha, "CCL weight (overrides config)");
}

std::size_t env_threads()
{
    const char* raw = std::getenv("FLOWCOUPLE_THREADS");
    if (raw == nullptr || *raw == '\0') {
        return 1;
    }
    long long n = 0;
    if (!parse_int(raw, n) || n < 1) {
        throw UsageError("FLOWCOUPLE_THREADS must be an integer >= 1, got '" + std::string(raw) + "'");
    }
    return static_cast<std::size_t>(n);
}

// Config file (if any) with command-line overrides applied on top.
RunConfig resolve_config(const SharedFlags& f, const fs::path& fallback_manifest = {})
{
    RunConfig c;
    if (!f.config.empty()) {
        if (!fs::exists(f.config)) {
            throw UsageError("config file '" + f.config + "' not found");
        }
        c = load_config(f.config);
    } else if (!fallback_manifest.empty() && fs::exists(fallback_manifest)) {
        c = read_manifest(fallback_manifest).config;
    }
    if (f.seed) {
        c.seed = *f.seed;
    }
    if (!f.regime.empty()) {
        set_config_value(c, "regime", f.regime);
    }
    if (f.alpha) {
        set_config_value(c, "alpha", format_exact(*f.alpha));
    }
    return c;
}

std::vector<int> parse_step_list(const std::string& text)
{
    std::vector<int> ks;
    for (const auto& part : split_csv_line(text)) {
        long long k = 0;
        if (!parse_int(part, k) || k < 1 || k > 100000) {
            throw UsageError("--steps: '" + part + "' is not a step count in [1, 100000]");
        }
        ks.push_back(static_cast<int>(k));
    }
    if (ks.empty()) {
        throw UsageError("--steps: empty list");
    }
    return ks;
}

double elapsed_ms(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// ---------------------------------------------------------------- train

int cmd_train(const SharedFlags& f)
{
    if (f.out.empty()) {
        throw UsageError("train: --out is required");
    }
    RunConfig c = resolve_config(f);
    if (!f.steps.empty()) {
        long long steps = 0;
        if (!parse_int(f.steps, steps) || steps < 0) {
            throw UsageError("train: --steps must be an integer >= 0");
        }
        c.max_steps = steps;
    }
    const std::size_t threads = env_threads();
    const auto started = std::chrono::steady_clock::now();

    const auto suite = default_task_suite(c.d_s);
    const auto dataset = make_dataset(suite, c.train_per_task, c.seed, "train", c.shape());
    const fs::path out = f.out;
    const auto result = train_run(c.train_config(threads), dataset, c.schedule(), out);

    RunManifest m;
    m.command = "train";
    m.config = c;
    m.arguments["threads"] = std::to_string(threads);
    m.counts = result.counts;
    m.outputs = result.outputs;
    m.wallclock_ms = elapsed_ms(started);
    write_manifest(out / "manifest.json", m);

    std::cout << "trained " << result.metrics.size() << " steps";
    if (!result.metrics.empty()) {
        const auto& last = result.metrics.back();
        std::cout << ", final fm " << format_fixed(last.fm_loss, 6) << " ccl " << format_fixed(last.ccl_loss, 6)
                  << " total " << format_fixed(last.total_loss, 6);
    }
    std::cout << "\nwrote " << (out / "manifest.json").string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- sample

int cmd_sample(const SharedFlags& f, const std::string& checkpoint, const std::string& init_name,
               std::size_t dump_trajectories)
{
    if (f.out.empty()) {
        throw UsageError("sample: --out is required");
    }
    if (checkpoint.empty() || !fs::is_regular_file(checkpoint)) {
        throw UsageError("sample: checkpoint '" + checkpoint + "' not found");
    }
    const fs::path ckpt_path = checkpoint;
    const RunConfig c = resolve_config(f, ckpt_path.parent_path() / "manifest.json");
    const std::vector<int> ks = parse_step_list(f.steps.empty() ? "25" : f.steps);
    CouplingKind init = c.inference_init();
    if (!init_name.empty()) {
        try {
            init = parse_coupling_kind(init_name);
        } catch (const ContractViolation& e) {
            throw UsageError(std::string("sample: --init: ") + e.what());
        }
        if (init == CouplingKind::minibatch_ot) {
            throw UsageError("sample: --init must be local_gaussian or independent");
        }
    }

    Checkpoint ck;
    try {
        ck = load_checkpoint(ckpt_path);
    } catch (const ParseError& e) {
        throw UsageError("sample: cannot load checkpoint: " + std::string(e.what()));
    }
    if (ck.net.config().state_dim != 2 * c.d_s || ck.net.config().context_dim != c.d_s + c.d_v) {
        throw UsageError("sample: checkpoint dimensions do not match config (d_s = " + std::to_string(c.d_s) +
                         ", d_v = " + std::to_string(c.d_v) + ")");
    }

    const auto started = std::chrono::steady_clock::now();
    const auto suite = default_task_suite(c.d_s);
    const auto instances = make_dataset(suite, c.eval_per_task, c.seed, "eval", c.shape());
    const fs::path out = f.out;
    RunManifest m;
    m.command = "sample";
    m.config = c;
    m.arguments["checkpoint"] = ckpt_path.string();
    m.arguments["init"] = std::string(to_string(init));
    m.arguments["steps"] = f.steps.empty() ? "25" : f.steps;

    for (int k : ks) {
        const auto evals = evaluate_edits(ck.net, instances, init, k, c.seed, c.sigma_floor);
        const fs::path p = out / ("metrics_K" + std::to_string(k) + ".csv");
        write_file_atomic(p, evaluation_csv(evals, instances));
        m.outputs.push_back(p);

        for (std::size_t i = 0; i < std::min(dump_trajectories, instances.size()); ++i) {
            const DenseArray x0 =
                init_inference_state(instances[i], init, derive_seed(c.seed, "eval_init", i), c.sigma_floor);
            const DenseArray ctx = instances[i].context();
            const auto traj = euler_sample(ck.net, x0.values(), ctx.values(), k);
            const fs::path tp =
                out / "trajectories" / ("K" + std::to_string(k) + "_instance" + std::to_string(i) + ".csv");
            write_file_atomic(tp, trajectory_csv(traj));
            m.outputs.push_back(tp);
        }

        const auto rows = parse_evaluation_csv(read_text_file(p));
        const auto s = summarize_rows(rows);
        std::cout << "K=" << k << " nfe=" << k << " instances=" << s.instances << " median preserved_rmse "
                  << format_fixed(s.median_preserved_rmse, 6) << " edited_rmse "
                  << format_fixed(s.median_edited_rmse, 6) << '\n';
    }
    m.wallclock_ms = elapsed_ms(started);
    write_manifest(out / "manifest.json", m);
    return kOk;
}

// ---------------------------------------------------------------- eval

std::map<int, fs::path> metrics_files(const fs::path& dir)
{
    if (!fs::is_directory(dir)) {
        throw UsageError("eval: '" + dir.string() + "' is not a directory");
    }
    static const std::regex pattern(R"(metrics_K([0-9]+)\.csv)");
    std::map<int, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch match;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, match, pattern)) {
            out[std::stoi(match[1].str())] = entry.path();
        }
    }
    if (out.empty()) {
        throw UsageError("eval: no metrics_K*.csv files in '" + dir.string() + "'");
    }
    return out;
}

int cmd_eval(const SharedFlags& f, const std::string& candidate, const std::string& baseline)
{
    if (candidate.empty() || baseline.empty()) {
        throw UsageError("eval: --candidate and --baseline are required");
    }
    const auto started = std::chrono::steady_clock::now();
    const auto cand_files = metrics_files(candidate);
    const auto base_files = metrics_files(baseline);
    std::vector<int> ks;
    for (const auto& [k, p] : cand_files) {
        ks.push_back(k);
    }
    for (const auto& [k, p] : base_files) {
        if (!cand_files.count(k)) {
            throw UsageError("eval: K=" + std::to_string(k) + " present only in the baseline");
        }
    }
    for (int k : ks) {
        if (!base_files.count(k)) {
            throw UsageError("eval: K=" + std::to_string(k) + " present only in the candidate");
        }
    }

    auto fmt = [](double v) { return format_fixed(v, 6); };
    std::string csv = "K,regime,instances,median_preserved_rmse,median_edited_rmse,median_over_edit_index,"
                      "over_edit_flagged\n";
    auto emit = [&](int k, const char* label, std::size_t n, double p, double e, double o, long long flagged) {
        csv += std::to_string(k) + ',' + label + ',' + std::to_string(n) + ',' + fmt(p) + ',' + fmt(e) + ',' + fmt(o) +
               ',' + std::to_string(flagged) + '\n';
    };
    for (int k : ks) {
        std::vector<EvaluationRow> a, b;
        try {
            a = parse_evaluation_csv(read_text_file(cand_files.at(k)));
            b = parse_evaluation_csv(read_text_file(base_files.at(k)));
        } catch (const ParseError& e) {
            throw UsageError("eval: K=" + std::to_string(k) + ": " + e.what());
        }
        if (!same_instances(a, b)) {
            throw UsageError("eval: K=" + std::to_string(k) + ": candidate and baseline cover different instances");
        }
        const auto sa = summarize_rows(a);
        const auto sb = summarize_rows(b);
        emit(k, "candidate", sa.instances, sa.median_preserved_rmse, sa.median_edited_rmse, sa.median_over_edit,
             static_cast<long long>(sa.over_edit_flagged));
        emit(k, "baseline", sb.instances, sb.median_preserved_rmse, sb.median_edited_rmse, sb.median_over_edit,
             static_cast<long long>(sb.over_edit_flagged));
        emit(k, "delta", 0, sa.median_preserved_rmse - sb.median_preserved_rmse,
             sa.median_edited_rmse - sb.median_edited_rmse, sa.median_over_edit - sb.median_over_edit,
             static_cast<long long>(sa.over_edit_flagged) - static_cast<long long>(sb.over_edit_flagged));
    }
    std::cout << csv;
    std::cout << "over_edit_index threshold " << format_fixed(kOverEditThreshold, 1) << '\n';

    if (!f.out.empty()) {
        const fs::path out = f.out;
        RunManifest m;
        m.command = "eval";
        m.config = resolve_config(f);
        m.arguments["candidate"] = candidate;
        m.arguments["baseline"] = baseline;
        m.outputs.push_back(out / "eval_report.csv");
        write_file_atomic(m.outputs.back(), csv);
        m.wallclock_ms = elapsed_ms(started);
        write_manifest(out / "manifest.json", m);
    }
    return kOk;
}

// ---------------------------------------------------------------- score

int cmd_score(const SharedFlags& f, const std::string& input)
{
    if (input.empty() || !fs::is_regular_file(input)) {
        throw UsageError("score: input file '" + input + "' not found");
    }
    const auto started = std::chrono::steady_clock::now();
    std::vector<ScoreReportRow> rows;
    try {
        rows = aggregate_file(input);
    } catch (const ParseError& e) {
        throw UsageError(input + ": " + e.what());
    }
    std::cout << score_report_table(rows);
    if (!f.out.empty()) {
        const fs::path out = f.out;
        RunManifest m;
        m.command = "score";
        m.config = resolve_config(f);
        m.arguments["input"] = input;
        m.outputs.push_back(out / "score_report.csv");
        write_file_atomic(m.outputs.back(), score_report_csv(rows));
        m.wallclock_ms = elapsed_ms(started);
        write_manifest(out / "manifest.json", m);
    }
    return kOk;
}

// ---------------------------------------------------------------- oracle

int cmd_oracle(const SharedFlags& f, const std::string& only, bool inject)
{
    OracleOptions opt;
    opt.only = only;
    opt.inject_failure = inject;
    opt.seed = f.seed.value_or(1);
    static const std::vector<std::string> known = {"gradient", "ot", "gaussian", "snr", "ccl", "curriculum"};
    if (!only.empty() && std::find(known.begin(), known.end(), only) == known.end()) {
        throw UsageError("oracle: unknown oracle '" + only + "'");
    }
    const auto started = std::chrono::steady_clock::now();
    const auto outcomes = run_oracles(opt);
    bool all = true;
    std::string csv = "oracle,passed,detail\n";
    for (const auto& o : outcomes) {
        std::cout << (o.passed ? "PASS " : "FAIL ") << o.name << ": " << o.detail << '\n';
        all = all && o.passed;
        csv += o.name + ',' + (o.passed ? "1" : "0") + ",\"" + o.detail + "\"\n";
    }
    if (!f.out.empty()) {
        const fs::path out = f.out;
        RunManifest m;
        m.command = "oracle";
        m.config = resolve_config(f);
        m.arguments["only"] = only;
        m.arguments["inject_failure"] = inject ? "true" : "false";
        m.outputs.push_back(out / "oracle_report.csv");
        write_file_atomic(m.outputs.back(), csv);
        m.wallclock_ms = elapsed_ms(started);
        write_manifest(out / "manifest.json", m);
    }
    return all ? kOk : kRuntime;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"flowcouple: coupled flow-matching editing toolkit"};
    app.require_subcommand(1);

    SharedFlags train_f, sample_f, eval_f, score_f, oracle_f;
    auto* train = app.add_subcommand("train", "train a velocity network");
    add_shared(train, train_f);

    auto* sample = app.add_subcommand("sample", "sample edits from a checkpoint");
    add_shared(sample, sample_f);
    std::string checkpoint, init_name;
    std::size_t dump = 0;
    sample->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    sample->add_option("--init", init_name, "local_gaussian | independent (default follows the regime)");
    sample->add_option("--trajectories", dump, "dump full trajectories for the first N instances");

    auto* eval = app.add_subcommand("eval", "compare two sampled runs");
    add_shared(eval, eval_f);
    std::string candidate, baseline;
    eval->add_option("--candidate", candidate, "sample output directory")->required();
    eval->add_option("--baseline", baseline, "sample output directory")->required();

    auto* score = app.add_subcommand("score", "aggregate judge scores");
    add_shared(score, score_f);
    std::string input;
    score->add_option("input", input, "CSV with header model,sc,pq,lsc,lpq")->required();

    auto* oracle = app.add_subcommand("oracle", "run the numerical oracle suite");
    add_shared(oracle, oracle_f);
    std::string only;
    bool inject = false;
    oracle->add_option("--only", only, "gradient | ot | gaussian | snr | ccl | curriculum");
    oracle->add_flag("--inject-failure", inject, "corrupt one analytic gradient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        env_threads(); // reject a bad FLOWCOUPLE_THREADS whatever the command
        if (*train) return cmd_train(train_f);
        if (*sample) return cmd_sample(sample_f, checkpoint, init_name, dump);
        if (*eval) return cmd_eval(eval_f, candidate, baseline);
        if (*score) return cmd_score(score_f, input);
        if (*oracle) return cmd_oracle(oracle_f, only, inject);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
