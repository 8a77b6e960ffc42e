#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "flowcouple/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

const fs::path& root()
{
    static const fs::path r = [] {
        const fs::path p = fs::temp_directory_path() / "flowcouple_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return r;
}

Run run(const std::string& args)
{
    static int counter = 0;
    const fs::path log = root() / ("out_" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string(FLOWCOUPLE_BIN) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = flowcouple::read_text_file(log);
    return r;
}

bool contains(const std::string& hay, const std::string& needle)
{
    return hay.find(needle) != std::string::npos;
}

// tiny model so every command finishes in well under a second
fs::path small_config()
{
    const fs::path p = root() / "small.cfg";
    if (!fs::exists(p)) {
        flowcouple::write_file_atomic(p, "seed = 3\nd_s = 16\nd_v = 4\nhidden = 16\nbatch_size = 4\n"
                                         "max_steps = 6\ncheckpoint_interval = 0\ntrain_per_task = 2\n"
                                         "eval_per_task = 2\n");
    }
    return p;
}

std::string slurp(const fs::path& p)
{
    return flowcouple::read_text_file(p);
}

std::size_t count_lines(const std::string& s)
{
    std::size_t n = 0;
    for (char c : s) {
        n += c == '\n';
    }
    return n;
}

} // namespace

TEST_CASE("no arguments and unknown flags are usage errors")
{
    CHECK(run("").code == 2);
    CHECK(run("train --bogus").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("train with zero steps writes the checkpoint and a manifest")
{
    const fs::path out = root() / "zero";
    const auto r = run("train --out " + out.string() + " --steps 0");
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "checkpoint.fckp"));
    CHECK_FALSE(fs::exists(out / "metrics.csv"));
    CHECK_FALSE(fs::exists(out / "checkpoints"));
    const std::string manifest = slurp(out / "manifest.json");
    CHECK(contains(manifest, "\"warmup_steps\": \"300\""));
    CHECK(contains(manifest, "\"warmup_local_frac\": \"0.25\""));
    CHECK(contains(manifest, "\"main_local_frac\": \"0.5\""));
    CHECK(contains(manifest, "\"version\": \"flowcouple 0.1.0\""));
}

TEST_CASE("train is reproducible from a config file")
{
    const fs::path a = root() / "train_a";
    const fs::path b = root() / "train_b";
    REQUIRE(run("train --config " + small_config().string() + " --out " + a.string()).code == 0);
    REQUIRE(run("train --config " + small_config().string() + " --out " + b.string()).code == 0);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "checkpoint.fckp") == slurp(b / "checkpoint.fckp"));
    CHECK(count_lines(slurp(a / "metrics.csv")) == 7);

    const fs::path c = root() / "train_c";
    REQUIRE(run("train --config " + small_config().string() + " --out " + c.string() + " --seed 4").code == 0);
    CHECK(slurp(a / "metrics.csv") != slurp(c / "metrics.csv"));
}

TEST_CASE("config errors exit 2 and name the key")
{
    const fs::path cfg = root() / "bad.cfg";
    flowcouple::write_file_atomic(cfg, "learning_rte = 0.1\n");
    const auto r = run("train --config " + cfg.string() + " --out " + (root() / "bad").string());
    CHECK(r.code == 2);
    CHECK(contains(r.output, "learning_rte"));
    CHECK(run("train --config " + (root() / "missing.cfg").string() + " --out x").code == 2);
    CHECK(run("train --regime sideways --out " + (root() / "bad").string()).code == 2);
    CHECK(run("train --steps -1 --out " + (root() / "bad").string()).code == 2);
    CHECK(run("train --steps 1").code == 2); // no --out
}

TEST_CASE("sample writes one metrics file per step count")
{
    const fs::path trained = root() / "train_a";
    if (!fs::exists(trained / "checkpoint.fckp")) {
        REQUIRE(run("train --config " + small_config().string() + " --out " + trained.string()).code == 0);
    }
    const fs::path out = root() / "sample";
    const auto r = run("sample --checkpoint " + (trained / "checkpoint.fckp").string() + " --out " + out.string() +
                       " --steps 1,2,25 --trajectories 1");
    REQUIRE(r.code == 0);
    CHECK(contains(r.output, "K=25 nfe=25"));
    for (int k : {1, 2, 25}) {
        const std::string csv = slurp(out / ("metrics_K" + std::to_string(k) + ".csv"));
        CHECK(count_lines(csv) == 1 + 8);
        CHECK(contains(csv, "," + std::to_string(k) + ",1,"));
        CHECK(fs::exists(out / "trajectories" / ("K" + std::to_string(k) + "_instance0.csv")));
    }
    CHECK(count_lines(slurp(out / "trajectories" / "K25_instance0.csv")) == 1 + 26 * 32); // long format, d = 2 * 16

    const fs::path def = root() / "sample_default";
    REQUIRE(run("sample --checkpoint " + (trained / "checkpoint.fckp").string() + " --out " + def.string()).code == 0);
    CHECK(fs::exists(def / "metrics_K25.csv"));
    CHECK(slurp(def / "metrics_K25.csv") == slurp(out / "metrics_K25.csv"));
}

TEST_CASE("sample rejects missing or broken checkpoints")
{
    const fs::path out = root() / "sample_bad";
    CHECK(run("sample --checkpoint " + (root() / "nope.fckp").string() + " --out " + out.string()).code == 2);
    const fs::path junk = root() / "junk.fckp";
    flowcouple::write_file_atomic(junk, "FCKPjunk");
    const auto r = run("sample --checkpoint " + junk.string() + " --out " + out.string());
    CHECK(r.code == 2);
    CHECK(contains(r.output, "byte offset"));
    CHECK(run("sample --checkpoint " + (root() / "train_a" / "checkpoint.fckp").string() + " --out " + out.string() +
              " --steps 0")
              .code == 2);
    CHECK(run("sample --checkpoint " + (root() / "train_a" / "checkpoint.fckp").string() + " --out " + out.string() +
              " --init sinkhorn")
              .code == 2);
}

TEST_CASE("eval compares two sample directories")
{
    const fs::path s = root() / "sample";
    REQUIRE(fs::exists(s / "metrics_K25.csv"));
    const fs::path out = root() / "eval_same";
    const auto r = run("eval --candidate " + s.string() + " --baseline " + s.string() + " --out " + out.string());
    REQUIRE(r.code == 0);
    const std::string report = slurp(out / "eval_report.csv");
    CHECK(contains(report, "25,delta,0,0.000000,0.000000,0.000000,0"));
    CHECK(count_lines(report) == 1 + 3 * 3);

    // a candidate that leaks edits into preserved coordinates gets flagged
    const fs::path leak = root() / "leak";
    fs::create_directories(leak);
    const std::string header = "instance,task_id,instance_seed,nfe,valid,preserved_count,preserved_rmse,"
                               "edited_rmse,context_score,over_edit_index\n";
    flowcouple::write_file_atomic(leak / "metrics_K5.csv", header + "0,0,11,5,1,8,0.9,0.05,0.4,18\n");
    const fs::path clean = root() / "clean";
    fs::create_directories(clean);
    flowcouple::write_file_atomic(clean / "metrics_K5.csv", header + "0,0,11,5,1,8,0.01,0.05,0.99,0.2\n");
    const auto e = run("eval --candidate " + leak.string() + " --baseline " + clean.string());
    REQUIRE(e.code == 0);
    CHECK(contains(e.output, "5,candidate,1,0.900000,0.050000,18.000000,1"));
    CHECK(contains(e.output, "5,baseline,1,0.010000,0.050000,0.200000,0"));

    const fs::path other = root() / "other";
    fs::create_directories(other);
    flowcouple::write_file_atomic(other / "metrics_K5.csv", header + "0,0,12,5,1,8,0.01,0.05,0.99,0.2\n");
    CHECK(run("eval --candidate " + leak.string() + " --baseline " + other.string()).code == 2);
    CHECK(run("eval --candidate " + leak.string() + " --baseline " + s.string()).code == 2);
    CHECK(run("eval --candidate " + leak.string() + " --baseline " + (root() / "nowhere").string()).code == 2);
}

TEST_CASE("score reproduces the fixtures and reports bad lines")
{
    const auto r = run(std::string("score ") + FLOWCOUPLE_DATA + "/table1.csv --out " + (root() / "score").string());
    REQUIRE(r.code == 0);
    CHECK(contains(r.output, "6.090"));
    CHECK(contains(slurp(root() / "score" / "score_report.csv"), "Step1X-Edit,5.954,5.729,5.735"));
    const auto g = run(std::string("score ") + FLOWCOUPLE_DATA + "/gedit.csv");
    CHECK(g.code == 0);
    CHECK(contains(g.output, "6.679"));

    const fs::path bad = root() / "bad_scores.csv";
    flowcouple::write_file_atomic(bad, "model,sc,pq,lsc,lpq\na,1,2,3,4\nb,1,2,x,4\n");
    const auto b = run("score " + bad.string());
    CHECK(b.code == 2);
    CHECK(contains(b.output, "line 3"));
    CHECK(run("score " + (root() / "absent.csv").string()).code == 2);
}

TEST_CASE("oracle subcommand")
{
    const auto ot = run("oracle --only ot");
    CHECK(ot.code == 0);
    CHECK(contains(ot.output, "PASS ot"));
    const auto bad = run("oracle --only gradient --inject-failure");
    CHECK(bad.code == 1);
    CHECK(contains(bad.output, "FAIL gradient"));
    CHECK(run("oracle --only nothing").code == 2);
}

TEST_CASE("thread count comes from the environment")
{
    const std::string cfg = small_config().string();
    CHECK(run("train --config " + cfg + " --out " + (root() / "t3").string()).code == 0);
    const std::string cmd = "FLOWCOUPLE_THREADS=3 " + std::string(FLOWCOUPLE_BIN) + " train --config " + cfg +
                            " --out " + (root() / "t3b").string() + " > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(slurp(root() / "t3" / "checkpoint.fckp") == slurp(root() / "t3b" / "checkpoint.fckp"));
    const std::string bad = "FLOWCOUPLE_THREADS=zero " + std::string(FLOWCOUPLE_BIN) + " oracle --only ccl > /dev/null 2>&1";
    const int status = std::system(bad.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}
