#include "flowcouple/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"

namespace flowcouple {

CurriculumSchedule RunConfig::schedule() const
{
    CurriculumSchedule s;
    s.warmup_steps = warmup_steps;
    s.warmup_local_frac = warmup_local_frac;
    s.main_local_frac = main_local_frac;
    s.max_steps = max_steps;
    return s;
}

TrainConfig RunConfig::train_config(std::size_t threads) const
{
    TrainConfig tc;
    tc.batch_size = batch_size;
    tc.learning_rate = learning_rate;
    tc.alpha = alpha;
    tc.d_s = d_s;
    tc.d_t = d_s;
    tc.d_v = d_v;
    tc.seed = seed;
    tc.regime = regime;
    tc.reflow_rounds = reflow_rounds;
    tc.reflow_steps = reflow_steps;
    tc.hidden = hidden;
    tc.sigma_floor = sigma_floor;
    tc.checkpoint_interval = checkpoint_interval;
    tc.record_wallclock = record_wallclock;
    tc.threads = threads;
    return tc;
}

CouplingKind RunConfig::inference_init() const
{
    switch (regime) {
    case CouplingRegime::curriculum:
    case CouplingRegime::pure_local:
        return CouplingKind::local_gaussian;
    default:
        return CouplingKind::independent;
    }
}

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected)
{
    throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + expected,
                      std::string(key));
}

std::uint64_t as_u64(std::string_view key, std::string_view v)
{
    std::uint64_t out = 0;
    if (!parse_uint(v, out)) {
        bad_value(key, v, "an unsigned integer");
    }
    return out;
}

long long as_int(std::string_view key, std::string_view v, long long lo)
{
    long long out = 0;
    if (!parse_int(v, out) || out < lo) {
        bad_value(key, v, lo == 0 ? "an integer >= 0" : "an integer >= 1");
    }
    return out;
}

double as_double(std::string_view key, std::string_view v)
{
    double out = 0.0;
    if (!parse_double(v, out) || !std::isfinite(out)) {
        bad_value(key, v, "a finite number");
    }
    return out;
}

double as_fraction(std::string_view key, std::string_view v)
{
    const double p = as_double(key, v);
    if (p < 0.0 || p > 1.0) {
        bad_value(key, v, "a fraction in [0, 1]");
    }
    return p;
}

bool as_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    bad_value(key, v, "true or false");
}

std::vector<std::size_t> as_widths(std::string_view key, std::string_view v)
{
    std::vector<std::size_t> out;
    for (const auto& part : split_csv_line(v)) {
        out.push_back(static_cast<std::size_t>(as_int(key, part, 1)));
    }
    if (out.empty()) {
        bad_value(key, v, "a comma-separated list of layer widths");
    }
    return out;
}

std::string widths_text(const std::vector<std::size_t>& w)
{
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out += (i ? "," : "") + std::to_string(w[i]);
    }
    return out;
}

} // namespace

const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys = {
        "seed",          "regime",          "alpha",           "batch_size",          "learning_rate",
        "d_s",           "d_v",             "hidden",          "warmup_steps",        "warmup_local_frac",
        "main_local_frac", "max_steps",     "reflow_rounds",   "reflow_steps",        "checkpoint_interval",
        "train_per_task", "eval_per_task",  "sigma_floor",     "record_wallclock",
    };
    return keys;
}

void set_config_value(RunConfig& c, std::string_view key, std::string_view raw)
{
    const std::string_view v = trim(raw);
    if (key == "seed") {
        c.seed = as_u64(key, v);
    } else if (key == "regime") {
        try {
            c.regime = parse_regime(v);
        } catch (const ContractViolation&) {
            bad_value(key, v, "one of curriculum, pure_local, pure_independent, minibatch_ot");
        }
    } else if (key == "alpha") {
        c.alpha = as_double(key, v);
        if (c.alpha < 0.0) {
            bad_value(key, v, "a number >= 0");
        }
    } else if (key == "batch_size") {
        c.batch_size = static_cast<std::size_t>(as_int(key, v, 1));
    } else if (key == "learning_rate") {
        c.learning_rate = as_double(key, v);
        if (c.learning_rate < 0.0) {
            bad_value(key, v, "a number >= 0");
        }
    } else if (key == "d_s") {
        c.d_s = static_cast<std::size_t>(as_int(key, v, 1));
    } else if (key == "d_v") {
        c.d_v = static_cast<std::size_t>(as_int(key, v, 1));
    } else if (key == "hidden") {
        c.hidden = as_widths(key, v);
    } else if (key == "warmup_steps") {
        c.warmup_steps = as_int(key, v, 0);
    } else if (key == "warmup_local_frac") {
        c.warmup_local_frac = as_fraction(key, v);
    } else if (key == "main_local_frac") {
        c.main_local_frac = as_fraction(key, v);
    } else if (key == "max_steps") {
        c.max_steps = as_int(key, v, 0);
    } else if (key == "reflow_rounds") {
        c.reflow_rounds = static_cast<int>(as_int(key, v, 0));
    } else if (key == "reflow_steps") {
        c.reflow_steps = static_cast<int>(as_int(key, v, 1));
    } else if (key == "checkpoint_interval") {
        c.checkpoint_interval = as_int(key, v, 0);
    } else if (key == "train_per_task") {
        c.train_per_task = static_cast<std::size_t>(as_int(key, v, 1));
    } else if (key == "eval_per_task") {
        c.eval_per_task = static_cast<std::size_t>(as_int(key, v, 1));
    } else if (key == "sigma_floor") {
        c.sigma_floor = as_double(key, v);
        if (!(c.sigma_floor > 0.0)) {
            bad_value(key, v, "a number > 0");
        }
    } else if (key == "record_wallclock") {
        c.record_wallclock = as_bool(key, v);
    } else {
        throw ConfigError("unknown config key '" + std::string(key) + "'", std::string(key));
    }
}

std::string config_value(const RunConfig& c, std::string_view key)
{
    if (key == "seed") return std::to_string(c.seed);
    if (key == "regime") return std::string(to_string(c.regime));
    if (key == "alpha") return format_exact(c.alpha);
    if (key == "batch_size") return std::to_string(c.batch_size);
    if (key == "learning_rate") return format_exact(c.learning_rate);
    if (key == "d_s") return std::to_string(c.d_s);
    if (key == "d_v") return std::to_string(c.d_v);
    if (key == "hidden") return widths_text(c.hidden);
    if (key == "warmup_steps") return std::to_string(c.warmup_steps);
    if (key == "warmup_local_frac") return format_exact(c.warmup_local_frac);
    if (key == "main_local_frac") return format_exact(c.main_local_frac);
    if (key == "max_steps") return std::to_string(c.max_steps);
    if (key == "reflow_rounds") return std::to_string(c.reflow_rounds);
    if (key == "reflow_steps") return std::to_string(c.reflow_steps);
    if (key == "checkpoint_interval") return std::to_string(c.checkpoint_interval);
    if (key == "train_per_task") return std::to_string(c.train_per_task);
    if (key == "eval_per_task") return std::to_string(c.eval_per_task);
    if (key == "sigma_floor") return format_exact(c.sigma_floor);
    if (key == "record_wallclock") return c.record_wallclock ? "true" : "false";
    throw ConfigError("unknown config key '" + std::string(key) + "'", std::string(key));
}

RunConfig parse_config(std::string_view text)
{
    RunConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
        std::string_view sv = line;
        if (const auto hash = sv.find('#'); hash != std::string_view::npos) {
            sv = sv.substr(0, hash);
        }
        sv = trim(sv);
        if (sv.empty()) {
            continue;
        }
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line '" + std::string(sv) + "' has no '='", std::string(sv));
        }
        const std::string key(trim(sv.substr(0, eq)));
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
            throw ConfigError("config key '" + key + "' set twice", key);
        }
        set_config_value(c, key, sv.substr(eq + 1));
        seen.push_back(key);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_text_file(path));
}

std::string config_text(const RunConfig& c)
{
    std::string out;
    for (const auto& key : config_keys()) {
        out += key + " = " + config_value(c, key) + '\n';
    }
    return out;
}

} // namespace flowcouple
