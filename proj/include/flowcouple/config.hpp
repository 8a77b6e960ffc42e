#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flowcouple/coupling.hpp"
#include "flowcouple/editlab.hpp"
#include "flowcouple/trainer.hpp"

namespace flowcouple {

// Everything a command needs besides its flags. Text form is flat
// `key = value` lines; '#' starts a comment.
struct RunConfig {
    std::uint64_t seed = 0;
    CouplingRegime regime = CouplingRegime::curriculum;
    double alpha = kDefaultAlpha;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::size_t d_s = 64;
    std::size_t d_v = 16;
    std::vector<std::size_t> hidden = {128, 128};
    long long warmup_steps = 300;
    double warmup_local_frac = 0.25;
    double main_local_frac = 0.5;
    long long max_steps = 1000;
    int reflow_rounds = 0;
    int reflow_steps = 25;
    long long checkpoint_interval = 100;
    std::size_t train_per_task = 128;
    std::size_t eval_per_task = 8;
    double sigma_floor = kDefaultSigmaFloor;
    bool record_wallclock = false;

    CurriculumSchedule schedule() const;
    TrainConfig train_config(std::size_t threads) const;
    LatentShape shape() const { return {d_s, d_v}; }
    // Sampling init that matches the training regime.
    CouplingKind inference_init() const;
};

// Keys in canonical order.
const std::vector<std::string>& config_keys();

// Throws ConfigError naming the key on unknown keys or bad values, and on
// lines without '='.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Sets one key from its text value (same rules as parse_config).
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string config_value(const RunConfig& config, std::string_view key);

// Round-trips through parse_config.
std::string config_text(const RunConfig& config);

} // namespace flowcouple
