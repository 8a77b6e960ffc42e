#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowcouple/config.hpp"
#include "flowcouple/trainer.hpp"

namespace flowcouple {

inline constexpr const char* kVersionTag = "flowcouple 0.1.0";

struct RunManifest {
    std::string command;
    RunConfig config;
    std::map<std::string, std::string> arguments; // command-specific flags beyond the config
    PhaseCounts counts;
    std::vector<std::filesystem::path> outputs;
    double wallclock_ms = 0.0;
};

std::string manifest_json(const RunManifest& manifest);

// Adds the manifest's own path to outputs, then writes atomically.
void write_manifest(const std::filesystem::path& path, RunManifest manifest);

// Restores config and arguments from a written manifest.
RunManifest read_manifest(const std::filesystem::path& path);

} // namespace flowcouple
