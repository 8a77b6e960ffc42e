#include "flowcouple/manifest.hpp"

#include <json.hpp>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"

namespace flowcouple {

std::string manifest_json(const RunManifest& m)
{
    nlohmann::ordered_json j;
    j["version"] = kVersionTag;
    j["command"] = m.command;
    j["seed"] = m.config.seed;
    nlohmann::ordered_json cfg;
    for (const auto& key : config_keys()) {
        cfg[key] = config_value(m.config, key);
    }
    j["config"] = cfg;
    j["arguments"] = m.arguments;
    j["coupling_counts"] = {
        {"warmup_local", m.counts.warmup_local},       {"warmup_independent", m.counts.warmup_independent},
        {"main_local", m.counts.main_local},           {"main_independent", m.counts.main_independent},
        {"minibatch_ot", m.counts.minibatch_ot},       {"reflow", m.counts.reflow},
    };
    auto outputs = nlohmann::ordered_json::array();
    for (const auto& p : m.outputs) {
        outputs.push_back(p.string());
    }
    j["outputs"] = outputs;
    j["wallclock_ms"] = m.wallclock_ms;
    return j.dump(2) + '\n';
}

void write_manifest(const std::filesystem::path& path, RunManifest manifest)
{
    manifest.outputs.push_back(path);
    write_file_atomic(path, manifest_json(manifest));
}

RunManifest read_manifest(const std::filesystem::path& path)
{
    RunManifest m;
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        m.command = j.at("command").get<std::string>();
        for (const auto& [key, value] : j.at("config").items()) {
            set_config_value(m.config, key, value.get<std::string>());
        }
        m.arguments = j.at("arguments").get<std::map<std::string, std::string>>();
        for (const auto& p : j.at("outputs")) {
            m.outputs.emplace_back(p.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad manifest: " + e.what(), 0);
    }
    return m;
}

} // namespace flowcouple
