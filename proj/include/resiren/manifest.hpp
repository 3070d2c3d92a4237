#pragma once

// Run manifests: every CLI command records its resolved configuration, seeds,
// inputs/outputs, and wallclock so deterministic outputs can be reproduced.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resiren/io.hpp"
#include "resiren/probe.hpp"
#include "resiren/version.hpp"

namespace resiren {

struct RunManifest {
    std::string command;
    std::string tool_version = kVersion;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object(); // full resolved configuration
    std::vector<std::string> inputs, outputs;
    double wallclock_s = 0.0;
};

inline nlohmann::json to_json(const RunManifest& m) {
    return nlohmann::json{{"command", m.command},      {"tool_version", m.tool_version},
                          {"seed", m.seed},            {"config", m.config},
                          {"inputs", m.inputs},        {"outputs", m.outputs},
                          {"wallclock_s", m.wallclock_s}};
}

inline void save_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << to_json(m).dump(2) << "\n";
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("manifest " + path + ": " + e.what());
    }
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.wallclock_s = j.at("wallclock_s").get<double>();
    return m;
}

inline nlohmann::json to_json(const ProbeReport& r) {
    std::vector<int> seeds(r.per_seed.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = static_cast<int>(i);
    return nlohmann::json{{"provider", r.provider}, {"task", r.task},   {"probe_kind", r.probe_kind},
                          {"metric", r.metric},     {"mean", r.mean},   {"std", r.stddev},
                          {"seeds", seeds},         {"values", r.per_seed}};
}

inline void save_probe_report_json(const std::string& path, const ProbeReport& r) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << to_json(r).dump(2) << "\n";
}

inline void save_probe_report_csv(const std::string& path, const std::vector<ProbeReport>& reports) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << ProbeReport::csv_header() << "\n";
    for (const auto& r : reports) out << r.csv_row() << "\n";
}

} // namespace resiren
