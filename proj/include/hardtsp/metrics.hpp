#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardtsp/curriculum.hpp"
#include "hardtsp/errors.hpp"

namespace hardtsp {

/// Metrics persist as JSON lines, one object per epoch, schema version 1:
/// epoch, mean_gap, std_gap, mean_hardness, temperature, seconds, plus
/// cost/spread extras. Keys are emitted sorted, so identical metrics give
/// identical bytes.
inline std::string metrics_json_line(const EpochMetrics& m) {
    nlohmann::json j;
    j["v"] = 1;
    j["epoch"] = m.epoch;
    j["mean_gap"] = m.heldout.mean;
    j["std_gap"] = m.heldout.stddev;
    j["eval_count"] = m.heldout.count;
    j["mean_hardness"] = m.mean_hardness;
    j["std_hardness"] = m.std_hardness;
    j["mean_cost"] = m.mean_cost;
    j["std_cost"] = m.std_cost;
    j["temperature"] = m.temperature;
    j["seconds"] = m.seconds;
    return j.dump();
}

inline EpochMetrics metrics_from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw IoError("malformed metrics line: " + line);
    if (j.value("v", 0) != 1) throw IoError("unsupported metrics schema version");
    for (const char* key : {"epoch", "mean_gap", "std_gap", "mean_hardness", "temperature", "seconds"})
        if (!j.contains(key)) throw IoError(std::string("metrics line missing key: ") + key);

    EpochMetrics m;
    m.epoch = j["epoch"].get<int>();
    m.heldout.mean = j["mean_gap"].get<double>();
    m.heldout.stddev = j["std_gap"].get<double>();
    m.heldout.count = j.value("eval_count", 0);
    m.mean_hardness = j["mean_hardness"].get<double>();
    m.std_hardness = j.value("std_hardness", 0.0);
    m.mean_cost = j.value("mean_cost", 0.0);
    m.std_cost = j.value("std_cost", 0.0);
    m.temperature = j["temperature"].get<double>();
    m.seconds = j["seconds"].get<double>();
    return m;
}

inline std::vector<EpochMetrics> read_metrics(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<EpochMetrics> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(metrics_from_json_line(line));
    }
    if (out.empty()) throw IoError(path + ": no metrics records");
    return out;
}

} // namespace hardtsp
