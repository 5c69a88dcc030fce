#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hardtsp/errors.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

/// Instance files are plain text:
///
///   TSPH 1
///   # optional comment lines (generator, parameters, seed)
///   n <count>
///   <x> <y>              (n lines, 17 significant digits)
///   <blank line between instances>
///
/// Comments and blank lines are ignored wherever they appear, so readers
/// tolerate hand edits; writers emit the canonical layout above.

inline void write_dataset(const std::filesystem::path& path, const std::vector<TspInstance>& instances,
                          const std::vector<std::string>& comments = {}) {
    if (instances.empty()) throw IoError("refusing to write an empty dataset");
    std::ostringstream out;
    out << "TSPH 1\n";
    for (const auto& c : comments) out << "# " << c << "\n";
    char buf[80];
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const TspInstance& inst = instances[i];
        if (inst.n() < 1) throw IoError("dataset contains an empty instance");
        if (i > 0) out << "\n";
        out << "n " << inst.n() << "\n";
        for (const Point& p : inst.nodes) {
            std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.x, p.y);
            out << buf;
        }
    }

    // Write to a sibling temp file and rename, so a crash never leaves a
    // truncated dataset under the final name.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f << out.str();
        if (!f.flush()) throw IoError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::vector<TspInstance> read_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());

    auto bad = [&](const std::string& what) {
        return IoError(path.string() + ": " + what);
    };

    std::string line;
    auto next_content_line = [&]() -> bool {
        while (std::getline(f, line)) {
            std::size_t first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            if (line[first] == '#') continue;
            return true;
        }
        return false;
    };

    if (!next_content_line()) throw bad("empty file");
    {
        std::istringstream ls(line);
        std::string magic;
        int version = 0;
        if (!(ls >> magic >> version) || magic != "TSPH") throw bad("not a TSPH file");
        if (version != 1) throw bad("unsupported TSPH version " + std::to_string(version));
        std::string extra;
        if (ls >> extra) throw bad("trailing tokens on the magic line");
    }

    std::vector<TspInstance> out;
    while (next_content_line()) {
        std::istringstream ls(line);
        std::string key;
        long long count = 0;
        if (!(ls >> key >> count) || key != "n") throw bad("expected an `n <count>` line, got: " + line);
        if (count < 1 || count > 1'000'000) throw bad("implausible node count " + std::to_string(count));
        std::string extra;
        if (ls >> extra) throw bad("trailing tokens on an instance header");

        TspInstance inst;
        inst.provenance = path.filename().string();
        inst.nodes.reserve(static_cast<std::size_t>(count));
        for (long long i = 0; i < count; ++i) {
            if (!next_content_line()) throw bad("instance truncated: expected " + std::to_string(count) + " nodes");
            std::istringstream cs(line);
            Point p;
            if (!(cs >> p.x >> p.y)) throw bad("malformed coordinate line: " + line);
            if (cs >> extra) throw bad("trailing tokens on a coordinate line");
            inst.nodes.push_back(p);
        }
        out.push_back(std::move(inst));
    }
    if (out.empty()) throw bad("no instances");
    return out;
}

} // namespace hardtsp
