#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hardtsp/curriculum.hpp"
#include "hardtsp/parallel.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/solvers.hpp"

namespace hardtsp {

struct EvalRecord {
    int id = 0;
    double model_cost = 0.0;
    double oracle_cost = 0.0;
    double gap = 0.0;
};

/// Per-instance evaluation rows plus their aggregate. The oracle kind is part
/// of the report because exact gaps and 2-opt gaps are not comparable
/// numbers; the aggregate is always recomputable from the rows bit for bit.
struct EvalReport {
    OracleKind oracle = OracleKind::exact;
    std::vector<EvalRecord> records;
    GapStats aggregate;
};

inline GapStats recompute_aggregate(const EvalReport& r) {
    std::vector<double> gaps;
    gaps.reserve(r.records.size());
    for (const auto& rec : r.records) gaps.push_back(rec.gap);
    return gap_stats(gaps);
}

/// Evaluate greedy decoding against an oracle.
///
/// With the exact oracle the gap is the optimality gap: never negative, and
/// an undercut throws because it proves a broken cost somewhere. The 2-opt
/// oracle is only locally optimal, so its gap is signed and the model may
/// legitimately come out ahead. The heuristic's start nodes draw from rng;
/// the exact solver ignores it.
inline EvalReport evaluate(const PolicyModel& model, const std::vector<TspInstance>& instances,
                           OracleKind oracle, Rng rng) {
    if (instances.empty()) throw ContractError("evaluate: empty instance set");
    if (oracle == OracleKind::exact) {
        for (const auto& inst : instances)
            if (inst.n() > kExactNodeLimit)
                throw SizeLimitError("exact oracle handles at most " +
                                     std::to_string(kExactNodeLimit) + " nodes (instance has " +
                                     std::to_string(inst.n()) + "); use the twoopt oracle");
    }

    EvalReport report;
    report.oracle = oracle;
    report.records.resize(instances.size());
    parallel_for(static_cast<int>(instances.size()), [&](int idx) {
        auto i = static_cast<std::size_t>(idx);
        const TspInstance& inst = instances[i];
        EvalRecord rec;
        rec.id = idx;
        rec.model_cost = greedy_rollout(model, inst).cost;
        if (oracle == OracleKind::exact) {
            rec.oracle_cost = solve_exact(inst).cost;
            rec.gap = optimality_gap(rec.model_cost, rec.oracle_cost);
        } else {
            rec.oracle_cost = solve_heuristic(inst, rng.child("oracle", i)).cost;
            if (!(rec.oracle_cost > 0.0))
                throw DomainError("evaluate: nonpositive oracle cost");
            rec.gap = (rec.model_cost - rec.oracle_cost) / rec.oracle_cost;
        }
        report.records[i] = rec;
    });
    report.aggregate = recompute_aggregate(report);
    return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : r.records) {
        records.push_back({{"id", rec.id},
                           {"model_cost", rec.model_cost},
                           {"oracle_cost", rec.oracle_cost},
                           {"gap", rec.gap}});
    }
    return {{"v", 1},
            {"oracle", oracle_name(r.oracle)},
            {"aggregate",
             {{"mean", r.aggregate.mean}, {"stddev", r.aggregate.stddev}, {"count", r.aggregate.count}}},
            {"records", std::move(records)}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("v", 0) != 1) throw IoError("unsupported eval report version");
    EvalReport r;
    std::string oracle = j.at("oracle").get<std::string>();
    if (oracle == "exact")
        r.oracle = OracleKind::exact;
    else if (oracle == "twoopt")
        r.oracle = OracleKind::twoopt;
    else
        throw IoError("unknown oracle kind in eval report: " + oracle);
    for (const auto& rec : j.at("records")) {
        EvalRecord e;
        e.id = rec.at("id").get<int>();
        e.model_cost = rec.at("model_cost").get<double>();
        e.oracle_cost = rec.at("oracle_cost").get<double>();
        e.gap = rec.at("gap").get<double>();
        r.records.push_back(e);
    }
    r.aggregate.mean = j.at("aggregate").at("mean").get<double>();
    r.aggregate.stddev = j.at("aggregate").at("stddev").get<double>();
    r.aggregate.count = j.at("aggregate").at("count").get<int>();
    GapStats check = recompute_aggregate(r);
    if (check.mean != r.aggregate.mean || check.stddev != r.aggregate.stddev ||
        check.count != r.aggregate.count)
        throw IoError("eval report aggregate does not match its records");
    return r;
}

inline void write_eval_report(const std::string& path, const EvalReport& r) {
    std::string body = eval_report_to_json(r).dump(2);
    body.push_back('\n');
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move eval report into place: " + ec.message());
}

inline EvalReport read_eval_report(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open eval report " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw IoError("eval report is not valid JSON: " + path);
    return eval_report_from_json(j);
}

} // namespace hardtsp
