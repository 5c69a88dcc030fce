// hardtsp: train, probe, and evaluate a hardness-adaptive neural TSP solver.
//
// Subcommands: generate, train, eval, hardness, plotdata. Every command is a
// pure function of its flags, input files, and seed, so repeated invocations
// produce byte-identical outputs (the metrics `seconds` field is the one
// documented exception). Exit codes: 0 success, 1 runtime failure, 2
// usage/validation error.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hardtsp/checkpoint.hpp"
#include "hardtsp/curriculum.hpp"
#include "hardtsp/dataset.hpp"
#include "hardtsp/evaluate.hpp"
#include "hardtsp/generators.hpp"
#include "hardtsp/metrics.hpp"

namespace {

using namespace hardtsp;
namespace fs = std::filesystem;

std::string fmt(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string g17(double v) { return fmt("%.17g", v); }

void write_text_atomic(const std::string& path, const std::string& body) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + path + " into place: " + ec.message());
}

std::string trimmed(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Expands `train --config FILE` into ordinary option tokens. The file is
/// flat `key = value` text (# comments); each line becomes --key=value
/// inserted ahead of the user's own flags, which therefore win (options use
/// a take-last policy).
void expand_config_tokens(std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            path = args[i].substr(9);
    }
    if (path.empty()) return;

    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::vector<std::string> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trimmed(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        std::string key = eq == std::string::npos ? "" : trimmed(line.substr(0, eq));
        std::string value = eq == std::string::npos ? "" : trimmed(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        if (key == "config" || key == "seeds" || key == "resume")
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + key +
                              " cannot be set from a config file");
        tokens.push_back("--" + key + "=" + value);
    }
    args.insert(args.begin() + 1, tokens.begin(), tokens.end());
}

const char* transform_name(HardnessTransform t) {
    return t == HardnessTransform::standardize ? "standardize" : "identity";
}

HardnessTransform transform_from(const std::string& s) {
    if (s == "identity") return HardnessTransform::identity;
    if (s == "standardize") return HardnessTransform::standardize;
    throw ConfigError("unknown hardness transform: " + s);
}

// --- train config <-> JSON, for the state file and the resume check ---

nlohmann::json train_config_json(const TrainConfig& c) {
    return {
        {"policy",
         {{"embedding_dim", c.policy.embedding_dim},
          {"heads", c.policy.heads},
          {"encoder_layers", c.policy.encoder_layers},
          {"ff_dim", c.policy.ff_dim},
          {"logit_clip", c.policy.logit_clip},
          {"bn_eps", c.policy.bn_eps},
          {"bn_momentum", c.policy.bn_momentum}}},
        {"n", c.n},
        {"epochs", c.epochs},
        {"warmup_epochs", c.warmup_epochs},
        {"instances_per_epoch", c.instances_per_epoch},
        {"batch_size", c.batch_size},
        {"hard_fraction", c.hard_fraction},
        {"use_hag", c.use_hag},
        {"use_curriculum", c.use_curriculum},
        {"learning_rate", c.learning_rate},
        {"max_grad_norm", c.max_grad_norm},
        {"hardness_rollouts", c.hardness_rollouts},
        {"surrogate", {{"inner_steps", c.surrogate.inner_steps}, {"inner_lr", c.surrogate.inner_lr}}},
        {"hag",
         {{"eta", c.hag.eta},
          {"steps", c.hag.steps},
          {"rollouts", c.hag.rollouts},
          {"inner_steps", c.hag.surrogate.inner_steps},
          {"inner_lr", c.hag.surrogate.inner_lr},
          {"centered_score", c.hag.centered_score},
          {"noise_std", c.hag.noise_std},
          {"max_retries", c.hag.max_retries}}},
        {"schedule",
         {{"t_start", c.schedule.t_start}, {"t_end", c.schedule.t_end}, {"decay", c.schedule.decay}}},
        {"transform", transform_name(c.transform)},
        {"eval_instances", c.eval_instances},
        {"eval_source", c.eval_source == EvalSource::gmm ? "gmm" : "uniform"},
        {"eval_gmm",
         {{"c_min", c.eval_gmm.c_min}, {"c_max", c.eval_gmm.c_max}, {"c_dist", c.eval_gmm.c_dist}}},
        {"baseline_instances", c.baseline_instances},
        {"baseline_alpha", c.baseline_alpha},
        {"seed", c.seed},
    };
}

nlohmann::json curriculum_state_json(const CurriculumState& s) {
    return {{"temperature", s.temperature},
            {"epoch", s.epoch},
            {"schedule",
             {{"t_start", s.schedule.t_start}, {"t_end", s.schedule.t_end}, {"decay", s.schedule.decay}}},
            {"transform", transform_name(s.transform)}};
}

CurriculumState curriculum_state_from_json(const nlohmann::json& j) {
    CurriculumState s;
    s.temperature = j.at("temperature").get<double>();
    s.epoch = j.at("epoch").get<int>();
    s.schedule.t_start = j.at("schedule").at("t_start").get<double>();
    s.schedule.t_end = j.at("schedule").at("t_end").get<double>();
    s.schedule.decay = j.at("schedule").at("decay").get<double>();
    s.transform = transform_from(j.at("transform").get<std::string>());
    s.validate();
    return s;
}

// --- generate ---

struct GenerateArgs {
    std::string gen;
    int n = 20;
    int count = 100;
    std::uint64_t seed = 1;
    std::string out;
    double cdist = 10.0;
    int cmin = 3;
    int cmax = 7;
    double eta = 5.0;
    int steps = 4;
    int rollouts = 8;
    int inner_steps = 1;
    double inner_lr = 1e-4;
    std::string model_path;
};

int run_generate(const GenerateArgs& a) {
    std::vector<TspInstance> instances;
    std::vector<std::string> comments;
    std::string head = "generator=" + a.gen + " n=" + std::to_string(a.n) +
                       " count=" + std::to_string(a.count) + " seed=" + std::to_string(a.seed);

    if (a.gen == "uniform") {
        comments.push_back(head);
        instances = gen_uniform(a.n, a.count, Rng(a.seed));
    } else if (a.gen == "gmm") {
        GmmConfig cfg;
        cfg.n = a.n;
        cfg.c_min = a.cmin;
        cfg.c_max = a.cmax;
        cfg.c_dist = a.cdist;
        comments.push_back(head + " cdist=" + fmt("%g", a.cdist) + " cmin=" + std::to_string(a.cmin) +
                           " cmax=" + std::to_string(a.cmax));
        instances = gen_gaussian_mixture(cfg, a.count, Rng(a.seed));
    } else {
        if (a.model_path.empty())
            throw ConfigError("--gen hag requires --model with a trained checkpoint");
        PolicyModel model = load_checkpoint(a.model_path);
        HagConfig cfg;
        cfg.eta = a.eta;
        cfg.steps = a.steps;
        cfg.rollouts = a.rollouts;
        cfg.surrogate.inner_steps = a.inner_steps;
        cfg.surrogate.inner_lr = a.inner_lr;
        cfg.n = a.n;
        comments.push_back(head + " eta=" + fmt("%g", a.eta) + " steps=" + std::to_string(a.steps) +
                           " rollouts=" + std::to_string(a.rollouts) +
                           " inner_steps=" + std::to_string(a.inner_steps) +
                           " inner_lr=" + fmt("%g", a.inner_lr) +
                           " model=" + fs::path(a.model_path).filename().string());
        instances = gen_hardness_adaptive(model, cfg, a.count, Rng(a.seed));
    }

    write_dataset(a.out, instances, comments);
    std::printf("wrote %d %s instances (n=%d) to %s\n", a.count, a.gen.c_str(), a.n, a.out.c_str());
    return 0;
}

// --- train ---

struct TrainArgs {
    TrainConfig cfg;
    std::string profile = "desk";
    std::string curriculum = "on";
    std::string hag = "on";
    std::string eval_source = "uniform";
    std::string transform = "identity";
    std::string out_dir = "run";
    bool resume = false;
    std::vector<std::uint64_t> seeds;
};

TrainConfig effective_config(const TrainArgs& a) {
    TrainConfig cfg = a.cfg;
    if (a.profile == "desk")
        cfg.policy = PolicyConfig::desk();
    else if (a.profile == "paper")
        cfg.policy = PolicyConfig{};
    else
        throw ConfigError("unknown profile: " + a.profile);
    cfg.use_curriculum = a.curriculum == "on";
    cfg.use_hag = a.hag == "on";
    cfg.eval_source = a.eval_source == "gmm" ? EvalSource::gmm : EvalSource::uniform;
    cfg.transform = transform_from(a.transform);
    cfg.validate();
    return cfg;
}

/// Runs (or resumes) one training run into out_dir: model.htck,
/// baseline.htck, state.json, and metrics.jsonl, all updated at every epoch
/// end so an interrupted run resumes from the last completed epoch.
GapStats run_one_training(const TrainConfig& cfg, const std::string& out_dir, bool resume) {
    fs::create_directories(out_dir);
    std::string model_path = out_dir + "/model.htck";
    std::string baseline_path = out_dir + "/baseline.htck";
    std::string state_path = out_dir + "/state.json";
    std::string metrics_path = out_dir + "/metrics.jsonl";

    nlohmann::json cfg_json = train_config_json(cfg);
    TrainSnapshot snap;
    std::vector<std::string> kept_lines;

    if (resume) {
        std::ifstream sf(state_path);
        if (!sf) throw ConfigError("nothing to resume: " + state_path + " not found");
        nlohmann::json st = nlohmann::json::parse(sf, nullptr, false);
        if (st.is_discarded()) throw IoError("state file is not valid JSON: " + state_path);
        if (st.value("v", 0) != 1) throw IoError("unsupported state file version");
        // `epochs` is a stopping point, not a trajectory parameter: every
        // epoch's data and rollouts key off (seed, epoch), so extending the
        // budget replays the same prefix. Everything else must match.
        nlohmann::json mine = cfg_json;
        nlohmann::json theirs = st.at("config");
        mine.erase("epochs");
        theirs.erase("epochs");
        if (mine != theirs)
            throw ConfigError("checkpoint-compatibility error: the saved run used different "
                              "hyperparameters; rerun with the original flags and config");
        snap.model = load_checkpoint(model_path);
        snap.baseline_model = load_checkpoint(baseline_path);
        snap.state = curriculum_state_from_json(st.at("state"));
        snap.next_epoch = st.at("next_epoch").get<int>();
        if (snap.next_epoch >= cfg.epochs)
            throw ConfigError("run already complete: " + std::to_string(snap.next_epoch) + " of " +
                              std::to_string(cfg.epochs) + " epochs done");
        // keep only metrics rows for completed epochs; an interrupted write
        // may have left a row the state file does not acknowledge
        for (const auto& m : read_metrics(metrics_path))
            if (m.epoch < snap.next_epoch) kept_lines.push_back(metrics_json_line(m));
    } else {
        snap = detail::fresh_snapshot(cfg, Rng(cfg.seed));
    }

    {
        std::string body;
        for (const auto& l : kept_lines) body += l + "\n";
        write_text_atomic(metrics_path, body);
    }

    GapStats last;
    auto on_epoch = [&](const EpochMetrics& em, const TrainSnapshot& s) {
        {
            std::ofstream f(metrics_path, std::ios::binary | std::ios::app);
            if (!f) throw IoError("cannot append to " + metrics_path);
            f << metrics_json_line(em) << "\n";
        }
        save_checkpoint(model_path, s.model);
        save_checkpoint(baseline_path, s.baseline_model);
        nlohmann::json st = {{"v", 1},
                             {"config", cfg_json},
                             {"state", curriculum_state_json(s.state)},
                             {"next_epoch", s.next_epoch}};
        write_text_atomic(state_path, st.dump(2) + "\n");
        last = em.heldout;
        std::printf("epoch %d: heldout gap %.6f +- %.6f, hardness %.6f, T=%.4g, %.1fs\n", em.epoch,
                    em.heldout.mean, em.heldout.stddev, em.mean_hardness, em.temperature, em.seconds);
        std::fflush(stdout);
    };

    TrainResult r = resume_training(cfg, std::move(snap), on_epoch);
    std::printf("final heldout gap (%s oracle, %d instances): %.6f +- %.6f\n",
                oracle_name(r.eval_oracle), last.count, last.mean, last.stddev);
    return last;
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg = effective_config(a);
    if (a.seeds.empty()) {
        run_one_training(cfg, a.out_dir, a.resume);
        return 0;
    }
    if (a.resume) throw ConfigError("--resume cannot be combined with --seeds");
    std::vector<double> finals;
    for (std::uint64_t s : a.seeds) {
        TrainConfig c = cfg;
        c.seed = s;
        std::printf("=== seed %" PRIu64 " ===\n", s);
        finals.push_back(run_one_training(c, a.out_dir + "/seed" + std::to_string(s), false).mean);
    }
    GapStats agg = gap_stats(finals);
    std::printf("across %d seeds: mean final gap %.6f +- %.6f\n", agg.count, agg.mean, agg.stddev);
    return 0;
}

// --- eval ---

struct EvalArgs {
    std::string model_path;
    std::string data_path;
    std::string oracle = "exact";
    std::uint64_t seed = 1;
    std::string out;
};

int run_eval(const EvalArgs& a) {
    PolicyModel model = load_checkpoint(a.model_path);
    auto instances = read_dataset(a.data_path);
    OracleKind kind = a.oracle == "twoopt" ? OracleKind::twoopt : OracleKind::exact;
    EvalReport r = evaluate(model, instances, kind, Rng(a.seed));
    if (!a.out.empty()) write_eval_report(a.out, r);
    std::printf("oracle=%s instances=%d mean_gap=%.6f std_gap=%.6f\n", oracle_name(r.oracle),
                r.aggregate.count, r.aggregate.mean, r.aggregate.stddev);
    return 0;
}

// --- hardness ---

struct HardnessArgs {
    std::string model_path;
    std::string data_path;
    int rollouts = 8;
    int inner_steps = 1;
    double inner_lr = 1e-4;
    std::uint64_t seed = 1;
    std::string out;
};

int run_hardness(const HardnessArgs& a) {
    if (a.inner_steps < 0) throw ConfigError("--inner-steps cannot be negative");
    if (a.rollouts < 1) throw ConfigError("--rollouts must be positive");
    PolicyModel model = load_checkpoint(a.model_path);
    auto instances = read_dataset(a.data_path);

    Rng root(a.seed);
    // zero inner steps means the null surrogate M' = M; with common random
    // numbers the hardness column is then exactly zero
    PolicyModel surrogate = model;
    if (a.inner_steps > 0) {
        SurrogateConfig sc;
        sc.inner_steps = a.inner_steps;
        sc.inner_lr = a.inner_lr;
        surrogate = surrogate_update(model, instances, sc, root.child("surrogate"));
    }

    bool exact_col = true;
    for (const auto& inst : instances)
        if (inst.n() > kExactNodeLimit) exact_col = false;

    std::vector<HardnessReport> reports(instances.size());
    std::vector<double> exact_gaps(instances.size(), 0.0);
    Rng hrng = root.child("hardness");
    parallel_for(static_cast<int>(instances.size()), [&](int idx) {
        auto i = static_cast<std::size_t>(idx);
        reports[i] = hardness(instances[i], model, surrogate, a.rollouts,
                              hrng.child(static_cast<std::uint64_t>(idx)));
        if (exact_col)
            exact_gaps[i] = optimality_gap(reports[i].solver_cost, solve_exact(instances[i]).cost);
    });

    std::string body = "# hardness report\n# model=" + fs::path(a.model_path).filename().string() +
                       " data=" + fs::path(a.data_path).filename().string() +
                       " rollouts=" + std::to_string(a.rollouts) +
                       " inner_steps=" + std::to_string(a.inner_steps) +
                       " inner_lr=" + fmt("%g", a.inner_lr) + " seed=" + std::to_string(a.seed) + "\n";
    body += exact_col ? "# columns: id hardness solver_cost surrogate_cost exact_gap\n"
                      : "# columns: id hardness solver_cost surrogate_cost\n";
    double mean_h = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        body += std::to_string(i) + " " + g17(reports[i].hardness) + " " + g17(reports[i].solver_cost) +
                " " + g17(reports[i].surrogate_cost);
        if (exact_col) body += " " + g17(exact_gaps[i]);
        body += "\n";
        mean_h += reports[i].hardness;
    }
    mean_h /= static_cast<double>(reports.size());

    if (a.out.empty())
        std::fputs(body.c_str(), stdout);
    else
        write_text_atomic(a.out, body);
    std::printf("mean hardness %.6f over %zu instances\n", mean_h, reports.size());
    return 0;
}

// --- plotdata ---

struct PlotArgs {
    std::vector<std::string> metrics_files;
    std::string out;
};

int run_plotdata(const PlotArgs& a) {
    std::vector<std::vector<EpochMetrics>> runs;
    std::vector<std::string> labels;
    for (const auto& path : a.metrics_files) {
        try {
            runs.push_back(read_metrics(path));
        } catch (const IoError& e) {
            // empty or unreadable inputs are a validation failure for this command
            throw ConfigError(std::string("plotdata: ") + e.what());
        }
        std::string label = fs::path(path).stem().string();
        for (const auto& prev : labels)
            if (prev == label) label += "_" + std::to_string(labels.size());
        labels.push_back(label);
    }

    std::size_t depth = 0;
    bool ragged = false;
    for (const auto& r : runs) {
        if (depth != 0 && r.size() != depth) ragged = true;
        depth = std::max(depth, r.size());
    }
    if (ragged)
        std::fputs("warning: metrics files have inconsistent epoch counts; padding with blanks\n",
                   stderr);

    std::string body = "epoch";
    for (const auto& label : labels) body += "," + label + "_mean_gap," + label + "_std_gap";
    body += "\n";
    for (std::size_t row = 0; row < depth; ++row) {
        body += std::to_string(row);
        for (const auto& r : runs) {
            if (row < r.size())
                body += "," + g17(r[row].heldout.mean) + "," + g17(r[row].heldout.stddev);
            else
                body += ",,";
        }
        body += "\n";
    }

    if (a.out.empty())
        std::fputs(body.c_str(), stdout);
    else
        write_text_atomic(a.out, body);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hardness-adaptive neural TSP toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Write a TSPH dataset from a generator");
    gen->add_option("--gen", ga.gen, "Generator: uniform, gmm, or hag")
        ->required()
        ->check(CLI::IsMember({"uniform", "gmm", "hag"}));
    gen->add_option("--n", ga.n, "Nodes per instance")->capture_default_str();
    gen->add_option("--count", ga.count, "Number of instances")->capture_default_str();
    gen->add_option("--seed", ga.seed, "Master seed")->capture_default_str();
    gen->add_option("--out", ga.out, "Output dataset path")->required();
    gen->add_option("--cdist", ga.cdist, "gmm: cluster-center square side")->capture_default_str();
    gen->add_option("--cmin", ga.cmin, "gmm: minimum cluster count")->capture_default_str();
    gen->add_option("--cmax", ga.cmax, "gmm: maximum cluster count")->capture_default_str();
    gen->add_option("--eta", ga.eta, "hag: ascent step size")->capture_default_str();
    gen->add_option("--steps", ga.steps, "hag: ascent rounds")->capture_default_str();
    gen->add_option("--rollouts", ga.rollouts, "hag: rollouts per hardness estimate")
        ->capture_default_str();
    gen->add_option("--inner-steps", ga.inner_steps, "hag: surrogate update steps")
        ->capture_default_str();
    gen->add_option("--inner-lr", ga.inner_lr, "hag: surrogate learning rate")->capture_default_str();
    gen->add_option("--model", ga.model_path, "hag: checkpoint whose hardness is ascended");
    gen->callback([&] { rc = run_generate(ga); });

    TrainArgs ta;
    std::string config_path;
    auto* tr = app.add_subcommand("train", "Train a policy with the curriculum loop");
    tr->add_option("--config", config_path, "Flat key=value config file; command-line flags win");
    tr->add_option("--profile", ta.profile, "Model size: desk or paper")
        ->capture_default_str()
        ->check(CLI::IsMember({"desk", "paper"}));
    tr->add_option("--out", ta.out_dir, "Run directory for checkpoints and metrics")
        ->capture_default_str();
    tr->add_flag("--resume", ta.resume, "Continue an interrupted run from its state file");
    tr->add_option("--seed", ta.cfg.seed, "Master seed")->capture_default_str();
    tr->add_option("--seeds", ta.seeds, "Run once per seed into <out>/seed<k>")->delimiter(',');
    tr->add_option("--curriculum", ta.curriculum, "Temperature-weighted sampling: on or off")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    tr->add_option("--hag", ta.hag, "Hardness-adaptive data generation: on or off")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    tr->add_option("--n", ta.cfg.n, "Nodes per training instance")->capture_default_str();
    tr->add_option("--epochs", ta.cfg.epochs, "Total epochs")->capture_default_str();
    tr->add_option("--warmup-epochs", ta.cfg.warmup_epochs, "Leading uniform-data epochs")
        ->capture_default_str();
    tr->add_option("--instances-per-epoch", ta.cfg.instances_per_epoch, "Training instances per epoch")
        ->capture_default_str();
    tr->add_option("--batch-size", ta.cfg.batch_size, "Instances per update")->capture_default_str();
    tr->add_option("--hard-fraction", ta.cfg.hard_fraction,
                   "Share of hardness-adaptive instances after warm-up")
        ->capture_default_str();
    tr->add_option("--learning-rate", ta.cfg.learning_rate, "Adam learning rate")
        ->capture_default_str();
    tr->add_option("--max-grad-norm", ta.cfg.max_grad_norm, "Gradient clip threshold")
        ->capture_default_str();
    tr->add_option("--hardness-rollouts", ta.cfg.hardness_rollouts,
                   "Rollouts per training hardness estimate")
        ->capture_default_str();
    tr->add_option("--inner-steps", ta.cfg.surrogate.inner_steps, "Surrogate update steps")
        ->capture_default_str();
    tr->add_option("--inner-lr", ta.cfg.surrogate.inner_lr, "Surrogate learning rate")
        ->capture_default_str();
    tr->add_option("--eta", ta.cfg.hag.eta, "Generator ascent step size")->capture_default_str();
    tr->add_option("--hag-steps", ta.cfg.hag.steps, "Generator ascent rounds")->capture_default_str();
    tr->add_option("--hag-rollouts", ta.cfg.hag.rollouts, "Generator rollouts per estimate")
        ->capture_default_str();
    tr->add_option("--t-start", ta.cfg.schedule.t_start, "Initial temperature")->capture_default_str();
    tr->add_option("--t-end", ta.cfg.schedule.t_end, "Temperature floor")->capture_default_str();
    tr->add_option("--decay", ta.cfg.schedule.decay, "Per-epoch temperature factor")
        ->capture_default_str();
    tr->add_option("--transform", ta.transform, "Hardness transform: identity or standardize")
        ->capture_default_str()
        ->check(CLI::IsMember({"identity", "standardize"}));
    tr->add_option("--eval-instances", ta.cfg.eval_instances, "Held-out evaluation set size")
        ->capture_default_str();
    tr->add_option("--eval-source", ta.eval_source, "Held-out distribution: uniform or gmm")
        ->capture_default_str()
        ->check(CLI::IsMember({"uniform", "gmm"}));
    tr->add_option("--eval-cdist", ta.cfg.eval_gmm.c_dist, "gmm evaluation: center square side")
        ->capture_default_str();
    tr->add_option("--baseline-instances", ta.cfg.baseline_instances, "Baseline comparison set size")
        ->capture_default_str();
    tr->add_option("--baseline-alpha", ta.cfg.baseline_alpha, "Baseline replacement significance")
        ->capture_default_str();
    // config tokens precede user flags, so take-last gives flags precedence;
    // --seeds keeps its accumulating list behavior
    for (auto* opt : tr->get_options())
        if (opt->get_name() != "--seeds") opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    tr->callback([&] { rc = run_train(ta); });

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score a checkpoint against an oracle on a dataset");
    ev->add_option("--model", ea.model_path, "Checkpoint to evaluate")->required();
    ev->add_option("--data", ea.data_path, "TSPH dataset")->required();
    ev->add_option("--oracle", ea.oracle, "Reference solver: exact or twoopt")
        ->capture_default_str()
        ->check(CLI::IsMember({"exact", "twoopt"}));
    ev->add_option("--seed", ea.seed, "Seed for the twoopt oracle's start nodes")
        ->capture_default_str();
    ev->add_option("--out", ea.out, "Write the full JSON report here");
    ev->callback([&] { rc = run_eval(ea); });

    HardnessArgs ha;
    auto* hd = app.add_subcommand("hardness", "Per-instance hardness report for a checkpoint");
    hd->add_option("--model", ha.model_path, "Checkpoint to measure")->required();
    hd->add_option("--data", ha.data_path, "TSPH dataset")->required();
    hd->add_option("--rollouts", ha.rollouts, "Rollouts per cost estimate")->capture_default_str();
    hd->add_option("--inner-steps", ha.inner_steps, "Surrogate update steps (0 keeps M' = M)")
        ->capture_default_str();
    hd->add_option("--inner-lr", ha.inner_lr, "Surrogate learning rate")->capture_default_str();
    hd->add_option("--seed", ha.seed, "Master seed")->capture_default_str();
    hd->add_option("--out", ha.out, "Write the report here instead of stdout");
    hd->callback([&] { rc = run_hardness(ha); });

    PlotArgs pa;
    auto* pl = app.add_subcommand("plotdata", "Merge metrics files into plot-ready CSV");
    pl->add_option("files", pa.metrics_files, "metrics.jsonl files, one per run")
        ->required()
        ->expected(-1);
    pl->add_option("--out", pa.out, "Write the CSV here instead of stdout");
    pl->callback([&] { rc = run_plotdata(pa); });

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        if (!args.empty() && args.front() == "train") expand_config_tokens(args);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "hardtsp: %s\n", e.what());
        return 2;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "hardtsp: %s\n", e.what());
        return 2;
    } catch (const SizeLimitError& e) {
        std::fprintf(stderr, "hardtsp: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "hardtsp: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "hardtsp: %s\n", e.what());
        return 1;
    }
    return rc;
}
