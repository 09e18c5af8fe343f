#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "antipode/antipode.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoGrasp = 2;
constexpr int kExitUsage = 64;

using namespace antipode;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON in '") + path + "': " + e.what(), 1);
    }
}

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string mode;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Flat key = value config file");
        cmd->add_option("--seed", seed, "Overrides the 'seed' config key");
        cmd->add_option("--mode", mode, "Closure mode: soft-pinch or strict (overrides 'mode')");
    }

    /// defaults < config file < ANTIPODE_* environment < flags
    [[nodiscard]] PlannerConfig resolve() const {
        PlannerConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        apply_env_overrides(cfg);
        if (seed) cfg.seed = *seed;
        if (!mode.empty()) cfg.scoring.closure_mode = closure_mode_from_string(mode);
        cfg.validate();
        return cfg;
    }
};

std::vector<double> parse_sigma_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        double v = 0.0;
        if (!detail::parse_double(std::string(detail::trim(item)), v) || v < 0.0)
            throw ArgumentError("bad sigma '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ArgumentError("--sigmas must list at least one value");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Antipodal two-finger grasp planner for object point clouds"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    CommonOptions common;

    // plan
    std::string plan_input, plan_output;
    bool plan_timings = false;
    auto* plan_cmd = app.add_subcommand("plan", "Plan and rank grasps; writes a JSON report");
    plan_cmd->add_option("--input", plan_input, "PLY (ascii) or XYZ cloud")->required();
    plan_cmd->add_option("--output", plan_output, "JSON output path (default stdout)");
    plan_cmd->add_flag("--timings", plan_timings, "Include per-stage wall times (output no longer reproducible)");
    common.attach(plan_cmd);

    // segment
    std::string seg_input, seg_output;
    auto* seg_cmd = app.add_subcommand("segment", "Write the preprocessed cloud with per-vertex region ids");
    seg_cmd->add_option("--input", seg_input, "PLY (ascii) or XYZ cloud")->required();
    seg_cmd->add_option("--output", seg_output, "PLY output path")->required();
    common.attach(seg_cmd);

    // eval
    std::string eval_input, eval_grasp, eval_output, eval_sigma_mode;
    double eval_sigma = 0.02;
    std::size_t eval_trials = 100;
    auto* eval_cmd = app.add_subcommand("eval", "Robust force-closure probability of a grasp");
    eval_cmd->add_option("--input", eval_input, "Cloud the grasp was planned on")->required();
    eval_cmd->add_option("--grasp", eval_grasp, "Plan output or a report with contact_a/contact_b")->required();
    eval_cmd->add_option("--sigma", eval_sigma, "Perturbation standard deviation");
    eval_cmd->add_option("--trials", eval_trials, "Number of trials");
    eval_cmd->add_option("--sigma-mode", eval_sigma_mode, "absolute or relative (overrides 'sigma_mode')");
    eval_cmd->add_option("--output", eval_output, "JSON output path (default stdout)");
    common.attach(eval_cmd);

    // benchmark
    std::string bench_corpus = "standard", bench_sigmas, bench_output;
    std::optional<std::size_t> bench_trials;
    auto* bench_cmd = app.add_subcommand("benchmark", "Robustness grid over a synthetic corpus; writes CSV");
    bench_cmd->add_option("--corpus", bench_corpus, "Corpus name (only 'standard')");
    bench_cmd->add_option("--sigmas", bench_sigmas, "Comma-separated sigmas (default: config 'sigmas')");
    bench_cmd->add_option("--trials", bench_trials, "Trials per sigma (default: config 'trials')");
    bench_cmd->add_option("--output", bench_output, "CSV output path (default stdout)");
    common.attach(bench_cmd);

    // synth
    std::string synth_shape, synth_output;
    double synth_jitter = 0.0;
    std::uint64_t synth_seed = 0;
    bool synth_list = false;
    auto* synth_cmd = app.add_subcommand("synth", "Write a corpus shape as PLY (ascii)");
    synth_cmd->add_option("--shape", synth_shape, "Corpus shape name");
    synth_cmd->add_option("--output", synth_output, "PLY output path (default stdout)");
    synth_cmd->add_option("--jitter", synth_jitter, "Gaussian per-axis jitter");
    synth_cmd->add_option("--jitter-seed", synth_seed, "Seed for the jitter");
    synth_cmd->add_flag("--list", synth_list, "List corpus shape names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (plan_cmd->parsed()) {
            const auto cfg = common.resolve();
            const auto cloud = load_cloud(plan_input);
            const auto result = plan(cloud, cfg);
            write_text(plan_output, to_json(result, cfg, plan_timings).dump(2) + "\n");
            if (result.status != PlanStatus::Ok) {
                std::cerr << "no grasp: " << to_string(result.status) << "\n";
                return kExitNoGrasp;
            }
            return kExitOk;
        }
        if (seg_cmd->parsed()) {
            const auto cfg = common.resolve();
            const auto processed = preprocess(load_cloud(seg_input), cfg);
            if (processed.size() < cfg.region.k_neighbors) throw PreconditionError("too few points to segment");
            const auto seg = segment(processed, cfg.region);
            const auto labels = seg.labels(processed.size());
            save_ply_ascii(seg_output, processed, labels);
            std::cerr << seg.regions.size() << " regions, " << seg.residue.size() << " residue points\n";
            return seg.regions.empty() ? kExitNoGrasp : kExitOk;
        }
        if (eval_cmd->parsed()) {
            auto cfg = common.resolve();
            if (!eval_sigma_mode.empty()) cfg.sigma_mode = sigma_mode_from_string(eval_sigma_mode);
            cfg.trials = eval_trials;
            cfg.validate();
            const auto candidate = grasp_from_json(read_json(eval_grasp));
            const auto processed = preprocess(load_cloud(eval_input), cfg);
            if (processed.empty()) throw PreconditionError("too few points after preprocessing");
            const auto rep = robust_force_closure(candidate, processed, cfg.perturbation(eval_sigma), cfg.scoring.mu,
                                                  cfg.scoring.closure_mode);
            write_text(eval_output, to_json(rep).dump(2) + "\n");
            return kExitOk;
        }
        if (bench_cmd->parsed()) {
            if (bench_corpus != "standard") throw NotFoundError("unknown corpus '" + bench_corpus + "'");
            auto cfg = common.resolve();
            if (!bench_sigmas.empty()) cfg.sigmas = parse_sigma_list(bench_sigmas);
            if (bench_trials) cfg.trials = *bench_trials;
            cfg.plan_robustness = true;
            cfg.validate();
            std::vector<BenchmarkRow> rows;
            for (const auto& shape : synthetic::corpus_standard()) {
                const auto result = plan(synthetic::generate(shape.spec), cfg);
                BenchmarkRow row{shape.name, {}};
                for (std::size_t i = 0; i < cfg.sigmas.size(); ++i) {
                    if (result.status == PlanStatus::Ok) row.probabilities.emplace_back(result.robustness[i].probability);
                    else row.probabilities.emplace_back(std::nullopt);
                }
                rows.push_back(std::move(row));
            }
            write_text(bench_output, benchmark_csv(cfg.sigmas, rows));
            return kExitOk;
        }
        if (synth_cmd->parsed()) {
            if (synth_list) {
                for (const auto& s : synthetic::corpus_standard()) std::cout << s.name << "\t" << s.analog << "\n";
                return kExitOk;
            }
            if (synth_shape.empty()) {
                std::cerr << "error: synth needs --shape or --list\n\n" << synth_cmd->help();
                return kExitUsage;
            }
            auto shape = synthetic::corpus_lookup(synth_shape);
            shape.spec.jitter = synth_jitter;
            shape.spec.seed = synth_seed;
            write_text(synth_output, to_ply_ascii(synthetic::generate(shape.spec)));
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
