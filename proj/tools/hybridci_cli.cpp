#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hybridci/experiment.hpp"

namespace fs = std::filesystem;
using namespace hybridci;

namespace {

struct Options {
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet{false};
};

fs::path output_dir(const ExperimentConfig& cfg, const Options& opt) {
    if (!opt.out.empty()) return opt.out;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    return fs::path("runs") / (cfg.name + "-seed" + std::to_string(cfg.seed));
}

int execute(const std::string& config_path, const Options& opt, bool series_only) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
        if (opt.seed) cfg.seed = *opt.seed;
        if (series_only && cfg.task != Task::GenSeries)
            throw ConfigError("task", "gen-series needs a config whose task is \"gen-series\"");
    } catch (const Error& e) {
        std::cerr << "config error in " << config_path << ": " << e.what() << '\n';
        return kExitConfig;
    }

    const fs::path dir = output_dir(cfg, opt);
    try {
        const RunOutcome r = run_experiment(cfg, dir);
        if (!opt.quiet) {
            std::cout << cfg.name << " (" << to_string(cfg.task) << ", seed " << cfg.seed << ") -> " << dir.string()
                      << '\n';
            const auto& m = r.record["metrics"];
            for (const auto& [k, v] : m.items()) std::cout << "  " << k << " = " << v.dump() << '\n';
            std::cout << "  duration_seconds = " << r.record["duration_seconds"].dump() << '\n';
        }
        if (r.diverged) std::cerr << "run diverged; partial record written to " << (dir / "run.json").string() << '\n';
        return r.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int compare(const std::vector<std::string>& dirs, const Options& opt) {
    try {
        std::vector<fs::path> paths(dirs.begin(), dirs.end());
        const auto rows = compare_runs(paths);
        if (!opt.out.empty()) {
            fs::create_directories(opt.out);
            write_file_atomic(fs::path(opt.out) / "compare.csv", compare_csv(rows));
        }
        std::cout << (opt.quiet ? compare_csv(rows) : compare_text(rows));
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybridci: neural, fuzzy and evolutionary experiments"};
    app.set_version_flag("--version", toolkit_version());
    app.require_subcommand(1);

    Options opt;
    std::string config;
    std::vector<std::string> dirs;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_flag("--quiet", opt.quiet, "Suppress the summary");
    };

    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    run->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", opt.seed, "Override the config seed");
    add_common(run);

    auto* gen = app.add_subcommand("gen-series", "Generate a Mackey-Glass series as CSV");
    gen->add_option("config", config, "Config file with task gen-series")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", opt.seed, "Override the config seed");
    add_common(gen);

    auto* cmp = app.add_subcommand("compare", "Tabulate test RMSE over run directories");
    cmp->add_option("dirs", dirs, "Run directories")->required()->expected(2, -1);
    add_common(cmp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (cmp->parsed()) return compare(dirs, opt);
    return execute(config, opt, gen->parsed());
}
