#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridci/evonf.hpp"
#include "hybridci/fuzzy_ea_controller.hpp"
#include "hybridci/mleann.hpp"

namespace hybridci {

enum class Task { GenSeries, TrainNN, ANFIS, MLEANN, EvoNF, EABench };
std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

std::string toolkit_version();

struct DatasetSpec {
    enum class Source { MackeyGlass, Csv };
    Source source{Source::MackeyGlass};
    MackeyGlassParams mackey_glass;
    /// Absolute after parsing; relative paths resolve against the config file.
    std::filesystem::path csv_path;
    bool csv_has_header{true};
    std::size_t csv_target_columns{1};
    /// Delay embedding of a generated series.
    std::vector<std::size_t> lags{18, 12, 6, 0};
    std::size_t horizon{6};
    SplitSpec split;
    /// Min-max scaling fitted on the training split.
    bool normalize{false};
};

struct NetworkSpec {
    std::vector<Eigen::Index> hidden{8};
    std::vector<TransferFn> transfer{TransferFn::Tanh};
    double init_scale{0.5};
};

struct ANFISSpec {
    FISKind kind{FISKind::TakagiSugeno};
    std::size_t terms_per_var{2};
    TNorm tnorm{TNorm::Product};
    TConorm tconorm{TConorm::Max};
    Defuzzifier defuzz{Defuzzifier::Centroid};
    NFTrainConfig training;
};

enum class BenchFunction { Sphere, Rastrigin, Rosenbrock };

struct BenchSpec {
    BenchFunction function{BenchFunction::Sphere};
    std::size_t dimension{2};
    double lower{-5};
    double upper{5};
};

double bench_value(BenchFunction f, const Vector& x);

/// One experiment. Only the sections relevant to `task` are read and echoed.
struct ExperimentConfig {
    Task task{Task::GenSeries};
    std::string name;
    std::uint64_t seed{0};
    std::filesystem::path output_dir;
    DatasetSpec dataset;
    NetworkSpec network;
    TrainerConfig trainer;
    ANFISSpec anfis;
    MLEANNConfig mleann;
    EvoNFConfig evonf;
    BenchSpec bench;
    /// Used by ea-bench; mleann and evonf carry their own EAConfig.
    EAConfig ea;
    ControllerBandwidth controller;

    void validate() const;
};

/// Strict parse: unknown keys, wrong types and sections that do not belong to
/// the task raise ConfigError naming the dotted field path.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full echo with every default resolved; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& c);

struct PreparedData {
    Dataset full;
    DatasetSplit parts;
    std::uint64_t fingerprint{0};
};

/// Builds, splits and optionally normalizes the dataset of a config.
PreparedData prepare_data(const DatasetSpec& spec);

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitDiverged = 3 };

struct RunOutcome {
    int exit_code{kExitOk};
    bool diverged{false};
    nlohmann::json record;
};

/// Executes the task and writes run.json, history.csv and predictions.csv
/// (series.csv for gen-series) into out_dir, each via a temporary file.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct CompareRow {
    std::string name;
    std::filesystem::path dir;
    double test_rmse{0};
    std::int64_t parameter_count{0};
    double duration_seconds{0};
};

/// Rows sorted by ascending test RMSE (stable). Needs at least two runs that
/// share one dataset fingerprint.
std::vector<CompareRow> compare_runs(const std::vector<std::filesystem::path>& dirs);
std::string compare_csv(const std::vector<CompareRow>& rows);
std::string compare_text(const std::vector<CompareRow>& rows);

/// Writes `contents` to path.tmp, then renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace hybridci
