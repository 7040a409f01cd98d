#include "doctest.h"
#include "hybridci/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace hybridci;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(HYBRIDCI_SOURCE_DIR) / "configs";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hybridci_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json mg_dataset(std::size_t n = 124) {
    return {{"source", "mackey_glass"},
            {"mackey_glass", {{"n", n}, {"washout", 50}}},
            {"embedding", {{"lags", {6, 0}}, {"horizon", 3}}},
            {"split", {{"train", 0.5}, {"valid", 0.25}, {"test", 0.25}}}};
}

json train_nn_config() {
    return {{"task", "train-nn"},
            {"name", "nn"},
            {"seed", 5},
            {"dataset", mg_dataset()},
            {"network", {{"hidden", {3}}, {"transfer", {"tanh"}}}},
            {"trainer", {{"algorithm", "SCG"}, {"epochs", 15}}}};
}

json evonf_config() {
    return {{"task", "evonf"},
            {"name", "evonf-small"},
            {"seed", 2},
            {"dataset", mg_dataset()},
            {"evonf", {{"max_epochs", 3}, {"fixed_kind", "takagi_sugeno"}}},
            {"ea", {{"population_size", 6}, {"generations", 3}, {"adapter", "fuzzy_controller"}}}};
}

std::string config_error_field(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

struct ThreadEnv {
    explicit ThreadEnv(const char* n) { setenv("HYBRIDCI_THREADS", n, 1); }
    ~ThreadEnv() { unsetenv("HYBRIDCI_THREADS"); }
};

}  // namespace

TEST_CASE("task names round-trip") {
    for (Task t : {Task::GenSeries, Task::TrainNN, Task::ANFIS, Task::MLEANN, Task::EvoNF, Task::EABench})
        CHECK(task_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(task_from_string("anfys"), InvalidInput);
}

TEST_CASE("config errors name the offending field") {
    json j = train_nn_config();
    CHECK(config_error_field(j) == "<no error>");

    j["dataset"]["split"]["trian"] = 0.5;
    CHECK(config_error_field(j) == "dataset.split.trian");

    j = train_nn_config();
    j["trainer"]["epochs"] = "ten";
    CHECK(config_error_field(j) == "trainer.epochs");

    j = train_nn_config();
    j["trainer"]["epochs"] = -3;
    CHECK(config_error_field(j) == "trainer.epochs");

    j = train_nn_config();
    j["trainer"]["algorithm"] = "adam";
    CHECK(config_error_field(j) == "trainer.algorithm");

    j = train_nn_config();
    j["anfis"] = json::object();
    CHECK(config_error_field(j) == "anfis");

    j = train_nn_config();
    j["network"]["transfer"] = {"tanh", "tanh"};
    CHECK(config_error_field(j) == "network.transfer");

    j = train_nn_config();
    j.erase("task");
    CHECK(config_error_field(j) == "task");

    j = train_nn_config();
    j["dataset"]["split"]["train"] = 0.9;
    CHECK(config_error_field(j) == "dataset.split");

    j = train_nn_config();
    j["dataset"] = {{"source", "csv"}, {"csv", {{"path", "/nonexistent/data.csv"}}}};
    CHECK(config_error_field(j) == "dataset.csv.path");

    j = evonf_config();
    j["ea"]["mutation_sigma"] = {{"per_span", {{"mf", "wide"}}}};
    CHECK(config_error_field(j) == "ea.mutation_sigma.per_span.mf");

    j = {{"task", "ea-bench"}};
    CHECK(config_error_field(j) == "benchmark");
}

TEST_CASE("config echo is a fixed point for every bundled config") {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(kConfigs)) {
        if (entry.path().extension() != ".json") continue;
        CAPTURE(entry.path().string());
        const ExperimentConfig c = load_config(entry.path());
        const json echo = to_json(c);
        CHECK(to_json(parse_config(echo)) == echo);
        ++seen;
    }
    CHECK(seen >= 5);
}

TEST_CASE("csv paths resolve against the config directory") {
    const fs::path dir = scratch("csvcfg");
    fs::create_directories(dir / "data");
    Dataset ds;
    ds.inputs.resize(12, 2);
    ds.targets.resize(12, 1);
    for (Eigen::Index i = 0; i < 12; ++i) {
        ds.inputs(i, 0) = 0.1 * static_cast<double>(i);
        ds.inputs(i, 1) = std::sin(static_cast<double>(i));
        ds.targets(i, 0) = ds.inputs(i, 0) - ds.inputs(i, 1);
    }
    write_csv(dir / "data" / "xy.csv", ds, {"a", "b", "y"});
    json j = {{"task", "train-nn"},
              {"dataset", {{"source", "csv"}, {"csv", {{"path", "data/xy.csv"}}}}},
              {"trainer", {{"epochs", 2}}}};
    std::ofstream(dir / "cfg.json") << j.dump();

    const ExperimentConfig c = load_config(dir / "cfg.json");
    CHECK(c.dataset.csv_path == fs::canonical(dir / "data" / "xy.csv"));
    const PreparedData data = prepare_data(c.dataset);
    CHECK(data.full.inputs == ds.inputs);
    CHECK(data.full.targets == ds.targets);
    fs::remove_all(dir);
}

TEST_CASE("normalization is fitted on the training split") {
    json j = train_nn_config();
    j["dataset"]["normalize"] = true;
    const PreparedData d = prepare_data(parse_config(j).dataset);
    CHECK(d.parts.train.inputs.minCoeff() == 0.0);
    CHECK(d.parts.train.inputs.maxCoeff() == 1.0);
    const PreparedData raw = prepare_data(parse_config(train_nn_config()).dataset);
    CHECK(d.fingerprint != raw.fingerprint);
    CHECK(d.parts.test.size() == raw.parts.test.size());
}

TEST_CASE("gen-series writes the requested number of samples") {
    const fs::path out = scratch("series");
    json j = {{"task", "gen-series"},
              {"dataset", {{"source", "mackey_glass"}, {"mackey_glass", {{"n", 321}, {"washout", 10}}}}}};
    const ExperimentConfig c = parse_config(j);
    const RunOutcome r = run_experiment(c, out);
    CHECK(r.exit_code == kExitOk);
    const Dataset series = load_csv(out / "series.csv", true, 1);
    REQUIRE(series.size() == 321);
    const auto x = gen_mackey_glass(c.dataset.mackey_glass);
    for (Eigen::Index i = 0; i < series.size(); ++i) {
        CHECK(series.inputs(i, 0) == static_cast<double>(i));
        CHECK(series.targets(i, 0) == x[static_cast<std::size_t>(i)]);
    }
    fs::remove_all(out);
}

TEST_CASE("train-nn run: files parse back and repeat byte-identically") {
    const fs::path a = scratch("nn_a"), b = scratch("nn_b");
    const ExperimentConfig c = parse_config(train_nn_config());
    const RunOutcome ra = run_experiment(c, a);
    const RunOutcome rb = run_experiment(c, b);
    CHECK(ra.exit_code == kExitOk);
    CHECK(slurp(a / "history.csv") == slurp(b / "history.csv"));
    CHECK(slurp(a / "predictions.csv") == slurp(b / "predictions.csv"));

    const Dataset hist = load_csv(a / "history.csv", true, 1);
    const auto& curve = ra.record["history"];
    REQUIRE(static_cast<std::size_t>(hist.size()) == curve.size());
    for (Eigen::Index i = 0; i < hist.size(); ++i) CHECK(hist.targets(i, 0) == curve[i]["loss"].get<double>());

    // predictions.csv: inputs, target, prediction; the last two columns are read as targets.
    const Dataset pred = load_csv(a / "predictions.csv", true, 2);
    const PreparedData data = prepare_data(c.dataset);
    REQUIRE(pred.size() == data.parts.test.size());
    CHECK(pred.inputs == data.parts.test.inputs);
    CHECK(pred.targets.col(0) == data.parts.test.targets.col(0));
    const double test_rmse = rmse(pred.targets.col(1), pred.targets.col(0));
    CHECK(std::abs(test_rmse - ra.record["metrics"]["test_rmse"].get<double>()) <= 1e-15);

    for (const auto& e : fs::directory_iterator(a)) CHECK(e.path().extension() != ".tmp");
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("running the echoed config reproduces the results exactly") {
    const fs::path a = scratch("echo_a"), b = scratch("echo_b");
    const ExperimentConfig c = parse_config(evonf_config());
    const RunOutcome ra = run_experiment(c, a);
    const ExperimentConfig echoed = parse_config(ra.record["config"]);
    const RunOutcome rb = run_experiment(echoed, b);
    CHECK(ra.record["history"] == rb.record["history"]);
    CHECK(ra.record["metrics"] == rb.record["metrics"]);
    CHECK(ra.record["model"] == rb.record["model"]);
    CHECK(slurp(a / "history.csv") == slurp(b / "history.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("history.csv does not depend on the thread count") {
    const ExperimentConfig c = parse_config(evonf_config());
    std::string one, four;
    {
        ThreadEnv env("1");
        const fs::path out = scratch("thr1");
        run_experiment(c, out);
        one = slurp(out / "history.csv");
        fs::remove_all(out);
    }
    {
        ThreadEnv env("4");
        const fs::path out = scratch("thr4");
        run_experiment(c, out);
        four = slurp(out / "history.csv");
        fs::remove_all(out);
    }
    CHECK(!one.empty());
    CHECK(one == four);
}

TEST_CASE("divergence writes a partial record and a nonzero exit code") {
    // Values this large overflow the squared error, so training cannot start.
    const fs::path out = scratch("diverged");
    fs::create_directories(out);
    Dataset ds;
    ds.inputs = Matrix::Constant(20, 1, 1e200);
    ds.targets = Matrix::Constant(20, 1, -1e200);
    for (Eigen::Index i = 0; i < 20; ++i) ds.inputs(i, 0) *= static_cast<double>(i + 1);
    write_csv(out / "huge.csv", ds, {"x", "y"});
    json j = train_nn_config();
    j["dataset"] = {{"source", "csv"}, {"csv", {{"path", (out / "huge.csv").string()}}}};
    const RunOutcome r = run_experiment(parse_config(j), out / "run");
    CHECK(r.diverged);
    CHECK(r.exit_code == kExitDiverged);
    const json saved = json::parse(slurp(out / "run" / "run.json"));
    CHECK(saved["diverged"] == true);
    CHECK(saved["config"] == r.record["config"]);
    fs::remove_all(out);
}

TEST_CASE("compare: sorted rows that match the run records") {
    const fs::path root = scratch("compare");
    json nn = train_nn_config();
    json anfis = {{"task", "anfis"}, {"name", "anfis"}, {"dataset", mg_dataset()}, {"anfis", {{"training", {{"epochs", 5}}}}}};
    json nn_twin = nn;
    nn_twin["name"] = "nn-twin";
    std::vector<fs::path> dirs;
    for (const json& j : {nn, anfis, nn_twin}) {
        dirs.push_back(root / j["name"].get<std::string>());
        run_experiment(parse_config(j), dirs.back());
    }

    const auto rows = compare_runs(dirs);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].test_rmse <= rows[i].test_rmse);
    for (const auto& row : rows) {
        const json rec = json::parse(slurp(row.dir / "run.json"));
        CHECK(row.name == rec["name"].get<std::string>());
        CHECK(row.test_rmse == rec["metrics"]["test_rmse"].get<double>());
        CHECK(row.parameter_count == rec["parameter_count"].get<std::int64_t>());
        CHECK(row.duration_seconds == rec["duration_seconds"].get<double>());
    }
    const auto nn_row = std::find_if(rows.begin(), rows.end(), [](const CompareRow& r) { return r.name == "nn"; });
    const auto twin_row = std::find_if(rows.begin(), rows.end(), [](const CompareRow& r) { return r.name == "nn-twin"; });
    CHECK(nn_row->test_rmse == twin_row->test_rmse);

    // The CSV form parses back; its numeric columns carry the same values.
    write_file_atomic(root / "compare.csv", compare_csv(rows));
    std::ifstream in(root / "compare.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "name,test_rmse,parameter_count,duration_seconds,run_dir");
    for (const auto& row : rows) {
        std::getline(in, line);
        CHECK(line.rfind(row.name + "," + format_double(row.test_rmse) + ",", 0) == 0);
    }
    CHECK(compare_text(rows).find("nn-twin") != std::string::npos);

    CHECK_THROWS_AS(compare_runs({dirs[0]}), InvalidInput);
    json other = nn;
    other["name"] = "other";
    other["dataset"]["mackey_glass"]["n"] = 130;
    dirs.push_back(root / "other");
    run_experiment(parse_config(other), dirs.back());
    CHECK_THROWS_WITH_AS(compare_runs(dirs), doctest::Contains("fingerprints differ"), InvalidInput);
    fs::remove_all(root);
}

TEST_CASE("ea-bench reaches the sphere minimum region") {
    json j = {{"task", "ea-bench"},
              {"seed", 3},
              {"benchmark", {{"function", "sphere"}, {"dimension", 2}}},
              {"ea", {{"population_size", 20}, {"generations", 40}, {"crossover_rate", 0.5}}}};
    const fs::path out = scratch("bench");
    const RunOutcome r = run_experiment(parse_config(j), out);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.record["metrics"]["best_fitness"].get<double>() < 1e-2);
    const Dataset hist = load_csv(out / "history.csv", true, 1);
    CHECK(hist.size() == 41);
    fs::remove_all(out);
}

TEST_CASE("benchmark functions vanish at their minima") {
    CHECK(bench_value(BenchFunction::Sphere, Vector::Zero(3)) == 0.0);
    CHECK(bench_value(BenchFunction::Rastrigin, Vector::Zero(3)) == 0.0);
    CHECK(bench_value(BenchFunction::Rosenbrock, Vector::Ones(3)) == 0.0);
    CHECK(bench_value(BenchFunction::Sphere, Vector::Constant(2, 2.0)) == 8.0);
}
