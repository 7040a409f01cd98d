#include "hybridci/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

namespace hybridci {

using nlohmann::json;
namespace fs = std::filesystem;

#ifndef HYBRIDCI_VERSION
#define HYBRIDCI_VERSION "0.0.0"
#endif

std::string toolkit_version() { return HYBRIDCI_VERSION; }

namespace {

constexpr std::array<std::pair<Task, std::string_view>, 6> kTaskNames{{{Task::GenSeries, "gen-series"},
                                                                       {Task::TrainNN, "train-nn"},
                                                                       {Task::ANFIS, "anfis"},
                                                                       {Task::MLEANN, "mleann"},
                                                                       {Task::EvoNF, "evonf"},
                                                                       {Task::EABench, "ea-bench"}}};

std::string_view to_string(BenchFunction f) {
    switch (f) {
        case BenchFunction::Sphere: return "sphere";
        case BenchFunction::Rastrigin: return "rastrigin";
        case BenchFunction::Rosenbrock: return "rosenbrock";
    }
    return "sphere";
}

BenchFunction bench_from_string(std::string_view s) {
    if (s == "sphere") return BenchFunction::Sphere;
    if (s == "rastrigin") return BenchFunction::Rastrigin;
    if (s == "rosenbrock") return BenchFunction::Rosenbrock;
    throw InvalidInput("unknown benchmark function '" + std::string(s) + "'");
}

std::string_view to_string(DatasetSpec::Source s) { return s == DatasetSpec::Source::Csv ? "csv" : "mackey_glass"; }

bool uses_dataset(Task t) { return t != Task::EABench; }
bool uses_ea(Task t) { return t == Task::MLEANN || t == Task::EvoNF || t == Task::EABench; }

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

// Wraps one JSON object; every key must be consumed before finish().
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* take(const std::string& key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    Section sub(const std::string& key) {
        const json* v = take(key);
        static const json empty = json::object();
        return Section(v ? *v : empty, field(key));
    }

    void read(const std::string& key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) throw ConfigError(field(key), "expected a number");
            out = v->get<double>();
        }
    }

    template <class U>
        requires std::is_unsigned_v<U>
    void read(const std::string& key, U& out) {
        if (const json* v = take(key)) out = static_cast<U>(as_unsigned(*v, field(key)));
    }

    void read(const std::string& key, bool& out) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = take(key)) out = as_string(*v, field(key));
    }

    // Enumerations given as strings, decoded with a *_from_string function.
    template <class E, class Parse>
    void read_enum(const std::string& key, E& out, Parse parse) {
        if (const json* v = take(key)) out = parse_enum<E>(*v, field(key), parse);
    }

    template <class E, class Parse>
    void read_optional_enum(const std::string& key, std::optional<E>& out, Parse parse) {
        if (const json* v = take(key)) {
            if (v->is_null()) {
                out.reset();
            } else {
                out = parse_enum<E>(*v, field(key), parse);
            }
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!used_.count(key)) throw ConfigError(field(key), "unknown key");
    }

    static std::uint64_t as_unsigned(const json& v, const std::string& field) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            throw ConfigError(field, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    static std::string as_string(const json& v, const std::string& field) {
        if (!v.is_string()) throw ConfigError(field, "expected a string");
        return v.get<std::string>();
    }

    template <class E, class Parse>
    static E parse_enum(const json& v, const std::string& field, Parse parse) {
        const std::string s = as_string(v, field);
        try {
            return parse(s);
        } catch (const InvalidInput& e) {
            throw ConfigError(field, e.what());
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void forbid(Section& s, const std::string& key, const std::string& why) {
    if (s.has(key)) throw ConfigError(s.field(key), why);
    s.take(key);
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

void parse_dataset(Section s, DatasetSpec& d, Task task, const fs::path& base_dir) {
    s.read_enum("source", d.source, [](std::string_view v) {
        if (v == "mackey_glass") return DatasetSpec::Source::MackeyGlass;
        if (v == "csv") return DatasetSpec::Source::Csv;
        throw InvalidInput("expected \"mackey_glass\" or \"csv\"");
    });
    const bool mg = d.source == DatasetSpec::Source::MackeyGlass;
    if (task == Task::GenSeries && !mg) throw ConfigError(s.field("source"), "gen-series needs a mackey_glass source");

    if (mg) {
        Section m = s.sub("mackey_glass");
        auto& p = d.mackey_glass;
        m.read("a", p.a);
        m.read("b", p.b);
        m.read("tau", p.tau);
        m.read("dt", p.dt);
        m.read("sample_interval", p.sample_interval);
        m.read("n", p.n);
        m.read("x0", p.x0);
        m.read("washout", p.washout);
        m.finish();
        forbid(s, "csv", "only valid when source is \"csv\"");
    } else {
        Section c = s.sub("csv");
        std::string path;
        c.read("path", path);
        if (path.empty()) throw ConfigError(c.field("path"), "required for a csv source");
        fs::path p(path);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        if (!fs::exists(p)) throw ConfigError(c.field("path"), "file not found: " + p.string());
        d.csv_path = fs::absolute(p).lexically_normal();
        c.read("has_header", d.csv_has_header);
        c.read("target_columns", d.csv_target_columns);
        c.finish();
        forbid(s, "mackey_glass", "only valid when source is \"mackey_glass\"");
    }

    if (task == Task::GenSeries) {
        for (const char* k : {"embedding", "split", "normalize"}) forbid(s, k, "not used by gen-series");
        s.finish();
        return;
    }
    if (mg) {
        Section e = s.sub("embedding");
        if (const json* lags = e.take("lags")) {
            if (!lags->is_array() || lags->empty()) throw ConfigError(e.field("lags"), "expected a non-empty array");
            d.lags.clear();
            for (const auto& v : *lags) d.lags.push_back(Section::as_unsigned(v, e.field("lags")));
        }
        e.read("horizon", d.horizon);
        e.finish();
    } else {
        forbid(s, "embedding", "only valid when source is \"mackey_glass\"");
    }
    Section sp = s.sub("split");
    sp.read("train", d.split.train_fraction);
    sp.read("valid", d.split.valid_fraction);
    sp.read("test", d.split.test_fraction);
    sp.read("shuffle", d.split.shuffle);
    sp.read("seed", d.split.seed);
    sp.finish();
    s.read("normalize", d.normalize);
    s.finish();
}

json dataset_json(const DatasetSpec& d, Task task) {
    json j;
    j["source"] = to_string(d.source);
    if (d.source == DatasetSpec::Source::MackeyGlass) {
        const auto& p = d.mackey_glass;
        j["mackey_glass"] = {{"a", p.a},   {"b", p.b},   {"tau", p.tau},         {"dt", p.dt}, {"sample_interval", p.sample_interval},
                             {"n", p.n},   {"x0", p.x0}, {"washout", p.washout}};
    } else {
        j["csv"] = {{"path", d.csv_path.string()},
                    {"has_header", d.csv_has_header},
                    {"target_columns", d.csv_target_columns}};
    }
    if (task == Task::GenSeries) return j;
    if (d.source == DatasetSpec::Source::MackeyGlass) j["embedding"] = {{"lags", d.lags}, {"horizon", d.horizon}};
    j["split"] = {{"train", d.split.train_fraction},
                  {"valid", d.split.valid_fraction},
                  {"test", d.split.test_fraction},
                  {"shuffle", d.split.shuffle},
                  {"seed", d.split.seed}};
    j["normalize"] = d.normalize;
    return j;
}

void parse_network(Section s, NetworkSpec& n) {
    if (const json* h = s.take("hidden")) {
        if (!h->is_array() || h->empty()) throw ConfigError(s.field("hidden"), "expected a non-empty array");
        n.hidden.clear();
        for (const auto& v : *h) {
            const auto width = Section::as_unsigned(v, s.field("hidden"));
            if (width == 0) throw ConfigError(s.field("hidden"), "layer widths must be positive");
            n.hidden.push_back(static_cast<Eigen::Index>(width));
        }
    }
    if (const json* t = s.take("transfer")) {
        if (!t->is_array()) throw ConfigError(s.field("transfer"), "expected an array");
        n.transfer.clear();
        for (const auto& v : *t) n.transfer.push_back(Section::parse_enum<TransferFn>(v, s.field("transfer"), transfer_from_string));
    }
    s.read("init_scale", n.init_scale);
    s.finish();
    if (n.transfer.size() != n.hidden.size())
        throw ConfigError(s.field("transfer"), "needs one entry per hidden layer");
    if (!(n.init_scale >= 0) || !std::isfinite(n.init_scale))
        throw ConfigError(s.field("init_scale"), "must be finite and non-negative");
}

json network_json(const NetworkSpec& n) {
    json t = json::array();
    for (auto f : n.transfer) t.push_back(to_string(f));
    return {{"hidden", n.hidden}, {"transfer", t}, {"init_scale", n.init_scale}};
}

void parse_trainer(Section s, TrainerConfig& t) {
    s.read_enum("algorithm", t.algorithm, algorithm_from_string);
    s.read("epochs", t.epochs);
    s.read("learning_rate", t.learning_rate);
    s.read("momentum", t.momentum);
    s.read("lm_lambda0", t.lm_lambda0);
    s.read("lm_factor", t.lm_factor);
    s.read("tolerance", t.tolerance);
    s.finish();
}

json trainer_json(const TrainerConfig& t) {
    return {{"algorithm", to_string(t.algorithm)}, {"epochs", t.epochs},        {"learning_rate", t.learning_rate},
            {"momentum", t.momentum},              {"lm_lambda0", t.lm_lambda0}, {"lm_factor", t.lm_factor},
            {"tolerance", t.tolerance}};
}

void parse_nf_training(Section s, NFTrainConfig& t) {
    s.read("epochs", t.epochs);
    s.read("antecedent_lr", t.antecedent_lr);
    s.read("ridge", t.ridge);
    s.read("freeze_antecedents", t.freeze_antecedents);
    s.finish();
}

json nf_training_json(const NFTrainConfig& t) {
    return {{"epochs", t.epochs},
            {"antecedent_lr", t.antecedent_lr},
            {"ridge", t.ridge},
            {"freeze_antecedents", t.freeze_antecedents}};
}

void parse_anfis(Section s, ANFISSpec& a) {
    s.read_enum("kind", a.kind, fis_kind_from_string);
    s.read("terms_per_var", a.terms_per_var);
    s.read_enum("tnorm", a.tnorm, tnorm_from_string);
    s.read_enum("tconorm", a.tconorm, tconorm_from_string);
    s.read_enum("defuzz", a.defuzz, defuzzifier_from_string);
    parse_nf_training(s.sub("training"), a.training);
    s.finish();
}

json anfis_json(const ANFISSpec& a) {
    return {{"kind", to_string(a.kind)},       {"terms_per_var", a.terms_per_var},
            {"tnorm", to_string(a.tnorm)},     {"tconorm", to_string(a.tconorm)},
            {"defuzz", to_string(a.defuzz)},   {"training", nf_training_json(a.training)}};
}

void parse_mleann(Section s, MLEANNConfig& m) {
    s.read("max_hidden", m.max_hidden);
    s.read("min_epochs", m.min_epochs);
    s.read("max_epochs", m.max_epochs);
    s.read("weight_bound", m.weight_bound);
    s.read_enum("fitness_split", m.fitness_split, fitness_split_from_string);
    s.finish();
}

json mleann_json(const MLEANNConfig& m) {
    return {{"max_hidden", m.max_hidden},
            {"min_epochs", m.min_epochs},
            {"max_epochs", m.max_epochs},
            {"weight_bound", m.weight_bound},
            {"fitness_split", to_string(m.fitness_split)}};
}

void parse_evonf(Section s, EvoNFConfig& e) {
    s.read("terms_per_var", e.terms_per_var);
    s.read("min_epochs", e.min_epochs);
    s.read("max_epochs", e.max_epochs);
    s.read_enum("fitness_split", e.fitness_split, fitness_split_from_string);
    s.read_enum("strategy", e.strategy, learning_strategy_from_string);
    s.read_optional_enum("fixed_kind", e.fixed_kind, fis_kind_from_string);
    s.read_optional_enum("fixed_tnorm", e.fixed_tnorm, tnorm_from_string);
    s.read_optional_enum("fixed_tconorm", e.fixed_tconorm, tconorm_from_string);
    s.read_optional_enum("fixed_defuzz", e.fixed_defuzz, defuzzifier_from_string);
    s.finish();
}

template <class E>
json optional_enum_json(const std::optional<E>& v) {
    return v ? json(to_string(*v)) : json(nullptr);
}

json evonf_json(const EvoNFConfig& e) {
    return {{"terms_per_var", e.terms_per_var},
            {"min_epochs", e.min_epochs},
            {"max_epochs", e.max_epochs},
            {"fitness_split", to_string(e.fitness_split)},
            {"strategy", to_string(e.strategy)},
            {"fixed_kind", optional_enum_json(e.fixed_kind)},
            {"fixed_tnorm", optional_enum_json(e.fixed_tnorm)},
            {"fixed_tconorm", optional_enum_json(e.fixed_tconorm)},
            {"fixed_defuzz", optional_enum_json(e.fixed_defuzz)}};
}

void parse_ea(Section s, EAConfig& ea) {
    s.read("population_size", ea.population_size);
    s.read("generations", ea.generations);
    s.read("elitism", ea.elitism);
    s.read("tournament_k", ea.tournament_k);
    s.read("mutation_rate", ea.mutation_rate);
    {
        Section m = s.sub("mutation_sigma");
        m.read("default", ea.mutation_sigma.default_sigma);
        if (const json* per = m.take("per_span")) {
            if (!per->is_object()) throw ConfigError(m.field("per_span"), "expected an object");
            ea.mutation_sigma.per_span.clear();
            for (const auto& [span, v] : per->items()) {
                if (!v.is_number()) throw ConfigError(m.field("per_span") + "." + span, "expected a number");
                ea.mutation_sigma.per_span[span] = v.get<double>();
            }
        }
        m.finish();
    }
    s.read("crossover_rate", ea.crossover_rate);
    s.read("blend_alpha", ea.blend_alpha);
    s.read_enum("adapter", ea.adapter, adapter_from_string);
    s.read("max_population", ea.max_population);
    if (const json* v = s.take("stop_below")) {
        if (v->is_null()) {
            ea.stop_below.reset();
        } else if (v->is_number()) {
            ea.stop_below = v->get<double>();
        } else {
            throw ConfigError(s.field("stop_below"), "expected a number or null");
        }
    }
    s.finish();
}

json ea_json(const EAConfig& ea) {
    json per = json::object();
    for (const auto& [span, v] : ea.mutation_sigma.per_span) per[span] = v;
    return {{"population_size", ea.population_size},
            {"generations", ea.generations},
            {"elitism", ea.elitism},
            {"tournament_k", ea.tournament_k},
            {"mutation_rate", ea.mutation_rate},
            {"mutation_sigma", {{"default", ea.mutation_sigma.default_sigma}, {"per_span", per}}},
            {"crossover_rate", ea.crossover_rate},
            {"blend_alpha", ea.blend_alpha},
            {"adapter", to_string(ea.adapter)},
            {"max_population", ea.max_population},
            {"stop_below", ea.stop_below ? json(*ea.stop_below) : json(nullptr)}};
}

void parse_bench(Section s, BenchSpec& b) {
    s.read_enum("function", b.function, bench_from_string);
    s.read("dimension", b.dimension);
    s.read("lower", b.lower);
    s.read("upper", b.upper);
    s.finish();
}

// Rethrows errors from a nested validate() as a ConfigError on `field`.
template <class Fn>
void check_section(const std::string& field, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(field, e.what());
    }
}

EAConfig& task_ea(ExperimentConfig& c) {
    if (c.task == Task::MLEANN) return c.mleann.ea;
    if (c.task == Task::EvoNF) return c.evonf.ea;
    return c.ea;
}

const EAConfig& task_ea(const ExperimentConfig& c) { return task_ea(const_cast<ExperimentConfig&>(c)); }

// The run seed drives the EA; the configured bandwidths feed the shipped controller.
EAConfig resolved_ea(const ExperimentConfig& c) {
    EAConfig ea = task_ea(c);
    ea.seed = c.seed;
    if (ea.adapter == Adapter::FuzzyController)
        ea.controller = std::make_shared<const FuzzyController>(FuzzyController::shipped(c.controller));
    return ea;
}

// ---------------------------------------------------------------------------
// Serialization of results
// ---------------------------------------------------------------------------

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
    return a;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
    return rows;
}

json network_model_json(const MLPNetwork& net) {
    json t = json::array();
    for (auto f : net.transfer) t.push_back(to_string(f));
    json w = json::array();
    for (const auto& m : net.weights) w.push_back(matrix_json(m));
    return {{"type", "mlp"}, {"layer_sizes", net.layer_sizes}, {"transfer", t}, {"weights", w}};
}

json variable_json(const FuzzyVariable& v) {
    json terms = json::array();
    for (const auto& mf : v.terms) {
        json p = json::array();
        for (std::size_t i = 0; i < mf.parameter_count(); ++i) p.push_back(mf.params[i]);
        terms.push_back({{"label", mf.label}, {"kind", to_string(mf.kind)}, {"params", p}});
    }
    return {{"name", v.name}, {"min", v.min}, {"max", v.max}, {"terms", terms}};
}

json fis_model_json(const FuzzySystem& f) {
    json inputs = json::array();
    for (const auto& v : f.inputs) inputs.push_back(variable_json(v));
    json rules = json::array();
    for (const auto& r : f.rules) {
        json rule = {{"antecedent", r.antecedent}, {"weight", r.weight}};
        if (f.kind == FISKind::Mamdani) {
            rule["consequent_term"] = r.consequent_term;
        } else {
            rule["coefficients"] = vector_json(r.coefficients);
        }
        rules.push_back(std::move(rule));
    }
    return {{"type", "fis"},
            {"kind", to_string(f.kind)},
            {"tnorm", to_string(f.tnorm)},
            {"tconorm", to_string(f.tconorm)},
            {"defuzz", to_string(f.defuzz)},
            {"resolution", f.resolution},
            {"inputs", inputs},
            {"output", f.output ? variable_json(*f.output) : json(nullptr)},
            {"rules", rules}};
}

std::int64_t fis_parameter_count(const FuzzySystem& f) {
    std::int64_t n = membership_parameters(f, f.kind == FISKind::Mamdani).size();
    if (f.kind == FISKind::TakagiSugeno)
        for (const auto& r : f.rules) n += r.coefficients.size();
    return n;
}

std::string csv_line(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
    }
    return s + '\n';
}

const char* kGenerationHeader =
    "generation,best,average,worst,population_size,mutation_rate,crossover_rate,penalized,evaluations\n";

std::string generation_csv(const std::vector<GenerationStats>& h) {
    std::string s = kGenerationHeader;
    for (const auto& g : h)
        s += csv_line({std::to_string(g.generation), format_double(g.best), format_double(g.average),
                       format_double(g.worst), std::to_string(g.population_size), format_double(g.mutation_rate),
                       format_double(g.crossover_rate), std::to_string(g.penalized), std::to_string(g.evaluations)});
    return s;
}

json generation_json(const std::vector<GenerationStats>& h) {
    json a = json::array();
    for (const auto& g : h)
        a.push_back({{"generation", g.generation},
                     {"best", number(g.best)},
                     {"average", number(g.average)},
                     {"worst", number(g.worst)},
                     {"population_size", g.population_size},
                     {"mutation_rate", g.mutation_rate},
                     {"crossover_rate", g.crossover_rate},
                     {"penalized", g.penalized},
                     {"evaluations", g.evaluations}});
    return a;
}

std::string epoch_csv(const std::vector<double>& curve, const char* name) {
    std::string s = std::string("epoch,") + name + "\n";
    for (std::size_t i = 0; i < curve.size(); ++i) s += csv_line({std::to_string(i), format_double(curve[i])});
    return s;
}

json epoch_json(const std::vector<double>& curve, const char* name) {
    json a = json::array();
    for (std::size_t i = 0; i < curve.size(); ++i) a.push_back({{"epoch", i}, {name, number(curve[i])}});
    return a;
}

std::string predictions_csv(const Dataset& test, const Matrix& pred) {
    std::vector<std::string> header;
    const Eigen::Index d = test.input_width(), m = test.target_width();
    for (Eigen::Index j = 0; j < d; ++j) header.push_back("x" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < m; ++j) header.push_back(m == 1 ? "target" : "target" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < m; ++j) header.push_back(m == 1 ? "prediction" : "prediction" + std::to_string(j + 1));
    std::string s = csv_line(header);
    for (Eigen::Index i = 0; i < test.size(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < d; ++j) row.push_back(format_double(test.inputs(i, j)));
        for (Eigen::Index j = 0; j < m; ++j) row.push_back(format_double(test.targets(i, j)));
        for (Eigen::Index j = 0; j < m; ++j) row.push_back(format_double(pred(i, j)));
        s += csv_line(row);
    }
    return s;
}

double safe_rmse(const Matrix& pred, const Matrix& targets) {
    if (!pred.allFinite()) return std::numeric_limits<double>::quiet_NaN();
    return rmse(pred, targets);
}

struct TaskOutput {
    std::string history_csv;
    json history = json::array();
    std::optional<std::string> predictions;
    std::optional<std::string> series;
    json metrics = json::object();
    json model = json::object();
    json extra = json::object();
    std::int64_t parameter_count{0};
    bool diverged{false};
};

void set_metrics(TaskOutput& out, double train, double valid, double test) {
    out.metrics = {{"train_rmse", number(train)}, {"valid_rmse", number(valid)}, {"test_rmse", number(test)}};
}

std::vector<FuzzyVariable> input_variables(const FISUniverses& u) {
    std::vector<FuzzyVariable> vars;
    for (std::size_t j = 0; j < u.inputs.size(); ++j)
        vars.push_back({"x" + std::to_string(j + 1), u.inputs[j].first, u.inputs[j].second, {}});
    return vars;
}

// Gaussian with the same centre and a sigma of a quarter of the support.
void gaussianize(FuzzyVariable& v) {
    for (auto& mf : v.terms)
        if (mf.kind == MFKind::Triangular)
            mf = MembershipFn::gaussian(mf.params[1], std::max((mf.params[2] - mf.params[0]) / 4, kMinWidth), mf.label);
}

TaskOutput run_gen_series(const ExperimentConfig& c) {
    TaskOutput out;
    const auto x = gen_mackey_glass(c.dataset.mackey_glass);
    std::string s = "t,x\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        s += csv_line({format_double(static_cast<double>(i) * c.dataset.mackey_glass.sample_interval), format_double(x[i])});
    out.series = std::move(s);
    out.extra = {{"samples", x.size()}};
    return out;
}

TaskOutput run_train_nn(const ExperimentConfig& c, const PreparedData& data) {
    TaskOutput out;
    const auto& p = data.parts;
    std::vector<Eigen::Index> sizes{p.train.input_width()};
    sizes.insert(sizes.end(), c.network.hidden.begin(), c.network.hidden.end());
    sizes.push_back(p.train.target_width());
    RngStream rng(c.seed, make_stream_id(3, 0, 0));
    const MLPNetwork init = MLPNetwork::random(sizes, c.network.transfer, rng, c.network.init_scale);
    MLPNetwork net = init;
    std::vector<double> curve;
    try {
        TrainReport rep = train(init, p.train, c.trainer);
        net = std::move(rep.final_net);
        curve = std::move(rep.loss_curve);
        out.extra = {{"epochs_run", rep.epochs_run}, {"converged", rep.converged}};
    } catch (const TrainingDiverged& e) {
        net = e.last_finite_network();
        curve = {sse(net, p.train)};
        out.diverged = true;
    }
    out.history_csv = epoch_csv(curve, "loss");
    out.history = epoch_json(curve, "loss");
    const Matrix pred = forward_batch(net, p.test.inputs);
    set_metrics(out, safe_rmse(forward_batch(net, p.train.inputs), p.train.targets),
                safe_rmse(forward_batch(net, p.valid.inputs), p.valid.targets), safe_rmse(pred, p.test.targets));
    out.predictions = predictions_csv(p.test, pred);
    out.model = {{"network", network_model_json(net)}, {"trainer", trainer_json(c.trainer)}};
    out.parameter_count = net.parameter_count();
    return out;
}

TaskOutput run_anfis(const ExperimentConfig& c, const PreparedData& data) {
    TaskOutput out;
    const auto& p = data.parts;
    if (p.train.target_width() != 1) throw InvalidInput("anfis: fuzzy systems need exactly one target column");
    const FISUniverses u = FISUniverses::from_dataset(p.train);
    RngStream rng(c.seed, make_stream_id(4, 0, 0));
    std::optional<FuzzyVariable> output;
    if (c.anfis.kind == FISKind::Mamdani) output = FuzzyVariable{"y", u.output.first, u.output.second, {}};
    FuzzySystem fis = grid_partition(input_variables(u), c.anfis.terms_per_var, c.anfis.kind, rng, output);
    fis.tnorm = c.anfis.tnorm;
    fis.tconorm = c.anfis.tconorm;
    fis.defuzz = c.anfis.defuzz;
    if (fis.kind == FISKind::Mamdani) {
        for (auto& v : fis.inputs) gaussianize(v);
        gaussianize(*fis.output);
    }
    const NFTrainResult r = fis.kind == FISKind::TakagiSugeno ? hybrid_train_ts(fis, p.train, c.anfis.training)
                                                              : gradient_train_mamdani(fis, p.train, c.anfis.training);
    out.diverged = r.diverged;
    out.history_csv = epoch_csv(r.loss_curve, "sse");
    out.history = epoch_json(r.loss_curve, "sse");
    const Vector pred = predict(r.system, p.test.inputs);
    set_metrics(out, safe_rmse(predict(r.system, p.train.inputs), p.train.targets),
                safe_rmse(predict(r.system, p.valid.inputs), p.valid.targets), safe_rmse(pred, p.test.targets));
    out.predictions = predictions_csv(p.test, pred);
    out.model = {{"system", fis_model_json(r.system)}};
    out.extra = {{"epochs_run", r.epochs_run}};
    out.parameter_count = fis_parameter_count(r.system);
    return out;
}

TaskOutput run_mleann_task(const ExperimentConfig& c, const PreparedData& data) {
    TaskOutput out;
    const auto& p = data.parts;
    MLEANNConfig cfg = c.mleann;
    cfg.ea = resolved_ea(c);
    const MLEANNRun r = mleann_run(cfg, p.train, p.valid, p.test);
    out.diverged = r.diverged;
    out.history_csv = generation_csv(r.evolution.history);
    out.history = generation_json(r.evolution.history);
    set_metrics(out, r.train_rmse, r.valid_rmse, r.test_rmse);
    out.predictions = predictions_csv(p.test, r.test_predictions);
    out.model = {{"network", network_model_json(r.best.trained)},
                 {"trainer", trainer_json(r.best.decoded.trainer)},
                 {"genome", vector_json(r.evolution.best.genes)}};
    out.extra = {{"best_fitness", number(r.evolution.best_fitness)},
                 {"evaluations", r.evolution.evaluations},
                 {"total_epochs", r.total_epochs},
                 {"stopped_early", r.evolution.stopped_early}};
    out.parameter_count = r.best.trained.parameter_count();
    return out;
}

TaskOutput run_evonf_task(const ExperimentConfig& c, const PreparedData& data) {
    TaskOutput out;
    const auto& p = data.parts;
    EvoNFConfig cfg = c.evonf;
    cfg.ea = resolved_ea(c);
    const EvoNFRun r = evonf_run(cfg, p.train, p.valid, p.test);
    out.diverged = r.diverged;
    out.history_csv = generation_csv(r.evolution.history);
    out.history = generation_json(r.evolution.history);
    set_metrics(out, r.train_rmse, r.valid_rmse, r.test_rmse);
    out.predictions = predictions_csv(p.test, r.test_predictions);
    out.model = {{"system", fis_model_json(r.best.trained)},
                 {"training", nf_training_json(r.best.decoded.training)},
                 {"genome", vector_json(r.evolution.best.genes)}};
    out.extra = {{"best_fitness", number(r.evolution.best_fitness)},
                 {"evaluations", r.evolution.evaluations},
                 {"total_epochs", r.total_epochs},
                 {"stopped_early", r.evolution.stopped_early}};
    out.parameter_count = fis_parameter_count(r.best.trained);
    return out;
}

TaskOutput run_ea_bench(const ExperimentConfig& c) {
    TaskOutput out;
    auto layout = std::make_shared<GenomeLayout>();
    layout->add_span("x", static_cast<Eigen::Index>(c.bench.dimension), c.bench.lower, c.bench.upper);
    const EAConfig ea = resolved_ea(c);
    const BenchFunction f = c.bench.function;
    const EvolveResult r = evolve([&](RngStream& rng) { return Genome::uniform(layout, rng); },
                                  [f](const Genome& g) { return bench_value(f, g.genes); }, ea);
    out.history_csv = generation_csv(r.history);
    out.history = generation_json(r.history);
    out.metrics = {{"best_fitness", number(r.best_fitness)}};
    out.model = {{"genome", vector_json(r.best.genes)}};
    out.extra = {{"evaluations", r.evaluations}, {"stopped_early", r.stopped_early}};
    out.parameter_count = static_cast<std::int64_t>(c.bench.dimension);
    out.diverged = !(r.best_fitness < kPenaltyFitness);
    return out;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(Task t) {
    for (const auto& [task, name] : kTaskNames)
        if (task == t) return name;
    return "gen-series";
}

Task task_from_string(std::string_view s) {
    for (const auto& [task, name] : kTaskNames)
        if (name == s) return task;
    throw InvalidInput("unknown task '" + std::string(s) +
                       "' (expected gen-series, train-nn, anfis, mleann, evonf or ea-bench)");
}

double bench_value(BenchFunction f, const Vector& x) {
    switch (f) {
        case BenchFunction::Sphere: return x.squaredNorm();
        case BenchFunction::Rastrigin: {
            double s = 10.0 * static_cast<double>(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * x[i] - 10.0 * std::cos(2 * M_PI * x[i]);
            return s;
        }
        case BenchFunction::Rosenbrock: {
            double s = 0;
            for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
                s += 100 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1 - x[i], 2);
            return s;
        }
    }
    return 0;
}

void ExperimentConfig::validate() const {
    if (uses_dataset(task)) {
        if (task == Task::GenSeries) {
            check_section("dataset.mackey_glass", [&] {
                if (dataset.mackey_glass.n == 0) throw InvalidInput("n must be positive");
            });
        } else {
            check_section("dataset.split", [&] { dataset.split.validate(); });
            if (dataset.source == DatasetSpec::Source::Csv && dataset.csv_target_columns == 0)
                throw ConfigError("dataset.csv.target_columns", "must be positive");
        }
    }
    switch (task) {
        case Task::TrainNN: check_section("trainer", [&] { trainer.validate(); }); break;
        case Task::ANFIS:
            check_section("anfis.training", [&] { anfis.training.validate(); });
            if (anfis.terms_per_var < 2) throw ConfigError("anfis.terms_per_var", "must be at least 2");
            break;
        case Task::MLEANN: check_section("mleann", [&] { mleann.validate(); }); break;
        case Task::EvoNF: check_section("evonf", [&] { evonf.validate(); }); break;
        case Task::EABench:
            check_section("ea", [&] { ea.validate(); });
            if (bench.dimension < 1) throw ConfigError("benchmark.dimension", "must be at least 1");
            if (!(bench.lower < bench.upper)) throw ConfigError("benchmark.upper", "must exceed lower");
            break;
        case Task::GenSeries: break;
    }
    if (uses_ea(task) && !(controller.pop_fraction >= 0 && controller.crossover >= 0 && controller.mutation >= 0))
        throw ConfigError("controller", "bandwidths must be non-negative");
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    Section root(j, "");
    ExperimentConfig c;
    if (!root.has("task")) throw ConfigError("task", "required");
    root.read_enum("task", c.task, task_from_string);
    root.read("name", c.name);
    if (c.name.empty()) c.name = std::string(to_string(c.task));
    root.read("seed", c.seed);
    std::string out;
    root.read("output_dir", out);
    c.output_dir = out;
    if (c.task == Task::MLEANN) c.mleann = MLEANNConfig{};
    if (c.task == Task::EvoNF) c.evonf = EvoNFConfig{};

    auto require = [&](const char* key) {
        if (!root.has(key)) throw ConfigError(key, "section required for task " + std::string(to_string(c.task)));
    };
    auto forbid_section = [&](const char* key) {
        forbid(root, key, "section not used by task " + std::string(to_string(c.task)));
    };

    if (uses_dataset(c.task)) {
        require("dataset");
        parse_dataset(root.sub("dataset"), c.dataset, c.task, base_dir);
    } else {
        forbid_section("dataset");
    }
    if (c.task == Task::TrainNN) {
        parse_network(root.sub("network"), c.network);
        parse_trainer(root.sub("trainer"), c.trainer);
    } else {
        forbid_section("network");
        forbid_section("trainer");
    }
    if (c.task == Task::ANFIS) parse_anfis(root.sub("anfis"), c.anfis);
    else forbid_section("anfis");
    if (c.task == Task::MLEANN) parse_mleann(root.sub("mleann"), c.mleann);
    else forbid_section("mleann");
    if (c.task == Task::EvoNF) parse_evonf(root.sub("evonf"), c.evonf);
    else forbid_section("evonf");
    if (c.task == Task::EABench) {
        require("benchmark");
        parse_bench(root.sub("benchmark"), c.bench);
    } else {
        forbid_section("benchmark");
    }
    if (uses_ea(c.task)) {
        parse_ea(root.sub("ea"), task_ea(c));
        Section bw = root.sub("controller");
        bw.read("pop_fraction", c.controller.pop_fraction);
        bw.read("crossover", c.controller.crossover);
        bw.read("mutation", c.controller.mutation);
        bw.finish();
    } else {
        forbid_section("ea");
        forbid_section("controller");
    }
    root.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    const json j = read_json_file(path);
    return parse_config(j, path.has_parent_path() ? fs::absolute(path).parent_path() : fs::current_path());
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["task"] = to_string(c.task);
    j["name"] = c.name;
    j["seed"] = c.seed;
    if (!c.output_dir.empty()) j["output_dir"] = c.output_dir.string();
    if (uses_dataset(c.task)) j["dataset"] = dataset_json(c.dataset, c.task);
    switch (c.task) {
        case Task::TrainNN:
            j["network"] = network_json(c.network);
            j["trainer"] = trainer_json(c.trainer);
            break;
        case Task::ANFIS: j["anfis"] = anfis_json(c.anfis); break;
        case Task::MLEANN: j["mleann"] = mleann_json(c.mleann); break;
        case Task::EvoNF: j["evonf"] = evonf_json(c.evonf); break;
        case Task::EABench:
            j["benchmark"] = {{"function", to_string(c.bench.function)},
                              {"dimension", c.bench.dimension},
                              {"lower", c.bench.lower},
                              {"upper", c.bench.upper}};
            break;
        case Task::GenSeries: break;
    }
    if (uses_ea(c.task)) {
        j["ea"] = ea_json(task_ea(c));
        j["controller"] = {{"pop_fraction", c.controller.pop_fraction},
                           {"crossover", c.controller.crossover},
                           {"mutation", c.controller.mutation}};
    }
    return j;
}

PreparedData prepare_data(const DatasetSpec& spec) {
    PreparedData out;
    if (spec.source == DatasetSpec::Source::MackeyGlass) {
        out.full = embed_series(gen_mackey_glass(spec.mackey_glass), spec.lags, spec.horizon, "mackey_glass");
    } else {
        out.full = load_csv(spec.csv_path, spec.csv_has_header, spec.csv_target_columns);
    }
    out.parts = split(out.full, spec.split);
    if (spec.normalize) {
        auto [train, scaler] = normalize_minmax(out.parts.train);
        out.parts.train = std::move(train);
        out.parts.valid = scaler.transform(out.parts.valid);
        out.parts.test = scaler.transform(out.parts.test);
        out.full = scaler.transform(out.full);
    }
    out.fingerprint = fingerprint(out.full);
    return out;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + tmp.string());
        f << contents;
        if (!f.flush()) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);

    json record;
    record["toolkit"] = {{"name", "hybridci"}, {"version", toolkit_version()}};
    record["name"] = cfg.name;
    record["task"] = to_string(cfg.task);
    record["seed"] = cfg.seed;
    record["config"] = to_json(cfg);

    TaskOutput out;
    if (cfg.task == Task::GenSeries) {
        out = run_gen_series(cfg);
    } else if (cfg.task == Task::EABench) {
        out = run_ea_bench(cfg);
    } else {
        const PreparedData data = prepare_data(cfg.dataset);
        record["dataset"] = {{"name", data.full.name},
                             {"fingerprint", hex64(data.fingerprint)},
                             {"input_width", data.full.input_width()},
                             {"target_width", data.full.target_width()},
                             {"rows",
                              {{"train", data.parts.train.size()},
                               {"valid", data.parts.valid.size()},
                               {"test", data.parts.test.size()}}}};
        switch (cfg.task) {
            case Task::TrainNN: out = run_train_nn(cfg, data); break;
            case Task::ANFIS: out = run_anfis(cfg, data); break;
            case Task::MLEANN: out = run_mleann_task(cfg, data); break;
            case Task::EvoNF: out = run_evonf_task(cfg, data); break;
            default: break;
        }
    }

    record["diverged"] = out.diverged;
    record["metrics"] = out.metrics;
    record["parameter_count"] = out.parameter_count;
    record["history"] = out.history;
    record["model"] = out.model;
    record["extra"] = out.extra;
    record["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (out.series) write_file_atomic(out_dir / "series.csv", *out.series);
    if (cfg.task != Task::GenSeries) write_file_atomic(out_dir / "history.csv", out.history_csv);
    if (out.predictions) write_file_atomic(out_dir / "predictions.csv", *out.predictions);
    write_file_atomic(out_dir / "run.json", record.dump(2) + "\n");

    RunOutcome result;
    result.diverged = out.diverged;
    result.exit_code = out.diverged ? kExitDiverged : kExitOk;
    result.record = std::move(record);
    return result;
}

std::vector<CompareRow> compare_runs(const std::vector<fs::path>& dirs) {
    if (dirs.size() < 2) throw InvalidInput("compare needs at least two run directories");
    std::vector<CompareRow> rows;
    std::optional<std::string> fp;
    for (const auto& dir : dirs) {
        const json r = read_json_file(dir / "run.json");
        if (!r.contains("dataset") || !r["dataset"].contains("fingerprint"))
            throw InvalidInput(dir.string() + ": run has no dataset fingerprint");
        const std::string this_fp = r["dataset"]["fingerprint"].get<std::string>();
        if (fp && *fp != this_fp)
            throw InvalidInput("dataset fingerprints differ: " + *fp + " vs " + this_fp + " in " + dir.string());
        fp = this_fp;
        const json& t = r["metrics"]["test_rmse"];
        CompareRow row;
        row.name = r["name"].get<std::string>();
        row.dir = dir;
        row.test_rmse = t.is_number() ? t.get<double>() : std::numeric_limits<double>::infinity();
        row.parameter_count = r["parameter_count"].get<std::int64_t>();
        row.duration_seconds = r["duration_seconds"].get<double>();
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CompareRow& a, const CompareRow& b) { return a.test_rmse < b.test_rmse; });
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::string s = "name,test_rmse,parameter_count,duration_seconds,run_dir\n";
    for (const auto& r : rows)
        s += csv_line({r.name, format_double(r.test_rmse), std::to_string(r.parameter_count),
                       format_double(r.duration_seconds), r.dir.string()});
    return s;
}

std::string compare_text(const std::vector<CompareRow>& rows) {
    std::size_t w = 4;
    for (const auto& r : rows) w = std::max(w, r.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w)) << "name" << "  " << std::right << std::setw(14) << "test_rmse"
       << "  " << std::setw(10) << "params" << "  " << std::setw(10) << "seconds" << "  run_dir\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(static_cast<int>(w)) << r.name << "  " << std::right << std::setw(14)
           << std::setprecision(6) << std::scientific << r.test_rmse << "  " << std::setw(10) << r.parameter_count
           << "  " << std::setw(10) << std::fixed << std::setprecision(2) << r.duration_seconds << "  "
           << r.dir.string() << '\n';
        os.unsetf(std::ios::floatfield);
    }
    return os.str();
}

}  // namespace hybridci
