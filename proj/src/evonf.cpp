#include "hybridci/evonf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace hybridci {

namespace {

enum OperatorGene : Eigen::Index { TNormGene, TConormGene, DefuzzGene };
enum LearningGene : Eigen::Index { EpochsGene, LogRateGene, RidgeGene };

const double kLogMaxRate = std::log10(0.5);
constexpr double kMaxRidge = 1e-2;

struct Shape {
    std::size_t d{0};
    std::size_t terms{0};
    std::size_t rules{0};
};

std::size_t int_pow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (r > (std::size_t{1} << 20) / base) throw InvalidInput("evonf: rule base too large");
        r *= base;
    }
    return r;
}

Shape shape_of(const GenomeLayout& layout, const FISUniverses& u) {
    for (const char* name : {"fis_type", "operators", "rule_base", "mf", "learning"})
        if (!layout.has_span(name)) throw InvalidInput(std::string("evonf: layout lacks span '") + name + "'");
    Shape s;
    s.d = u.inputs.size();
    const auto mf_len = static_cast<std::size_t>(layout.span("mf").length);
    if (s.d == 0 || mf_len % (3 * (s.d + 1)) != 0) throw InvalidInput("evonf: mf span does not match the universes");
    s.terms = mf_len / (3 * (s.d + 1));
    if (s.terms < 2) throw InvalidInput("evonf: layout has fewer than two terms per variable");
    s.rules = int_pow(s.terms, s.d);
    if (layout.span("fis_type").length != 1 || layout.span("operators").length != 3 ||
        static_cast<std::size_t>(layout.span("rule_base").length) != 2 * s.rules ||
        layout.span("learning").length != 3)
        throw InvalidInput("evonf: layout spans do not match a grid of " + std::to_string(s.terms) + " terms over " +
                           std::to_string(s.d) + " inputs");
    return s;
}

std::size_t bin(double g, std::size_t k) {
    const double b = std::floor(std::clamp(g, 0.0, 1.0) * static_cast<double>(k));
    return std::min(k - 1, static_cast<std::size_t>(b));
}

double bin_centre(std::size_t i, std::size_t k) { return (static_cast<double>(i) + 0.5) / static_cast<double>(k); }

double step_of(const std::pair<double, double>& u, std::size_t terms) {
    return (u.second - u.first) / static_cast<double>(terms - 1);
}

// Sorted (a, b, c) inside [lo, hi] with c - a >= kMinWidth.
std::array<double, 3> tidy_triangle(std::array<double, 3> p, double lo, double hi) {
    std::sort(p.begin(), p.end());
    for (double& v : p) v = std::clamp(v, lo, hi);
    if (p[2] - p[0] < kMinWidth) {
        if (p[0] + kMinWidth <= hi) {
            p[2] = p[0] + kMinWidth;
        } else {
            p[0] = p[2] - kMinWidth;
        }
        p[1] = std::clamp(p[1], p[0], p[2]);
    }
    return p;
}

FuzzyVariable decode_variable(std::string name, const std::pair<double, double>& u, std::size_t terms,
                              const double* offsets, bool gaussian) {
    FuzzyVariable v{std::move(name), u.first, u.second, grid_terms(u.first, u.second, terms)};
    const double step = step_of(u, terms);
    for (std::size_t k = 0; k < terms; ++k) {
        MembershipFn& mf = v.terms[k];
        std::array<double, 3> p{};
        for (std::size_t i = 0; i < 3; ++i) p[i] = mf.params[i] + offsets[3 * k + i] * step;
        p = tidy_triangle(p, u.first - step, u.second + step);
        if (gaussian) {
            mf = MembershipFn::gaussian(p[1], std::max((p[2] - p[0]) / 4, kMinWidth), mf.label);
        } else {
            mf.params = {p[0], p[1], p[2], 0};
        }
    }
    return v;
}

void check_datasets(const Dataset& train, const Dataset& valid, const Dataset& test) {
    for (const Dataset* ds : {&train, &valid, &test}) ds->validate();
    if (train.target_width() != 1) throw InvalidInput("evonf_run: fuzzy systems need exactly one target column");
    for (const Dataset* ds : {&valid, &test})
        if (ds->input_width() != train.input_width() || ds->target_width() != 1)
            throw InvalidInput("evonf_run: split '" + ds->name + "' has a different shape from the training split");
}

}  // namespace

std::string_view to_string(LearningStrategy s) {
    switch (s) {
        case LearningStrategy::None: return "none";
        case LearningStrategy::ConsequentsOnly: return "consequents_only";
        case LearningStrategy::FullHybrid: return "full_hybrid";
    }
    return "full_hybrid";
}

LearningStrategy learning_strategy_from_string(std::string_view s) {
    if (s == "none") return LearningStrategy::None;
    if (s == "consequents_only") return LearningStrategy::ConsequentsOnly;
    if (s == "full_hybrid") return LearningStrategy::FullHybrid;
    throw InvalidInput("unknown learning strategy '" + std::string(s) + "'");
}

FISUniverses FISUniverses::from_dataset(const Dataset& ds) {
    ds.validate();
    auto range = [](const auto& col) {
        std::pair<double, double> r{col.minCoeff(), col.maxCoeff()};
        if (!(r.first < r.second)) {
            r.first -= 0.5;
            r.second += 0.5;
        }
        return r;
    };
    FISUniverses u;
    for (Eigen::Index j = 0; j < ds.input_width(); ++j) u.inputs.push_back(range(ds.inputs.col(j)));
    u.output = range(ds.targets.col(0));
    return u;
}

void FISUniverses::validate() const {
    if (inputs.empty()) throw InvalidInput("FISUniverses: needs at least one input");
    auto ok = [](const std::pair<double, double>& r) {
        return std::isfinite(r.first) && std::isfinite(r.second) && r.first < r.second;
    };
    for (const auto& r : inputs)
        if (!ok(r)) throw InvalidInput("FISUniverses: each universe needs finite min < max");
    if (!ok(output)) throw InvalidInput("FISUniverses: output universe needs finite min < max");
}

EAConfig EvoNFConfig::default_ea() {
    EAConfig ea;
    ea.population_size = 20;
    ea.generations = 20;
    ea.crossover_rate = 0.7;
    ea.mutation_sigma.per_span = {
        {"fis_type", 0.02}, {"operators", 0.05}, {"rule_base", 0.1}, {"mf", 0.2}, {"learning", 0.1}};
    return ea;
}

void EvoNFConfig::validate() const {
    ea.validate();
    if (terms_per_var < 2) throw InvalidInput("EvoNFConfig: terms_per_var must be at least 2");
    if (min_epochs < 1 || max_epochs < min_epochs)
        throw InvalidInput("EvoNFConfig: epoch bounds need 1 <= min_epochs <= max_epochs");
}

std::shared_ptr<const GenomeLayout> evonf_layout(const EvoNFConfig& cfg, const FISUniverses& u) {
    cfg.validate();
    u.validate();
    const std::size_t rules = int_pow(cfg.terms_per_var, u.inputs.size());
    auto layout = std::make_shared<GenomeLayout>();

    auto pinned = [](bool is_set, bool high) {
        return is_set ? std::pair{high ? 1.0 : 0.0, high ? 1.0 : 0.0} : std::pair{0.0, 1.0};
    };
    const auto kind = pinned(cfg.fixed_kind.has_value(), cfg.fixed_kind == FISKind::TakagiSugeno);
    layout->add_span("fis_type", Vector::Constant(1, kind.first), Vector::Constant(1, kind.second));

    const std::array ops{pinned(cfg.fixed_tnorm.has_value(), cfg.fixed_tnorm == TNorm::Product),
                         pinned(cfg.fixed_tconorm.has_value(), cfg.fixed_tconorm == TConorm::ProbabilisticSum),
                         pinned(cfg.fixed_defuzz.has_value(), cfg.fixed_defuzz == Defuzzifier::MeanOfMaxima)};
    Vector lo(3), hi(3);
    for (Eigen::Index i = 0; i < 3; ++i) {
        lo[i] = ops[static_cast<std::size_t>(i)].first;
        hi[i] = ops[static_cast<std::size_t>(i)].second;
    }
    layout->add_span("operators", lo, hi);
    layout->add_span("rule_base", static_cast<Eigen::Index>(2 * rules), 0, 1);
    layout->add_span("mf", static_cast<Eigen::Index>(3 * cfg.terms_per_var * (u.inputs.size() + 1)), -1, 1);

    lo << static_cast<double>(cfg.min_epochs), -4, 0;
    hi << static_cast<double>(cfg.max_epochs), kLogMaxRate, kMaxRidge;
    layout->add_span("learning", lo, hi);
    return layout;
}

EvoNFDecoded decode_fis(const Genome& g, const FISUniverses& u) {
    if (!g.layout) throw InvalidInput("decode_fis: genome has no layout");
    u.validate();
    const GenomeLayout& layout = *g.layout;
    const Shape s = shape_of(layout, u);
    if (g.genes.size() != layout.size()) throw InvalidInput("decode_fis: gene count does not match its layout");
    auto gene = [&](std::string_view span, Eigen::Index i) { return g.genes[layout.span(span).offset + i]; };

    EvoNFDecoded out;
    FuzzySystem& fs = out.system;
    fs.kind = gene("fis_type", 0) >= 0.5 ? FISKind::TakagiSugeno : FISKind::Mamdani;
    fs.tnorm = gene("operators", TNormGene) >= 0.5 ? TNorm::Product : TNorm::Min;
    fs.tconorm = gene("operators", TConormGene) > 0.5 ? TConorm::ProbabilisticSum : TConorm::Max;
    fs.defuzz = gene("operators", DefuzzGene) > 0.5 ? Defuzzifier::MeanOfMaxima : Defuzzifier::Centroid;
    const bool mamdani = fs.kind == FISKind::Mamdani;

    const double* mf = g.genes.data() + layout.span("mf").offset;
    const std::size_t per_var = 3 * s.terms;
    for (std::size_t j = 0; j < s.d; ++j)
        fs.inputs.push_back(decode_variable("x" + std::to_string(j + 1), u.inputs[j], s.terms, mf + j * per_var, mamdani));
    if (mamdani) fs.output = decode_variable("y", u.output, s.terms, mf + s.d * per_var, true);

    const Eigen::Index flags = layout.span("rule_base").offset;
    const auto rules = static_cast<Eigen::Index>(s.rules);
    auto active = [&](std::size_t r) { return g.genes[flags + static_cast<Eigen::Index>(r)] >= 0.5; };
    std::size_t forced = s.rules;
    bool any = false;
    for (std::size_t r = 0; r < s.rules && !any; ++r) any = active(r);
    if (!any) {
        Eigen::Index best = 0;
        g.genes.segment(flags, rules).maxCoeff(&best);
        forced = static_cast<std::size_t>(best);
    }
    for (std::size_t r = 0; r < s.rules; ++r) {
        if (!active(r) && r != forced) continue;
        FuzzyRule rule;
        std::size_t rem = r;
        for (std::size_t j = 0; j < s.d; ++j) {
            rule.antecedent.push_back(static_cast<int>(rem % s.terms));
            rem /= s.terms;
        }
        if (mamdani)
            rule.consequent_term = static_cast<int>(bin(g.genes[flags + rules + static_cast<Eigen::Index>(r)], s.terms));
        else
            rule.coefficients = Vector::Zero(static_cast<Eigen::Index>(s.d + 1));
        fs.rules.push_back(std::move(rule));
    }
    fs.validate();

    const auto& ls = layout.span("learning");
    auto learn_lo = [&](Eigen::Index i) { return layout.lower[ls.offset + i]; };
    auto learn_hi = [&](Eigen::Index i) { return layout.upper[ls.offset + i]; };
    const double epochs = std::clamp(std::ceil(gene("learning", EpochsGene) - 0.5), std::max(1.0, std::ceil(learn_lo(EpochsGene))),
                                     std::max(1.0, std::floor(learn_hi(EpochsGene))));
    out.training.epochs = static_cast<std::size_t>(epochs);
    out.training.antecedent_lr =
        std::pow(10.0, std::clamp(gene("learning", LogRateGene), learn_lo(LogRateGene), learn_hi(LogRateGene)));
    out.training.ridge = std::clamp(gene("learning", RidgeGene), 0.0, std::max(0.0, learn_hi(RidgeGene)));
    return out;
}

Genome encode_fis(const EvoNFDecoded& model, std::shared_ptr<const GenomeLayout> layout, const FISUniverses& u) {
    if (!layout) throw InvalidInput("encode_fis: missing layout");
    u.validate();
    const Shape s = shape_of(*layout, u);
    const FuzzySystem& fs = model.system;
    fs.validate();
    const bool mamdani = fs.kind == FISKind::Mamdani;
    if (fs.inputs.size() != s.d) throw InvalidInput("encode_fis: input count does not match the layout");

    Genome g{Vector::Zero(layout->size()), layout};
    auto set = [&](std::string_view span, Eigen::Index i, double v) { g.genes[layout->span(span).offset + i] = v; };
    set("fis_type", 0, mamdani ? 0.25 : 0.75);
    set("operators", TNormGene, fs.tnorm == TNorm::Product ? 0.75 : 0.25);
    set("operators", TConormGene, fs.tconorm == TConorm::ProbabilisticSum ? 0.75 : 0.25);
    set("operators", DefuzzGene, fs.defuzz == Defuzzifier::MeanOfMaxima ? 0.75 : 0.25);

    const Eigen::Index flags = layout->span("rule_base").offset;
    const auto rules = static_cast<Eigen::Index>(s.rules);
    g.genes.segment(flags, 2 * rules).setConstant(0.25);
    for (const FuzzyRule& rule : fs.rules) {
        std::size_t cell = 0, scale = 1;
        for (int t : rule.antecedent) {
            if (t == kAnyTerm) throw InvalidInput("encode_fis: rules must name a term for every input");
            cell += static_cast<std::size_t>(t) * scale;
            scale *= s.terms;
        }
        g.genes[flags + static_cast<Eigen::Index>(cell)] = 0.75;
        if (mamdani)
            g.genes[flags + rules + static_cast<Eigen::Index>(cell)] =
                bin_centre(static_cast<std::size_t>(rule.consequent_term), s.terms);
    }

    auto encode_variable = [&](const FuzzyVariable& v, const std::pair<double, double>& uv, std::size_t slot) {
        if (v.terms.size() != s.terms) throw InvalidInput("encode_fis: variable '" + v.name + "' has the wrong term count");
        const auto grid = grid_terms(uv.first, uv.second, s.terms);
        const double step = step_of(uv, s.terms);
        const Eigen::Index base = layout->span("mf").offset + static_cast<Eigen::Index>(slot * 3 * s.terms);
        for (std::size_t k = 0; k < s.terms; ++k) {
            const MembershipFn& mf = v.terms[k];
            std::array<double, 3> p{};
            if (mamdani && mf.kind == MFKind::Gaussian) {
                p = {mf.params[0] - 2 * mf.params[1], mf.params[0], mf.params[0] + 2 * mf.params[1]};
            } else if (!mamdani && mf.kind == MFKind::Triangular) {
                p = {mf.params[0], mf.params[1], mf.params[2]};
            } else {
                throw InvalidInput("encode_fis: variable '" + v.name + "' uses an unsupported membership kind");
            }
            for (std::size_t i = 0; i < 3; ++i) {
                const double off = (p[i] - grid[k].params[i]) / step;
                if (!(std::abs(off) <= 1)) throw InvalidInput("encode_fis: term of '" + v.name + "' lies outside the genome bounds");
                g.genes[base + static_cast<Eigen::Index>(3 * k + i)] = off;
            }
        }
    };
    for (std::size_t j = 0; j < s.d; ++j) encode_variable(fs.inputs[j], u.inputs[j], j);
    if (mamdani) encode_variable(*fs.output, u.output, s.d);

    set("learning", EpochsGene, static_cast<double>(model.training.epochs));
    set("learning", LogRateGene, std::log10(model.training.antecedent_lr));
    set("learning", RidgeGene, model.training.ridge);
    g.clamp();
    return g;
}

EvoNFEvaluation evonf_evaluate(const Genome& g, const FISUniverses& u, LearningStrategy strategy, const Dataset& train,
                               const Dataset& eval) {
    EvoNFEvaluation out;
    out.decoded = decode_fis(g, u);
    out.trained = out.decoded.system;
    NFTrainConfig tc = out.decoded.training;
    tc.freeze_antecedents = strategy == LearningStrategy::ConsequentsOnly;
    const bool ts = out.decoded.system.kind == FISKind::TakagiSugeno;
    try {
        if (strategy == LearningStrategy::None) {
            if (ts) {
                out.trained = fit_consequents(out.decoded.system, train, tc.ridge).system;
                out.epochs_run = 1;
            }
        } else {
            NFTrainResult r = ts ? hybrid_train_ts(out.decoded.system, train, tc)
                                 : gradient_train_mamdani(out.decoded.system, train, tc);
            out.trained = std::move(r.system);
            out.epochs_run = r.epochs_run;
            out.diverged = r.diverged;
        }
    } catch (const Error&) {
        out.diverged = true;
    }
    if (out.diverged) return out;
    const double e = rmse(predict(out.trained, eval.inputs), eval.targets.col(0));
    if (std::isfinite(e)) {
        out.fitness = e;
    } else {
        out.diverged = true;
    }
    return out;
}

double evonf_fitness(const Genome& g, const FISUniverses& u, LearningStrategy strategy, const Dataset& train,
                     const Dataset& eval) {
    return evonf_evaluate(g, u, strategy, train, eval).fitness;
}

EvoNFRun evonf_run(const EvoNFConfig& cfg, const Dataset& train, const Dataset& valid, const Dataset& test,
                   const GenerationObserver& observer) {
    cfg.validate();
    check_datasets(train, valid, test);
    const Dataset& eval = cfg.fitness_split == FitnessSplit::Valid ? valid : test;

    EvoNFRun run;
    run.universes = FISUniverses::from_dataset(train);
    const auto layout = evonf_layout(cfg, run.universes);
    std::atomic<std::size_t> epochs{0};
    const GenomeFactory init = [&](RngStream& rng) { return Genome::uniform(layout, rng); };
    const FitnessFn fitness = [&](const Genome& g) {
        const EvoNFEvaluation e = evonf_evaluate(g, run.universes, cfg.strategy, train, eval);
        epochs += e.epochs_run;
        return e.fitness;
    };

    run.evolution = evolve(init, fitness, cfg.ea, observer);
    run.total_epochs = epochs.load();
    run.best = evonf_evaluate(run.evolution.best, run.universes, cfg.strategy, train, eval);
    run.diverged = run.best.diverged;
    const FuzzySystem& fs = run.best.trained;
    run.train_rmse = rmse(predict(fs, train.inputs), train.targets.col(0));
    run.valid_rmse = rmse(predict(fs, valid.inputs), valid.targets.col(0));
    run.test_predictions = predict(fs, test.inputs);
    run.test_rmse = rmse(run.test_predictions, test.targets.col(0));
    return run;
}

}  // namespace hybridci
