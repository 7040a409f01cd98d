#include "hybridci/fuzzy_ea_controller.hpp"

#include <algorithm>
#include <cmath>

namespace hybridci {

namespace {

enum Term : int { Low = 0, Medium = 1, High = 2 };
constexpr int Any = kAnyTerm;

std::vector<FuzzyVariable> controller_inputs_vars() {
    auto var = [](std::string name, double lo, double hi) {
        FuzzyVariable v{std::move(name), lo, hi, grid_terms(lo, hi, 3)};
        v.terms[0].label = "low";
        v.terms[1].label = "medium";
        v.terms[2].label = "high";
        return v;
    };
    return {var("avg_over_best", 1, 2), var("worst_over_avg", 1, 3), var("delta_best_norm", -1, 0)};
}

FuzzySystem controller_system(const std::string& output, double band,
                              const std::vector<std::pair<std::array<int, 3>, int>>& rules) {
    FuzzySystem fs;
    fs.kind = FISKind::Mamdani;
    fs.tnorm = TNorm::Min;
    fs.tconorm = TConorm::Max;
    fs.defuzz = Defuzzifier::Centroid;
    fs.inputs = controller_inputs_vars();
    FuzzyVariable out{output, -band, band, grid_terms(-band, band, 3)};
    out.terms[0].label = "negative";
    out.terms[1].label = "zero";
    out.terms[2].label = "positive";
    fs.output = std::move(out);
    for (const auto& [ante, cons] : rules) {
        FuzzyRule r;
        r.antecedent.assign(ante.begin(), ante.end());
        r.consequent_term = cons;
        fs.rules.push_back(std::move(r));
    }
    fs.validate();
    return fs;
}

bool usable(const GenerationStats& s, double prev_best) {
    return std::isfinite(s.best) && std::isfinite(s.average) && std::isfinite(s.worst) && std::isfinite(prev_best) &&
           s.best > 0 && s.average > 0 && prev_best > 0;
}

double clamp_band(double v, double band) { return std::clamp(v, -band, band); }

}  // namespace

FuzzyController FuzzyController::shipped(const ControllerBandwidth& bw) {
    constexpr int Neg = 0, Zero = 1, Pos = 2;
    FuzzyController c;
    c.bandwidth = bw;
    // Antecedent order: (avg_over_best, worst_over_avg, delta_best_norm).
    c.mutation = controller_system("delta_mutation", bw.mutation,
                                   {{{Low, Any, High}, Pos},
                                    {{Low, Any, Medium}, Pos},
                                    {{Medium, Any, Any}, Zero},
                                    {{High, Any, Any}, Neg},
                                    {{Any, Any, Low}, Zero}});
    c.population = controller_system("delta_pop_fraction", bw.pop_fraction,
                                     {{{Any, Any, Low}, Neg},
                                      {{Any, Any, Medium}, Zero},
                                      {{Low, Any, High}, Pos},
                                      {{Medium, Any, High}, Zero},
                                      {{High, Any, High}, Zero}});
    c.crossover = controller_system("delta_crossover", bw.crossover,
                                    {{{Any, Low, Any}, Neg},
                                     {{Any, Medium, Any}, Zero},
                                     {{Any, High, Any}, Pos},
                                     {{Any, Any, Low}, Zero}});
    return c;
}

void FuzzyController::validate() const {
    for (const FuzzySystem* fs : {&population, &crossover, &mutation}) {
        fs->validate();
        if (fs->kind != FISKind::Mamdani || fs->inputs.size() != 3)
            throw InvalidInput("FuzzyController: each system must be a 3-input Mamdani system");
    }
    if (!(bandwidth.pop_fraction >= 0 && bandwidth.crossover >= 0 && bandwidth.mutation >= 0))
        throw InvalidInput("FuzzyController: bandwidths must be non-negative");
}

ControllerInputs controller_inputs(const GenerationStats& stats, double prev_best) {
    ControllerInputs in;
    if (!usable(stats, prev_best)) return in;
    in.avg_over_best = std::clamp(stats.average / stats.best, 1.0, 2.0);
    in.worst_over_avg = std::clamp(stats.worst / stats.average, 1.0, 3.0);
    in.delta_best_norm = std::clamp((stats.best - prev_best) / prev_best, -1.0, 0.0);
    return in;
}

ControllerOutputs controller_step(const GenerationStats& stats, double prev_best, const FuzzyController& controller) {
    ControllerOutputs out;
    if (!usable(stats, prev_best)) return out;
    const ControllerInputs in = controller_inputs(stats, prev_best);
    Vector x(3);
    x << in.avg_over_best, in.worst_over_avg, in.delta_best_norm;
    const auto& bw = controller.bandwidth;
    const double pop_fraction = clamp_band(infer(controller.population, x), bw.pop_fraction);
    out.delta_crossover = clamp_band(infer(controller.crossover, x), bw.crossover);
    out.delta_mutation = clamp_band(infer(controller.mutation, x), bw.mutation);
    const double pop = static_cast<double>(stats.population_size);
    const double limit = std::floor(bw.pop_fraction * pop);
    out.delta_pop = static_cast<long>(std::clamp(std::round(pop_fraction * pop), -limit, limit));
    return out;
}

EAConfig apply_outputs(const EAConfig& cfg, const ControllerOutputs& out) {
    EAConfig next = cfg;
    const long floor_size = static_cast<long>(2 + cfg.elitism);
    long pop = static_cast<long>(cfg.population_size) + out.delta_pop;
    pop = std::max(pop, floor_size);
    if (cfg.max_population != 0) pop = std::min(pop, std::max(static_cast<long>(cfg.max_population), floor_size));
    next.population_size = static_cast<std::size_t>(pop);
    next.crossover_rate = std::clamp(cfg.crossover_rate + out.delta_crossover, 0.0, 1.0);
    next.mutation_rate = std::clamp(cfg.mutation_rate + out.delta_mutation, 0.0, 1.0);
    return next;
}

}  // namespace hybridci
