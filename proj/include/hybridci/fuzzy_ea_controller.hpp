#pragma once

#include "hybridci/evolution.hpp"
#include "hybridci/fuzzy.hpp"

namespace hybridci {

/// Minimisation-oriented fitness ratios; values near 1 mean a converged
/// population.
struct ControllerInputs {
    double avg_over_best{1.5};
    double worst_over_avg{2.0};
    /// (best - prev_best) / |prev_best|, in [-1, 0] under elitism.
    double delta_best_norm{-0.5};
};

struct ControllerOutputs {
    long delta_pop{0};
    double delta_crossover{0};
    double delta_mutation{0};
};

struct ControllerBandwidth {
    double pop_fraction{0.2};
    double crossover{0.1};
    double mutation{0.05};
};

/// One single-output Mamdani system per adjusted parameter, all sharing the
/// inputs (avg_over_best, worst_over_avg, delta_best_norm). The population
/// system's output is a fraction of the current size.
struct FuzzyController {
    FuzzySystem population;
    FuzzySystem crossover;
    FuzzySystem mutation;
    ControllerBandwidth bandwidth;

    /// Inputs use low / medium / high triangles over [1, 2], [1, 3], [-1, 0];
    /// outputs use negative / zero / positive over +-bandwidth.
    ///
    /// mutation:   avg low & delta high -> +, avg low & delta medium -> +,
    ///             avg medium -> 0, avg high -> -, delta low -> 0
    /// population: delta low -> -, delta medium -> 0, delta high & avg low -> +,
    ///             delta high & avg medium -> 0, delta high & avg high -> 0
    /// crossover:  worst low -> -, worst medium -> 0, worst high -> +, delta low -> 0
    static FuzzyController shipped(const ControllerBandwidth& bw = {});
    void validate() const;
};

/// Neutral inputs when best or prev_best is not positive and finite.
ControllerInputs controller_inputs(const GenerationStats& stats, double prev_best);

ControllerOutputs controller_step(const GenerationStats& stats, double prev_best,
                                  const FuzzyController& controller = FuzzyController::shipped());

/// Population clamped to [2 + elitism, max_population] (no upper bound when
/// max_population is 0); rates clamped to [0, 1].
EAConfig apply_outputs(const EAConfig& cfg, const ControllerOutputs& out);

}  // namespace hybridci
