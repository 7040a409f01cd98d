#pragma once

#include <memory>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "hybridci/evolution.hpp"
#include "hybridci/neurofuzzy.hpp"

namespace hybridci {

/// Training applied inside an EvoNF fitness evaluation.
///   None             TS: one least-squares consequent pass; Mamdani: untrained
///   ConsequentsOnly  antecedents frozen
///   FullHybrid       antecedents and consequents
enum class LearningStrategy { None, ConsequentsOnly, FullHybrid };
std::string_view to_string(LearningStrategy s);
LearningStrategy learning_strategy_from_string(std::string_view s);

struct FISUniverses {
    std::vector<std::pair<double, double>> inputs;
    std::pair<double, double> output{0, 1};

    /// Column ranges of the dataset; a constant column is widened by 0.5 each way.
    static FISUniverses from_dataset(const Dataset& ds);
    void validate() const;
};

struct EvoNFConfig {
    /// Population 20, 20 generations, crossover 0.7, per-span sigmas
    /// mf 0.2 > rule_base 0.1 > operators 0.05 > fis_type 0.02.
    EAConfig ea{default_ea()};
    std::size_t terms_per_var{2};
    std::size_t min_epochs{1};
    std::size_t max_epochs{50};
    FitnessSplit fitness_split{FitnessSplit::Valid};
    LearningStrategy strategy{LearningStrategy::FullHybrid};
    /// Pinning any of these collapses the matching gene to a single value.
    std::optional<FISKind> fixed_kind;
    std::optional<TNorm> fixed_tnorm;
    std::optional<TConorm> fixed_tconorm;
    std::optional<Defuzzifier> fixed_defuzz;

    static EAConfig default_ea();
    void validate() const;
};

/// Spans, in order:
///
///   fis_type   one gene, >= 0.5 selects Takagi-Sugeno
///   operators  tnorm (>= 0.5 product), tconorm (> 0.5 probabilistic sum),
///              defuzzifier (> 0.5 mean of maxima)
///   rule_base  T^d activity flags (>= 0.5 active), then T^d Mamdani
///              consequent selectors picking output term floor(g T)
///   mf         per variable (inputs, then output) and term: offsets of
///              (a, b, c) from the grid triangle, in units of the grid spacing
///   learning   epochs, log10 antecedent_lr in [-4, log10 0.5], ridge in [0, 0.01]
std::shared_ptr<const GenomeLayout> evonf_layout(const EvoNFConfig& cfg, const FISUniverses& universes);

struct EvoNFDecoded {
    FuzzySystem system;
    NFTrainConfig training;
};

/// Total decoding. Term points are sorted and kept within one grid spacing of
/// the universe. Takagi-Sugeno systems use triangles and zero consequents;
/// Mamdani systems turn (a, b, c) into a gaussian centred at b with sigma
/// (c - a) / 4. When no flag reaches 0.5 the rule with the highest flag is kept.
EvoNFDecoded decode_fis(const Genome& g, const FISUniverses& universes);

/// Inverse of decode_fis for grid-shaped systems. Takagi-Sugeno consequent
/// coefficients are not part of the genome. Genes are clamped into the
/// layout bounds, so pinned spans keep their pinned value.
Genome encode_fis(const EvoNFDecoded& model, std::shared_ptr<const GenomeLayout> layout,
                  const FISUniverses& universes);

struct EvoNFEvaluation {
    EvoNFDecoded decoded;
    FuzzySystem trained;
    double fitness{kPenaltyFitness};
    std::size_t epochs_run{0};
    bool diverged{false};
};

/// Decode, train on `train` under the strategy, score RMSE on `eval`.
EvoNFEvaluation evonf_evaluate(const Genome& g, const FISUniverses& universes, LearningStrategy strategy,
                               const Dataset& train, const Dataset& eval);

double evonf_fitness(const Genome& g, const FISUniverses& universes, LearningStrategy strategy,
                     const Dataset& train, const Dataset& eval);

struct EvoNFRun {
    FISUniverses universes;
    EvolveResult evolution;
    EvoNFEvaluation best;
    double train_rmse{0};
    double valid_rmse{0};
    double test_rmse{0};
    Vector test_predictions;
    std::size_t total_epochs{0};
    bool diverged{false};
};

/// Universes come from the training split.
EvoNFRun evonf_run(const EvoNFConfig& cfg, const Dataset& train, const Dataset& valid, const Dataset& test,
                   const GenerationObserver& observer = {});

}  // namespace hybridci
