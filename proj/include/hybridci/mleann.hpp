#pragma once

#include <memory>

#include "hybridci/evolution.hpp"
#include "hybridci/trainers.hpp"

namespace hybridci {

struct MLEANNConfig {
    /// Population 30, 40 generations, elitism 1, per-span sigmas
    /// weights 0.2 > architecture 0.1 > learning 0.05.
    EAConfig ea{default_ea()};
    std::size_t max_hidden{16};
    std::size_t min_epochs{10};
    std::size_t max_epochs{200};
    /// Initial weight genes lie in [-weight_bound, weight_bound].
    double weight_bound{2.0};
    FitnessSplit fitness_split{FitnessSplit::Valid};

    static EAConfig default_ea();
    void validate() const;
};

/// Three spans, in order:
///
///   learning      algorithm, log10 learning_rate in [-4, 0], momentum in
///                 [0, 0.95], log10 lm_lambda0 in [-6, 0], epochs
///   architecture  hidden-layer count in [1, 2], neurons of layer 1 and 2 in
///                 [1, max_hidden], transfer selectors of layer 1 and 2
///   weights       parameters of the maximal d-H-H-m network in mlp order
///
/// Selectors live on [0, 1] and pick bin floor(g K) of SCG, QNA, BP, LM or
/// sigmoid, tanh, gaussian. Integer genes round to nearest with ties down.
std::shared_ptr<const GenomeLayout> mleann_layout(const MLEANNConfig& cfg, Eigen::Index inputs,
                                                  Eigen::Index outputs);

struct MLEANNDecoded {
    MLPNetwork network;
    TrainerConfig trainer;
};

/// Total: every in-bounds genome with a matching layout decodes. A one-layer
/// network takes rows 0..h-1 of the first maximal matrix and the first h
/// columns plus bias of the output matrix; the second layer uses the top-left
/// h2 x h1 corner of the middle matrix. Other weight genes are ignored.
MLEANNDecoded mleann_decode(const Genome& g, Eigen::Index inputs, Eigen::Index outputs);

/// Inverse of mleann_decode for networks that fit the layout. Masked genes
/// are zero and selectors sit at bin centres.
Genome mleann_encode(const MLEANNDecoded& model, std::shared_ptr<const GenomeLayout> layout);

struct MLEANNEvaluation {
    MLEANNDecoded decoded;
    MLPNetwork trained;
    double fitness{kPenaltyFitness};
    std::size_t epochs_run{0};
    bool diverged{false};
};

/// Decode, train on `train` with the genome's own trainer, score RMSE on `eval`.
MLEANNEvaluation mleann_evaluate(const Genome& g, const Dataset& train, const Dataset& eval);

/// mleann_evaluate(...).fitness; divergence scores kPenaltyFitness.
double mleann_fitness(const Genome& g, const Dataset& train, const Dataset& eval);

struct MLEANNRun {
    EvolveResult evolution;
    MLEANNEvaluation best;
    double train_rmse{0};
    double valid_rmse{0};
    double test_rmse{0};
    Matrix test_predictions;
    /// Training epochs spent by every fitness evaluation.
    std::size_t total_epochs{0};
    bool diverged{false};
};

MLEANNRun mleann_run(const MLEANNConfig& cfg, const Dataset& train, const Dataset& valid, const Dataset& test,
                     const GenerationObserver& observer = {});

}  // namespace hybridci
