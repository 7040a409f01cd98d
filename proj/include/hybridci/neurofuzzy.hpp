#pragma once

#include <vector>

#include "hybridci/dataset.hpp"
#include "hybridci/fuzzy.hpp"

namespace hybridci {

struct NFTrainConfig {
    std::size_t epochs{20};
    double antecedent_lr{0.01};
    double ridge{0.0};
    bool freeze_antecedents{false};

    void validate() const;
};

struct NFTrainResult {
    FuzzySystem system;
    /// Entry 0 is the starting loss; one entry per completed epoch follows.
    std::vector<double> loss_curve;
    std::size_t epochs_run{0};
    bool diverged{false};
};

/// Sum of squared errors of a single-output system over the dataset.
double fis_sse(const FuzzySystem& fs, const Dataset& ds);

/// Rows are samples; block i holds wbar_i(x) * (x, 1). Multiplying by the
/// stacked rule coefficients gives the Takagi-Sugeno output.
Matrix ts_design_matrix(const FuzzySystem& fs, const Matrix& inputs);

struct ConsequentFit {
    FuzzySystem system;
    bool rank_deficient{false};
};

/// Least-squares consequents for fixed antecedents.
ConsequentFit fit_consequents(const FuzzySystem& fs, const Dataset& ds, double ridge);

/// d sse / d membership_parameters(fs, false), consequents held fixed.
Vector ts_antecedent_gradient(const FuzzySystem& fs, const Dataset& ds);

/// Alternates a least-squares consequent pass with one gradient step on
/// the input membership parameters (skipped when frozen). Steps that raise
/// the loss are halved up to ten times and otherwise dropped.
NFTrainResult hybrid_train_ts(const FuzzySystem& fs, const Dataset& ds, const NFTrainConfig& cfg);

/// Full-batch descent on gaussian membership parameters using central
/// differences of the sse. With freeze_antecedents only the output terms
/// move. Stops once no halved step lowers the loss.
NFTrainResult gradient_train_mamdani(const FuzzySystem& fs, const Dataset& ds, const NFTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Fuzzy associative memory
// ---------------------------------------------------------------------------

/// Each rule's relation min(A_1, ..., A_d, B) is kept factorised as one
/// max-min correlation matrix per antecedent variable, M_j = min(A_j, B^T);
/// for product-form keys the composition factorises exactly.
struct FAMStore {
    std::vector<Vector> input_grids;
    Vector output_grid;
    /// relations[r][j] is grid(j) x output grid; empty for "any" slots.
    std::vector<std::vector<Matrix>> relations;
    Defuzzifier defuzz{Defuzzifier::Centroid};
};

struct FAMRecall {
    Vector fuzzy_output;
    double value{0};
    bool zero_activation{false};
};

/// Rule weights are ignored (fixed at 1).
FAMStore fam_store(const std::vector<FuzzyRule>& rules, const std::vector<FuzzyVariable>& inputs,
                   const FuzzyVariable& output, std::size_t grid_points);
FAMStore fam_store(const FuzzySystem& mamdani, std::size_t grid_points);

/// Recall with explicit per-variable keys sampled on the input grids.
FAMRecall fam_recall_keys(const FAMStore& store, const std::vector<Vector>& keys);

/// Singleton key at the grid point nearest each x_j; inputs more than half
/// a cell outside the grid give an all-zero key.
FAMRecall fam_recall(const FAMStore& store, const Vector& x);

}  // namespace hybridci
