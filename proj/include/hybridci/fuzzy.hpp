#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridci/numeric.hpp"

namespace hybridci {

// ---------------------------------------------------------------------------
// Membership functions
// ---------------------------------------------------------------------------

enum class MFKind { Triangular, Trapezoidal, Gaussian, Logistic };

std::string_view to_string(MFKind k);
MFKind mf_kind_from_string(std::string_view s);

/// params layout per kind:
///   Triangular  (a, b, c)        a <= b <= c, a < c
///   Trapezoidal (a, b, c, d)     a <= b <= c <= d, a < d
///   Gaussian    (center, sigma)  sigma > 0
///   Logistic    (center, slope)  1 / (1 + exp(-slope (x - center)))
struct MembershipFn {
    MFKind kind{MFKind::Triangular};
    std::array<double, 4> params{};
    std::string label;

    static MembershipFn triangular(double a, double b, double c, std::string label = {});
    static MembershipFn trapezoidal(double a, double b, double c, double d, std::string label = {});
    static MembershipFn gaussian(double center, double sigma, std::string label = {});
    static MembershipFn logistic(double center, double slope, std::string label = {});

    std::size_t parameter_count() const;
    void validate() const;
    /// Sorts ordered parameters and floors widths so the invariants hold.
    void repair();
};

/// Smallest sigma / support width kept by repair().
inline constexpr double kMinWidth = 1e-6;

template <class Scalar>
Scalar mf_eval(const MembershipFn& mf, Scalar x) {
    const auto& p = mf.params;
    switch (mf.kind) {
        case MFKind::Triangular: {
            if (x < p[0] || x > p[2]) return Scalar(0);
            if (x == p[1]) return Scalar(1);
            if (x < p[1]) return (x - p[0]) / (p[1] - p[0]);
            return (p[2] - x) / (p[2] - p[1]);
        }
        case MFKind::Trapezoidal: {
            if (x < p[0] || x > p[3]) return Scalar(0);
            if (x >= p[1] && x <= p[2]) return Scalar(1);
            if (x < p[1]) return (x - p[0]) / (p[1] - p[0]);
            return (p[3] - x) / (p[3] - p[2]);
        }
        case MFKind::Gaussian: {
            const Scalar z = (x - p[0]) / p[1];
            return std::exp(Scalar(-0.5) * z * z);
        }
        case MFKind::Logistic: return Scalar(1) / (Scalar(1) + std::exp(-p[1] * (x - p[0])));
    }
    return Scalar(0);
}

/// d mu / d params at x. Kinks (apexes, support ends, shoulders) use the
/// zero subgradient.
std::array<double, 4> mf_param_gradient(const MembershipFn& mf, double x);

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

enum class TNorm { Min, Product };
enum class TConorm { Max, ProbabilisticSum };
enum class Defuzzifier { Centroid, MeanOfMaxima };
enum class FISKind { Mamdani, TakagiSugeno };

std::string_view to_string(TNorm t);
std::string_view to_string(TConorm t);
std::string_view to_string(Defuzzifier d);
std::string_view to_string(FISKind k);
TNorm tnorm_from_string(std::string_view s);
TConorm tconorm_from_string(std::string_view s);
Defuzzifier defuzzifier_from_string(std::string_view s);
FISKind fis_kind_from_string(std::string_view s);

template <class Scalar>
Scalar tnorm(TNorm kind, Scalar a, Scalar b) {
    return kind == TNorm::Min ? std::min(a, b) : a * b;
}

template <class Scalar>
Scalar tconorm(TConorm kind, Scalar a, Scalar b) {
    return kind == TConorm::Max ? std::max(a, b) : a + b - a * b;
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

struct FuzzyVariable {
    std::string name;
    double min{0};
    double max{1};
    std::vector<MembershipFn> terms;

    void validate() const;
};

/// Antecedent slot value meaning "this input does not take part".
inline constexpr int kAnyTerm = -1;

struct FuzzyRule {
    /// One term index per input, or kAnyTerm.
    std::vector<int> antecedent;
    /// Mamdani: index of the output term.
    int consequent_term{0};
    /// Takagi-Sugeno: (p_1, ..., p_d, r) for f = sum_j p_j x_j + r.
    Vector coefficients;
    double weight{1.0};
};

struct FuzzySystem {
    FISKind kind{FISKind::TakagiSugeno};
    std::vector<FuzzyVariable> inputs;
    std::optional<FuzzyVariable> output;  // Mamdani only
    std::vector<FuzzyRule> rules;
    TNorm tnorm{TNorm::Product};
    TConorm tconorm{TConorm::Max};
    Defuzzifier defuzz{Defuzzifier::Centroid};
    /// Output-universe grid size for Mamdani defuzzification.
    std::size_t resolution{201};

    std::size_t input_count() const { return inputs.size(); }
    void validate() const;
};

/// Linguistic labels for a grid of n terms ("small, medium, large" for 3).
std::vector<std::string> grid_labels(std::size_t n);

/// Uniformly spaced triangular terms with 50% overlap whose apexes span the
/// universe; the end terms extend one spacing past it.
std::vector<MembershipFn> grid_terms(double min, double max, std::size_t count);

/// One rule per cell of the Cartesian product of input terms. The first
/// input varies fastest: cell (i_1, ..., i_d) is rule sum_j i_j T^(j-1), so
/// (medium, large) under small/medium/large is the 8th rule.
/// Takagi-Sugeno consequents start at zero. Mamdani consequents are drawn
/// uniformly from the output terms; `output` must then be supplied (its
/// terms are replaced by a grid when it has none).
FuzzySystem grid_partition(const std::vector<FuzzyVariable>& inputs, std::size_t terms_per_var, FISKind kind,
                           RngStream& rng, std::optional<FuzzyVariable> output = std::nullopt);

/// Rule firing strengths w_i = weight_i * T(memberships); "any" slots contribute 1.
Vector firing_strengths(const FuzzySystem& fs, const Vector& x);

struct NormalizedFiring {
    Vector weights;
    /// Set when every rule fired at zero; weights are then uniform.
    bool zero_activation{false};
};

NormalizedFiring normalize_firing(const Vector& w);

/// Per-rule linear consequent values f_i(x).
Vector ts_rule_outputs(const FuzzySystem& fs, const Vector& x);

/// sum_i wbar_i f_i(x).
double infer_ts(const FuzzySystem& fs, const Vector& x);

struct MamdaniResult {
    double value{0};
    bool zero_activation{false};
    Vector grid;       // output-universe sample points
    Vector aggregate;  // aggregated membership on the grid
};

struct Defuzzified {
    double value{0};
    bool zero_activation{false};
};

/// Crisp value of a sampled fuzzy set. Centroid uses trapezoidal weights;
/// mean of maxima is the midpoint of the first and last maximising points.
/// An all-zero set gives the grid midpoint and the zero-activation flag.
Defuzzified defuzzify(const Vector& grid, const Vector& mu, Defuzzifier method);

/// Min implication, tconorm aggregation over a uniform grid, then
/// defuzzification. A zero aggregate yields the universe midpoint.
MamdaniResult infer_mamdani(const FuzzySystem& fs, const Vector& x, std::size_t resolution);

/// Dispatches on kind; Mamdani uses fs.resolution.
double infer(const FuzzySystem& fs, const Vector& x);

/// One crisp output per row of `inputs`.
Vector predict(const FuzzySystem& fs, const Matrix& inputs);

/// Flattened membership parameters: inputs (variable, term, parameter)
/// order, followed by the output variable when requested.
Vector membership_parameters(const FuzzySystem& fs, bool include_output);
FuzzySystem with_membership_parameters(const FuzzySystem& fs, const Vector& params, bool include_output);

}  // namespace hybridci
