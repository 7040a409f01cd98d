#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "hybridci/numeric.hpp"

namespace hybridci {

/// Supervised training set: row i pairs inputs.row(i) with targets.row(i).
struct Dataset {
    Matrix inputs;   // n x d
    Matrix targets;  // n x m
    std::string name;

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index input_width() const { return inputs.cols(); }
    Eigen::Index target_width() const { return targets.cols(); }

    /// Throws InvalidInput unless n >= 1, d >= 1, m >= 1, rows agree and
    /// every entry is finite.
    void validate() const;

    /// Rows selected by index, in the given order.
    Dataset subset(const std::vector<Eigen::Index>& rows, std::string new_name) const;
};

// ---------------------------------------------------------------------------
// Mackey-Glass
// ---------------------------------------------------------------------------

/// dx/dt = a x(t - tau) / (1 + x(t - tau)^10) - b x(t), constant history x0.
struct MackeyGlassParams {
    double a{0.2};
    double b{0.1};
    double tau{17.0};
    double dt{0.1};
    /// Time between returned samples; must be an integer multiple of dt.
    double sample_interval{1.0};
    std::size_t n{1000};
    double x0{1.2};
    std::size_t washout{0};
};

/// Fixed-step RK4 with the delayed value linearly interpolated between
/// stored grid points. Returns n samples taken every sample_interval time
/// units, after discarding the first `washout` samples.
std::vector<double> gen_mackey_glass(const MackeyGlassParams& p);

/// Delay embedding: row k has inputs x[k + L - lag_j] for each lag_j
/// (L = max lag) and target x[k + L + horizon].
Dataset embed_series(const std::vector<double>& x, const std::vector<std::size_t>& lags,
                     std::size_t horizon, std::string name = "series");

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// The last target_cols columns become targets, the rest inputs.
Dataset load_csv(const std::filesystem::path& path, bool has_header, std::size_t target_cols);

/// Writes inputs then targets per row with round-trip ("%.17g") precision.
void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::vector<std::string>& header = {});

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Splits, scaling, metrics
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train_fraction{0.5};
    double valid_fraction{0.25};
    double test_fraction{0.25};
    bool shuffle{false};
    std::uint64_t seed{0};

    void validate() const;
};

struct DatasetSplit {
    Dataset train;
    Dataset valid;
    Dataset test;
};

/// Sizes are floor(fraction * n) for valid and test; the remainder goes to
/// train. Empty partitions are represented by zero-row datasets.
DatasetSplit split(const Dataset& ds, const SplitSpec& spec);

/// Per-column affine map of inputs and targets onto [0, 1].
struct MinMaxScaler {
    Vector input_min, input_max;
    Vector target_min, target_max;

    Dataset transform(const Dataset& ds) const;
    Dataset inverse(const Dataset& ds) const;
    /// Maps normalized target predictions back to original units.
    Matrix inverse_targets(const Matrix& t) const;
};

/// Returns the normalized dataset and the scaler that produced it.
/// Constant columns map to 0.5.
std::pair<Dataset, MinMaxScaler> normalize_minmax(const Dataset& ds);

/// sqrt(sum ||y_i - t_i||^2 / (n m)).
template <class DerivedP, class DerivedT>
double rmse(const Eigen::MatrixBase<DerivedP>& predicted, const Eigen::MatrixBase<DerivedT>& targets) {
    if (predicted.rows() != targets.rows() || predicted.cols() != targets.cols())
        throw InvalidInput("rmse: shape mismatch");
    if (predicted.size() == 0) throw InvalidInput("rmse: empty input");
    const double sse = (predicted - targets).squaredNorm();
    return std::sqrt(sse / static_cast<double>(predicted.size()));
}

/// 64-bit FNV-1a over the raw bytes of inputs then targets (column-major).
std::uint64_t fingerprint(const Dataset& ds);

}  // namespace hybridci
