#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "hybridci/mlp.hpp"

namespace hybridci {

enum class TrainerAlgorithm { BP, SCG, QNA, LM };

std::string_view to_string(TrainerAlgorithm a);
TrainerAlgorithm algorithm_from_string(std::string_view s);

struct TrainerConfig {
    TrainerAlgorithm algorithm{TrainerAlgorithm::LM};
    std::size_t epochs{100};
    /// BP step size on the per-residual mean of the squared error.
    double learning_rate{0.1};
    double momentum{0.0};
    double lm_lambda0{1e-3};
    double lm_factor{10.0};
    /// Stop once an accepted epoch improves the loss by less than this.
    double tolerance{1e-9};

    void validate() const;
};

/// loss_curve[0] is the loss before training; entry k > 0 is the loss after
/// the k-th accepted epoch. The curve never increases.
struct TrainReport {
    MLPNetwork final_net;
    std::vector<double> loss_curve;
    std::size_t epochs_run{0};
    bool converged{false};
};

/// Non-finite loss or gradient at the current iterate. Carries the last
/// network whose loss was finite.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, MLPNetwork last_finite)
        : Error(what), last_finite_(std::move(last_finite)) {}
    const MLPNetwork& last_finite_network() const noexcept { return last_finite_; }

private:
    MLPNetwork last_finite_;
};

/// A sum-of-squares objective psi(w) = ||r(w)||^2 over a flat parameter vector.
/// `gradient` may be left empty, in which case 2 J^T r is used.
struct ResidualProblem {
    std::function<Vector(const Vector&)> residuals;
    std::function<Matrix(const Vector&)> jacobian;
    std::function<Vector(const Vector&)> gradient;
};

struct MinimizeResult {
    Vector params;
    std::vector<double> loss_curve;
    std::size_t epochs_run{0};
    bool converged{false};
};

/// Non-finite loss at the current iterate of a generic minimisation.
class MinimizeDiverged : public Error {
public:
    MinimizeDiverged(const std::string& what, Vector last_finite)
        : Error(what), last_finite_(std::move(last_finite)) {}
    const Vector& last_finite_params() const noexcept { return last_finite_; }

private:
    Vector last_finite_;
};

/// Runs one of the four local-search algorithms on a generic problem.
MinimizeResult minimize(const ResidualProblem& problem, const Vector& start, const TrainerConfig& cfg);

/// Full-batch training of an MLP against its sum of squared errors.
TrainReport train(const MLPNetwork& net, const Dataset& ds, const TrainerConfig& cfg);

/// Damped Gauss-Newton step solving (J^T J + lambda I) delta = -J^T r.
Vector levenberg_marquardt_step(const Matrix& jac, const Vector& resid, double lambda);

}  // namespace hybridci
