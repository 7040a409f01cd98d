#include "hybridci/trainers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hybridci {

std::string_view to_string(TrainerAlgorithm a) {
    switch (a) {
        case TrainerAlgorithm::BP: return "BP";
        case TrainerAlgorithm::SCG: return "SCG";
        case TrainerAlgorithm::QNA: return "QNA";
        case TrainerAlgorithm::LM: return "LM";
    }
    return "LM";
}

TrainerAlgorithm algorithm_from_string(std::string_view s) {
    if (s == "BP") return TrainerAlgorithm::BP;
    if (s == "SCG") return TrainerAlgorithm::SCG;
    if (s == "QNA") return TrainerAlgorithm::QNA;
    if (s == "LM") return TrainerAlgorithm::LM;
    throw InvalidInput("unknown training algorithm '" + std::string(s) + "'");
}

void TrainerConfig::validate() const {
    if (epochs < 1) throw InvalidInput("trainer: epochs must be >= 1");
    if (!(learning_rate > 0)) throw InvalidInput("trainer: learning_rate must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw InvalidInput("trainer: momentum must lie in [0, 1)");
    if (!(lm_lambda0 > 0)) throw InvalidInput("trainer: lm_lambda0 must be positive");
    if (!(lm_factor > 1)) throw InvalidInput("trainer: lm_factor must exceed 1");
    if (!(tolerance >= 0)) throw InvalidInput("trainer: tolerance must be >= 0");
}

Vector levenberg_marquardt_step(const Matrix& jac, const Vector& resid, double lambda) {
    Matrix normal = jac.transpose() * jac;
    normal.diagonal().array() += lambda;
    Eigen::LDLT<Matrix> ldlt(normal);
    if (ldlt.info() != Eigen::Success) return Vector();
    Vector step = ldlt.solve(-(jac.transpose() * resid));
    if (!step.allFinite()) return Vector();
    return step;
}

namespace {

constexpr double kLambdaMax = 1e8;
constexpr double kLambdaMin = 1e-15;
constexpr int kMaxHalvings = 10;

class Run {
public:
    Run(const ResidualProblem& p, const Vector& start, const TrainerConfig& cfg)
        : problem_(p), cfg_(cfg), w_(start) {
        loss_ = loss_at(w_);
        if (!std::isfinite(loss_)) throw MinimizeDiverged("initial loss is not finite", w_);
        out_.loss_curve.push_back(loss_);
        residual_count_ = std::max<Eigen::Index>(1, problem_.residuals(w_).size());
    }

    MinimizeResult result() && {
        out_.params = std::move(w_);
        return std::move(out_);
    }

    MinimizeResult run() && {
        if (loss_ == 0) {
            out_.converged = true;
            return std::move(*this).result();
        }
        switch (cfg_.algorithm) {
            case TrainerAlgorithm::BP: backprop(); break;
            case TrainerAlgorithm::SCG: scaled_conjugate_gradient(); break;
            case TrainerAlgorithm::QNA: bfgs(); break;
            case TrainerAlgorithm::LM: levenberg_marquardt(); break;
        }
        return std::move(*this).result();
    }

private:
    double loss_at(const Vector& w) const {
        const Vector r = problem_.residuals(w);
        return r.allFinite() ? r.squaredNorm() : std::numeric_limits<double>::infinity();
    }

    Vector gradient_at(const Vector& w) const {
        Vector g = problem_.gradient ? problem_.gradient(w)
                                     : Vector(2.0 * (problem_.jacobian(w).transpose() * problem_.residuals(w)));
        if (!g.allFinite()) throw MinimizeDiverged("non-finite gradient", w_);
        return g;
    }

    // Records an accepted move. Returns true when training should stop.
    bool accept(Vector w_new, double loss_new) {
        const double improvement = loss_ - loss_new;
        w_ = std::move(w_new);
        loss_ = loss_new;
        out_.loss_curve.push_back(loss_);
        if (loss_ == 0 || improvement < cfg_.tolerance) {
            out_.converged = true;
            return true;
        }
        return false;
    }

    // Full-batch gradient descent with momentum. A step that raises the loss
    // is retried without the momentum term, then halved up to kMaxHalvings
    // times before training stops.
    void backprop() {
        const double rate = cfg_.learning_rate / static_cast<double>(residual_count_);
        Vector velocity = Vector::Zero(w_.size());
        while (out_.epochs_run < cfg_.epochs) {
            ++out_.epochs_run;
            const Vector g = gradient_at(w_);
            if (g.squaredNorm() == 0) {
                out_.converged = true;
                return;
            }
            Vector step = cfg_.momentum * velocity - rate * g;
            bool accepted = false;
            for (int k = -1; k <= kMaxHalvings; ++k) {
                Vector trial = w_ + step;
                const double l = loss_at(trial);
                if (l < loss_) {
                    velocity = step;
                    if (accept(std::move(trial), l)) return;
                    accepted = true;
                    break;
                }
                if (k == -1)
                    step = -rate * g;
                else
                    step *= 0.5;
            }
            if (!accepted) return;
        }
    }

    // Scaled conjugate gradient: second-order information from a finite
    // difference of gradients along the search direction, trust regulated by
    // the scalar lambda. No line search.
    void scaled_conjugate_gradient() {
        constexpr double sigma0 = 1e-5;
        double lambda = 1e-6;
        const double lambda_min = 1e-15, lambda_max = 1e100;
        const auto n = w_.size();

        Vector grad = gradient_at(w_);
        Vector dir = -grad;
        bool success = true;
        Eigen::Index successes = 0;
        double mu = 0, kappa = 0, gamma = 0;

        while (out_.epochs_run < cfg_.epochs) {
            ++out_.epochs_run;
            if (success) {
                mu = dir.dot(grad);
                if (mu >= 0) {
                    dir = -grad;
                    mu = dir.dot(grad);
                }
                kappa = dir.squaredNorm();
                if (kappa < std::numeric_limits<double>::epsilon()) {
                    out_.converged = true;
                    return;
                }
                const double sigma = sigma0 / std::sqrt(kappa);
                const Vector g_plus = gradient_at(w_ + sigma * dir);
                gamma = dir.dot(g_plus - grad) / sigma;
            }

            double delta = gamma + lambda * kappa;
            if (delta <= 0) {
                delta = lambda * kappa;
                lambda = lambda - gamma / kappa;
            }
            const double alpha = -mu / delta;
            Vector w_new = w_ + alpha * dir;
            const double l_new = loss_at(w_new);
            const double comparison = std::isfinite(l_new) ? 2.0 * (l_new - loss_) / (alpha * mu) : -1.0;

            const Vector grad_old = grad;
            if (comparison >= 0 && l_new <= loss_) {
                success = true;
                ++successes;
                if (accept(std::move(w_new), l_new)) return;
                grad = gradient_at(w_);
                if (grad.squaredNorm() == 0) {
                    out_.converged = true;
                    return;
                }
            } else {
                success = false;
            }

            if (comparison < 0.25) lambda = std::min(4.0 * lambda, lambda_max);
            if (comparison > 0.75) lambda = std::max(0.5 * lambda, lambda_min);
            if (lambda >= lambda_max) return;

            if (successes == n) {
                dir = -grad;
                successes = 0;
            } else if (success) {
                const double beta = (grad_old - grad).dot(grad) / mu;
                dir = beta * dir - grad;
            }
        }
    }

    // BFGS on the inverse Hessian with Armijo backtracking.
    void bfgs() {
        constexpr double c1 = 1e-4;
        constexpr double shrink = 0.5;
        constexpr int max_backtracks = 60;
        const auto n = w_.size();

        Matrix h_inv = Matrix::Identity(n, n);
        bool h_is_identity = true;
        bool first_update = true;
        Vector grad = gradient_at(w_);

        while (out_.epochs_run < cfg_.epochs) {
            ++out_.epochs_run;
            if (grad.squaredNorm() == 0) {
                out_.converged = true;
                return;
            }

            bool moved = false;
            Vector step;
            double l_new = 0;
            for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
                Vector dir = -(h_inv * grad);
                double slope = grad.dot(dir);
                if (!(slope < 0)) {
                    h_inv.setIdentity();
                    h_is_identity = true;
                    dir = -grad;
                    slope = grad.dot(dir);
                }
                double t = h_is_identity ? std::min(1.0, 1.0 / std::sqrt(grad.squaredNorm())) : 1.0;
                for (int k = 0; k < max_backtracks; ++k) {
                    const Vector trial = w_ + t * dir;
                    const double l = loss_at(trial);
                    if (std::isfinite(l) && l <= loss_ + c1 * t * slope && l < loss_) {
                        step = t * dir;
                        l_new = l;
                        moved = true;
                        break;
                    }
                    t *= shrink;
                }
                if (!moved) {
                    if (h_is_identity) return;
                    h_inv.setIdentity();
                    h_is_identity = true;
                }
            }
            if (!moved) return;

            Vector w_new = w_ + step;
            const Vector grad_new = gradient_at(w_new);
            const Vector y = grad_new - grad;
            if (accept(std::move(w_new), l_new)) return;
            grad = grad_new;

            const double sy = step.dot(y);
            if (sy > 1e-12 * step.norm() * y.norm()) {
                if (first_update) {
                    h_inv = Matrix::Identity(n, n) * (sy / y.squaredNorm());
                    first_update = false;
                }
                const double rho = 1.0 / sy;
                const Matrix left = Matrix::Identity(n, n) - rho * step * y.transpose();
                h_inv = left * h_inv * left.transpose() + rho * step * step.transpose();
                h_is_identity = false;
            }
        }
    }

    void levenberg_marquardt() {
        double lambda = cfg_.lm_lambda0;
        while (out_.epochs_run < cfg_.epochs) {
            ++out_.epochs_run;
            const Vector r = problem_.residuals(w_);
            const Matrix jac = problem_.jacobian(w_);
            if (!jac.allFinite()) throw MinimizeDiverged("non-finite jacobian", w_);
            const Vector grad = 2.0 * (jac.transpose() * r);
            if (grad.squaredNorm() == 0) {
                out_.converged = true;
                return;
            }

            for (;;) {
                const Vector step = levenberg_marquardt_step(jac, r, lambda);
                if (step.size() == 0) {
                    lambda *= cfg_.lm_factor;
                    if (lambda > kLambdaMax)
                        throw MinimizeDiverged("Levenberg-Marquardt normal matrix singular at maximum damping", w_);
                    continue;
                }
                Vector trial = w_ + step;
                const double l = loss_at(trial);
                if (l < loss_) {
                    lambda = std::max(lambda / cfg_.lm_factor, kLambdaMin);
                    if (accept(std::move(trial), l)) return;
                    break;
                }
                lambda *= cfg_.lm_factor;
                if (lambda > kLambdaMax) {
                    // No damping level improves the loss: a local minimum to
                    // working precision.
                    out_.converged = true;
                    return;
                }
            }
        }
    }

    const ResidualProblem& problem_;
    const TrainerConfig& cfg_;
    Vector w_;
    double loss_{0};
    Eigen::Index residual_count_{1};
    MinimizeResult out_;
};

}  // namespace

MinimizeResult minimize(const ResidualProblem& problem, const Vector& start, const TrainerConfig& cfg) {
    cfg.validate();
    return Run(problem, start, cfg).run();
}

TrainReport train(const MLPNetwork& net, const Dataset& ds, const TrainerConfig& cfg) {
    net.validate();
    if (ds.inputs.cols() != net.input_width() || ds.targets.cols() != net.output_width())
        throw InvalidInput("train: dataset '" + ds.name + "' shape does not match network");

    ResidualProblem problem;
    problem.residuals = [&](const Vector& w) { return residuals(net.with_parameters(w), ds); };
    problem.jacobian = [&](const Vector& w) { return jacobian(net.with_parameters(w), ds); };
    problem.gradient = [&](const Vector& w) { return gradient(net.with_parameters(w), ds); };

    try {
        MinimizeResult r = minimize(problem, net.parameters(), cfg);
        return TrainReport{net.with_parameters(r.params), std::move(r.loss_curve), r.epochs_run, r.converged};
    } catch (const MinimizeDiverged& e) {
        const Vector& last = e.last_finite_params();
        throw TrainingDiverged(std::string("training diverged: ") + e.what(),
                               last.allFinite() ? net.with_parameters(last) : net);
    }
}

}  // namespace hybridci
