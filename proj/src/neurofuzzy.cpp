#include "hybridci/neurofuzzy.hpp"

#include <cmath>

namespace hybridci {

namespace {

constexpr int kMaxHalvings = 10;

void check_dataset(const FuzzySystem& fs, const Dataset& ds) {
    ds.validate();
    if (ds.size() == 0) throw InvalidInput("neuro-fuzzy training: dataset is empty");
    if (ds.targets.cols() != 1) throw InvalidInput("neuro-fuzzy training: exactly one target column is supported");
    if (ds.inputs.cols() != static_cast<Eigen::Index>(fs.inputs.size()))
        throw InvalidInput("neuro-fuzzy training: dataset has " + std::to_string(ds.inputs.cols()) +
                           " inputs, system expects " + std::to_string(fs.inputs.size()));
}

Eigen::Index term_offsets(const FuzzySystem& fs, std::vector<std::vector<Eigen::Index>>& per_term) {
    Eigen::Index pos = 0;
    per_term.assign(fs.inputs.size(), {});
    for (std::size_t j = 0; j < fs.inputs.size(); ++j)
        for (const auto& mf : fs.inputs[j].terms) {
            per_term[j].push_back(pos);
            pos += static_cast<Eigen::Index>(mf.parameter_count());
        }
    return pos;
}

void set_coefficients(FuzzySystem& fs, const Vector& stacked) {
    const auto k = static_cast<Eigen::Index>(fs.inputs.size() + 1);
    for (std::size_t r = 0; r < fs.rules.size(); ++r)
        fs.rules[r].coefficients = stacked.segment(static_cast<Eigen::Index>(r) * k, k);
}

}  // namespace

void NFTrainConfig::validate() const {
    if (epochs < 1) throw InvalidInput("NFTrainConfig: epochs must be at least 1");
    if (!(antecedent_lr >= 0) || !std::isfinite(antecedent_lr))
        throw InvalidInput("NFTrainConfig: antecedent_lr must be finite and non-negative");
    if (!(ridge >= 0) || !std::isfinite(ridge)) throw InvalidInput("NFTrainConfig: ridge must be finite and non-negative");
}

double fis_sse(const FuzzySystem& fs, const Dataset& ds) {
    const Vector y = predict(fs, ds.inputs);
    return (y - ds.targets.col(0)).squaredNorm();
}

Matrix ts_design_matrix(const FuzzySystem& fs, const Matrix& inputs) {
    const auto d = static_cast<Eigen::Index>(fs.inputs.size());
    const auto rules = static_cast<Eigen::Index>(fs.rules.size());
    if (inputs.cols() != d) throw InvalidInput("ts_design_matrix: input column count does not match the system");
    Matrix a(inputs.rows(), rules * (d + 1));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        const Vector x = inputs.row(i).transpose();
        const Vector wbar = normalize_firing(firing_strengths(fs, x)).weights;
        for (Eigen::Index r = 0; r < rules; ++r) {
            a.block(i, r * (d + 1), 1, d) = wbar[r] * x.transpose();
            a(i, r * (d + 1) + d) = wbar[r];
        }
    }
    return a;
}

ConsequentFit fit_consequents(const FuzzySystem& fs, const Dataset& ds, double ridge) {
    if (fs.kind != FISKind::TakagiSugeno) throw InvalidInput("fit_consequents: system is not Takagi-Sugeno");
    check_dataset(fs, ds);
    const Matrix a = ts_design_matrix(fs, ds.inputs);
    const auto sol = solve_least_squares(a, ds.targets.col(0), ridge);
    ConsequentFit out{fs, sol.rank_deficient};
    set_coefficients(out.system, sol.x);
    return out;
}

Vector ts_antecedent_gradient(const FuzzySystem& fs, const Dataset& ds) {
    if (fs.kind != FISKind::TakagiSugeno) throw InvalidInput("ts_antecedent_gradient: system is not Takagi-Sugeno");
    check_dataset(fs, ds);
    std::vector<std::vector<Eigen::Index>> offset;
    const Eigen::Index count = term_offsets(fs, offset);
    Vector grad = Vector::Zero(count);

    const std::size_t d = fs.inputs.size();
    std::vector<double> mu(d);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const Vector x = ds.inputs.row(i).transpose();
        const Vector w = firing_strengths(fs, x);
        const double total = w.sum();
        if (!(total > 0)) continue;  // uniform fallback weights do not depend on the MFs
        const Vector f = ts_rule_outputs(fs, x);
        const double y = w.dot(f) / total;
        const double err2 = 2.0 * (y - ds.targets(i, 0));

        for (std::size_t r = 0; r < fs.rules.size(); ++r) {
            const auto& rule = fs.rules[r];
            const double dy_dw = (f[static_cast<Eigen::Index>(r)] - y) / total;
            if (dy_dw == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j)
                mu[j] = rule.antecedent[j] == kAnyTerm
                            ? 1.0
                            : mf_eval(fs.inputs[j].terms[static_cast<std::size_t>(rule.antecedent[j])],
                                      x[static_cast<Eigen::Index>(j)]);
            std::size_t argmin = 0;
            for (std::size_t j = 1; j < d; ++j)
                if (mu[j] < mu[argmin]) argmin = j;

            for (std::size_t j = 0; j < d; ++j) {
                const int term = rule.antecedent[j];
                if (term == kAnyTerm) continue;
                double dw_dmu = rule.weight;
                if (fs.tnorm == TNorm::Product) {
                    for (std::size_t k = 0; k < d; ++k)
                        if (k != j) dw_dmu *= mu[k];
                } else if (j != argmin) {
                    continue;
                }
                if (dw_dmu == 0.0) continue;
                const auto& mf = fs.inputs[j].terms[static_cast<std::size_t>(term)];
                const auto g = mf_param_gradient(mf, x[static_cast<Eigen::Index>(j)]);
                const Eigen::Index base = offset[j][static_cast<std::size_t>(term)];
                for (std::size_t p = 0; p < mf.parameter_count(); ++p)
                    grad[base + static_cast<Eigen::Index>(p)] += err2 * dy_dw * dw_dmu * g[p];
            }
        }
    }
    return grad;
}

NFTrainResult hybrid_train_ts(const FuzzySystem& fs, const Dataset& ds, const NFTrainConfig& cfg) {
    if (fs.kind != FISKind::TakagiSugeno) throw InvalidInput("hybrid_train_ts: system is not Takagi-Sugeno");
    cfg.validate();
    fs.validate();
    check_dataset(fs, ds);

    NFTrainResult res{fs, {}, 0, false};
    double loss = fis_sse(fs, ds);
    if (!std::isfinite(loss)) throw NumericBlowup("hybrid_train_ts: initial loss is not finite");
    res.loss_curve.push_back(loss);
    const double inv_n = 1.0 / static_cast<double>(ds.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Pass 1: consequents by least squares.
        try {
            auto fit = fit_consequents(res.system, ds, cfg.ridge);
            const double l = fis_sse(fit.system, ds);
            if (!std::isfinite(l)) {
                res.diverged = true;
                break;
            }
            if (l <= loss) {
                res.system = std::move(fit.system);
                loss = l;
            }
        } catch (const InvalidInput&) {
            res.diverged = true;  // non-finite design matrix
            break;
        }

        // Pass 2: one safeguarded gradient step on the antecedents.
        if (!cfg.freeze_antecedents && cfg.antecedent_lr > 0 && loss > 0) {
            const Vector g = ts_antecedent_gradient(res.system, ds) * inv_n;
            if (!g.allFinite()) {
                res.diverged = true;
                break;
            }
            const Vector p = membership_parameters(res.system, false);
            Vector step = -cfg.antecedent_lr * g;
            for (int k = 0; k <= kMaxHalvings && step.squaredNorm() > 0; ++k, step *= 0.5) {
                FuzzySystem trial = with_membership_parameters(res.system, p + step, false);
                const double l = fis_sse(trial, ds);
                if (std::isfinite(l) && l <= loss) {
                    res.system = std::move(trial);
                    loss = l;
                    break;
                }
            }
        }

        res.loss_curve.push_back(loss);
        ++res.epochs_run;
        if (loss == 0.0) break;
    }
    return res;
}

NFTrainResult gradient_train_mamdani(const FuzzySystem& fs, const Dataset& ds, const NFTrainConfig& cfg) {
    if (fs.kind != FISKind::Mamdani) throw InvalidInput("gradient_train_mamdani: system is not Mamdani");
    cfg.validate();
    fs.validate();
    check_dataset(fs, ds);
    for (const auto& v : fs.inputs)
        for (const auto& mf : v.terms)
            if (mf.kind != MFKind::Gaussian) throw InvalidInput("gradient_train_mamdani: all terms must be gaussian");
    for (const auto& mf : fs.output->terms)
        if (mf.kind != MFKind::Gaussian) throw InvalidInput("gradient_train_mamdani: all terms must be gaussian");

    // Trainable slice of the full parameter vector.
    const Eigen::Index n_in = membership_parameters(fs, false).size();
    const Eigen::Index first = cfg.freeze_antecedents ? n_in : 0;

    NFTrainResult res{fs, {}, 0, false};
    double loss = fis_sse(fs, ds);
    if (!std::isfinite(loss)) throw NumericBlowup("gradient_train_mamdani: initial loss is not finite");
    res.loss_curve.push_back(loss);
    if (cfg.antecedent_lr == 0) return res;
    const double inv_n = 1.0 / static_cast<double>(ds.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs && loss > 0; ++epoch) {
        const Vector all = membership_parameters(res.system, true);
        const Vector head = all.head(first);
        const FuzzySystem base = res.system;
        auto objective = [&](const Vector& tail) {
            Vector full(all.size());
            full << head, tail;
            return fis_sse(with_membership_parameters(base, full, true), ds);
        };
        Vector g;
        try {
            g = finite_diff_gradient(objective, Vector(all.tail(all.size() - first)), 1e-6) * inv_n;
        } catch (const NumericBlowup&) {
            res.diverged = true;
            break;
        }

        Vector step = -cfg.antecedent_lr * g;
        bool accepted = false;
        for (int k = 0; k <= kMaxHalvings && step.squaredNorm() > 0; ++k, step *= 0.5) {
            Vector full = all;
            full.tail(step.size()) += step;
            FuzzySystem trial = with_membership_parameters(base, full, true);
            const double l = fis_sse(trial, ds);
            if (std::isfinite(l) && l < loss) {
                res.system = std::move(trial);
                loss = l;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        res.loss_curve.push_back(loss);
        ++res.epochs_run;
    }
    return res;
}

FAMStore fam_store(const std::vector<FuzzyRule>& rules, const std::vector<FuzzyVariable>& inputs,
                   const FuzzyVariable& output, std::size_t grid_points) {
    if (grid_points < 8) throw InvalidInput("fam_store: need at least 8 grid points per variable");
    if (rules.empty()) throw InvalidInput("fam_store: no rules to store");
    for (const auto& v : inputs) v.validate();
    output.validate();

    const auto g = static_cast<Eigen::Index>(grid_points);
    FAMStore store;
    for (const auto& v : inputs) store.input_grids.push_back(Vector::LinSpaced(g, v.min, v.max));
    store.output_grid = Vector::LinSpaced(g, output.min, output.max);

    for (std::size_t r = 0; r < rules.size(); ++r) {
        const auto& rule = rules[r];
        if (rule.antecedent.size() != inputs.size()) throw InvalidInput("fam_store: antecedent size mismatch");
        if (rule.consequent_term < 0 || rule.consequent_term >= static_cast<int>(output.terms.size()))
            throw InvalidInput("fam_store: consequent term out of range");
        const auto& b = output.terms[static_cast<std::size_t>(rule.consequent_term)];
        Vector mu_b(g);
        for (Eigen::Index k = 0; k < g; ++k) mu_b[k] = mf_eval(b, store.output_grid[k]);

        std::vector<Matrix> per_var;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            const int t = rule.antecedent[j];
            if (t == kAnyTerm) {
                per_var.emplace_back();
                continue;
            }
            if (t < 0 || t >= static_cast<int>(inputs[j].terms.size()))
                throw InvalidInput("fam_store: antecedent term out of range");
            const auto& a = inputs[j].terms[static_cast<std::size_t>(t)];
            Matrix m(g, g);
            for (Eigen::Index u = 0; u < g; ++u) {
                const double mu_a = mf_eval(a, store.input_grids[j][u]);
                m.row(u) = mu_b.transpose().cwiseMin(mu_a);
            }
            per_var.push_back(std::move(m));
        }
        store.relations.push_back(std::move(per_var));
    }
    return store;
}

FAMStore fam_store(const FuzzySystem& mamdani, std::size_t grid_points) {
    if (mamdani.kind != FISKind::Mamdani || !mamdani.output) throw InvalidInput("fam_store: system is not Mamdani");
    auto store = fam_store(mamdani.rules, mamdani.inputs, *mamdani.output, grid_points);
    store.defuzz = mamdani.defuzz;
    return store;
}

FAMRecall fam_recall_keys(const FAMStore& store, const std::vector<Vector>& keys) {
    if (keys.size() != store.input_grids.size()) throw InvalidInput("fam_recall: one key per input variable required");
    for (std::size_t j = 0; j < keys.size(); ++j)
        if (keys[j].size() != store.input_grids[j].size()) throw InvalidInput("fam_recall: key size mismatch");

    const Eigen::Index m = store.output_grid.size();
    FAMRecall out;
    out.fuzzy_output = Vector::Zero(m);
    for (const auto& rule : store.relations) {
        Vector rule_out = Vector::Ones(m);
        for (std::size_t j = 0; j < rule.size(); ++j) {
            // An "any" slot relates every grid point, so only the key height survives.
            if (rule[j].size() == 0) {
                rule_out = rule_out.cwiseMin(keys[j].maxCoeff());
                continue;
            }
            Vector composed = Vector::Zero(m);
            for (Eigen::Index u = 0; u < rule[j].rows(); ++u)
                composed = composed.cwiseMax(rule[j].row(u).transpose().cwiseMin(keys[j][u]));
            rule_out = rule_out.cwiseMin(composed);
        }
        out.fuzzy_output = out.fuzzy_output.cwiseMax(rule_out);
    }
    const auto d = defuzzify(store.output_grid, out.fuzzy_output, store.defuzz);
    out.value = d.value;
    out.zero_activation = d.zero_activation;
    return out;
}

FAMRecall fam_recall(const FAMStore& store, const Vector& x) {
    if (x.size() != static_cast<Eigen::Index>(store.input_grids.size()))
        throw InvalidInput("fam_recall: input size does not match the store");
    std::vector<Vector> keys;
    for (std::size_t j = 0; j < store.input_grids.size(); ++j) {
        const Vector& grid = store.input_grids[j];
        const double xj = x[static_cast<Eigen::Index>(j)];
        const double half = 0.5 * (grid[1] - grid[0]);
        Vector key = Vector::Zero(grid.size());
        if (xj >= grid[0] - half && xj <= grid[grid.size() - 1] + half) {
            Eigen::Index nearest;
            (grid.array() - xj).abs().minCoeff(&nearest);
            key[nearest] = 1.0;
        }
        keys.push_back(std::move(key));
    }
    return fam_recall_keys(store, keys);
}

}  // namespace hybridci
