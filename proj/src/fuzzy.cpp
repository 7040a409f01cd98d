#include "hybridci/fuzzy.hpp"

#include <algorithm>
#include <set>

namespace hybridci {

std::string_view to_string(MFKind k) {
    switch (k) {
        case MFKind::Triangular: return "triangular";
        case MFKind::Trapezoidal: return "trapezoidal";
        case MFKind::Gaussian: return "gaussian";
        case MFKind::Logistic: return "logistic";
    }
    return "triangular";
}

MFKind mf_kind_from_string(std::string_view s) {
    if (s == "triangular") return MFKind::Triangular;
    if (s == "trapezoidal") return MFKind::Trapezoidal;
    if (s == "gaussian") return MFKind::Gaussian;
    if (s == "logistic") return MFKind::Logistic;
    throw InvalidInput("unknown membership function kind '" + std::string(s) + "'");
}

std::string_view to_string(TNorm t) { return t == TNorm::Min ? "min" : "product"; }
std::string_view to_string(TConorm t) { return t == TConorm::Max ? "max" : "probabilistic_sum"; }
std::string_view to_string(Defuzzifier d) { return d == Defuzzifier::Centroid ? "centroid" : "mean_of_maxima"; }
std::string_view to_string(FISKind k) { return k == FISKind::Mamdani ? "mamdani" : "takagi_sugeno"; }

TNorm tnorm_from_string(std::string_view s) {
    if (s == "min") return TNorm::Min;
    if (s == "product") return TNorm::Product;
    throw InvalidInput("unknown t-norm '" + std::string(s) + "'");
}

TConorm tconorm_from_string(std::string_view s) {
    if (s == "max") return TConorm::Max;
    if (s == "probabilistic_sum") return TConorm::ProbabilisticSum;
    throw InvalidInput("unknown t-conorm '" + std::string(s) + "'");
}

Defuzzifier defuzzifier_from_string(std::string_view s) {
    if (s == "centroid") return Defuzzifier::Centroid;
    if (s == "mean_of_maxima") return Defuzzifier::MeanOfMaxima;
    throw InvalidInput("unknown defuzzifier '" + std::string(s) + "'");
}

FISKind fis_kind_from_string(std::string_view s) {
    if (s == "mamdani") return FISKind::Mamdani;
    if (s == "takagi_sugeno") return FISKind::TakagiSugeno;
    throw InvalidInput("unknown fuzzy system kind '" + std::string(s) + "'");
}

MembershipFn MembershipFn::triangular(double a, double b, double c, std::string label) {
    MembershipFn m{MFKind::Triangular, {a, b, c, 0}, std::move(label)};
    m.validate();
    return m;
}

MembershipFn MembershipFn::trapezoidal(double a, double b, double c, double d, std::string label) {
    MembershipFn m{MFKind::Trapezoidal, {a, b, c, d}, std::move(label)};
    m.validate();
    return m;
}

MembershipFn MembershipFn::gaussian(double center, double sigma, std::string label) {
    MembershipFn m{MFKind::Gaussian, {center, sigma, 0, 0}, std::move(label)};
    m.validate();
    return m;
}

MembershipFn MembershipFn::logistic(double center, double slope, std::string label) {
    MembershipFn m{MFKind::Logistic, {center, slope, 0, 0}, std::move(label)};
    m.validate();
    return m;
}

std::size_t MembershipFn::parameter_count() const {
    switch (kind) {
        case MFKind::Triangular: return 3;
        case MFKind::Trapezoidal: return 4;
        case MFKind::Gaussian:
        case MFKind::Logistic: return 2;
    }
    return 0;
}

void MembershipFn::validate() const {
    for (std::size_t i = 0; i < parameter_count(); ++i)
        if (!std::isfinite(params[i])) throw InvalidInput("membership function '" + label + "': non-finite parameter");
    const auto& p = params;
    switch (kind) {
        case MFKind::Triangular:
            if (!(p[0] <= p[1] && p[1] <= p[2] && p[0] < p[2]))
                throw InvalidInput("triangular '" + label + "': need a <= b <= c and a < c");
            break;
        case MFKind::Trapezoidal:
            if (!(p[0] <= p[1] && p[1] <= p[2] && p[2] <= p[3] && p[0] < p[3]))
                throw InvalidInput("trapezoidal '" + label + "': need a <= b <= c <= d and a < d");
            break;
        case MFKind::Gaussian:
            if (!(p[1] > 0)) throw InvalidInput("gaussian '" + label + "': sigma must be positive");
            break;
        case MFKind::Logistic: break;
    }
}

void MembershipFn::repair() {
    auto& p = params;
    switch (kind) {
        case MFKind::Triangular:
            std::sort(p.begin(), p.begin() + 3);
            if (p[2] - p[0] < kMinWidth) {
                p[0] = p[1] - kMinWidth / 2;
                p[2] = p[1] + kMinWidth / 2;
            }
            break;
        case MFKind::Trapezoidal:
            std::sort(p.begin(), p.begin() + 4);
            if (p[3] - p[0] < kMinWidth) {
                p[0] -= kMinWidth / 2;
                p[3] += kMinWidth / 2;
            }
            break;
        case MFKind::Gaussian: p[1] = std::max(std::abs(p[1]), kMinWidth); break;
        case MFKind::Logistic: break;
    }
}

std::array<double, 4> mf_param_gradient(const MembershipFn& mf, double x) {
    std::array<double, 4> g{};
    const auto& p = mf.params;
    switch (mf.kind) {
        case MFKind::Triangular: {
            const double a = p[0], b = p[1], c = p[2];
            if (x > a && x < b) {
                // mu = (x - a) / (b - a)
                const double d = b - a;
                g[0] = (x - b) / (d * d);
                g[1] = -(x - a) / (d * d);
            } else if (x > b && x < c) {
                // mu = (c - x) / (c - b)
                const double d = c - b;
                g[1] = (c - x) / (d * d);
                g[2] = (x - b) / (d * d);
            }
            break;
        }
        case MFKind::Trapezoidal: {
            if (x > p[0] && x < p[1]) {
                const double d = p[1] - p[0];
                g[0] = (x - p[1]) / (d * d);
                g[1] = -(x - p[0]) / (d * d);
            } else if (x > p[2] && x < p[3]) {
                const double d = p[3] - p[2];
                g[2] = (p[3] - x) / (d * d);
                g[3] = (x - p[2]) / (d * d);
            }
            break;
        }
        case MFKind::Gaussian: {
            const double mu = mf_eval(mf, x);
            const double diff = x - p[0];
            const double s2 = p[1] * p[1];
            g[0] = mu * diff / s2;
            g[1] = mu * diff * diff / (s2 * p[1]);
            break;
        }
        case MFKind::Logistic: {
            const double mu = mf_eval(mf, x);
            const double dz = mu * (1 - mu);
            g[0] = -p[1] * dz;
            g[1] = (x - p[0]) * dz;
            break;
        }
    }
    return g;
}

void FuzzyVariable::validate() const {
    if (!(std::isfinite(min) && std::isfinite(max) && min < max))
        throw InvalidInput("variable '" + name + "': universe needs min < max");
    if (terms.empty()) throw InvalidInput("variable '" + name + "': needs at least one term");
    std::set<std::string> seen;
    for (const auto& t : terms) {
        t.validate();
        if (!seen.insert(t.label).second) throw InvalidInput("variable '" + name + "': duplicate term '" + t.label + "'");
    }
}

void FuzzySystem::validate() const {
    if (inputs.empty()) throw InvalidInput("fuzzy system: needs at least one input");
    for (const auto& v : inputs) v.validate();
    if (rules.empty()) throw InvalidInput("fuzzy system: needs at least one rule");
    if (kind == FISKind::Mamdani) {
        if (!output) throw InvalidInput("Mamdani system: missing output variable");
        output->validate();
        if (resolution < 16) throw InvalidInput("Mamdani system: resolution must be at least 16");
    }
    const auto d = static_cast<Eigen::Index>(inputs.size());
    for (std::size_t r = 0; r < rules.size(); ++r) {
        const auto& rule = rules[r];
        const std::string where = "rule " + std::to_string(r + 1);
        if (rule.antecedent.size() != inputs.size()) throw InvalidInput(where + ": antecedent size mismatch");
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            const int t = rule.antecedent[j];
            if (t != kAnyTerm && (t < 0 || t >= static_cast<int>(inputs[j].terms.size())))
                throw InvalidInput(where + ": antecedent term index out of range");
        }
        if (!(rule.weight >= 0 && rule.weight <= 1)) throw InvalidInput(where + ": weight must lie in [0, 1]");
        if (kind == FISKind::Mamdani) {
            if (rule.consequent_term < 0 || rule.consequent_term >= static_cast<int>(output->terms.size()))
                throw InvalidInput(where + ": consequent term index out of range");
        } else {
            if (rule.coefficients.size() != d + 1) throw InvalidInput(where + ": needs d + 1 consequent coefficients");
            if (!rule.coefficients.allFinite()) throw InvalidInput(where + ": non-finite consequent coefficient");
        }
    }
}

std::vector<std::string> grid_labels(std::size_t n) {
    switch (n) {
        case 2: return {"low", "high"};
        case 3: return {"small", "medium", "large"};
        case 5: return {"very_small", "small", "medium", "large", "very_large"};
        default: break;
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(i + 1));
    return out;
}

std::vector<MembershipFn> grid_terms(double min, double max, std::size_t count) {
    if (count < 2) throw InvalidInput("grid_terms: need at least two terms");
    if (!(min < max)) throw InvalidInput("grid_terms: need min < max");
    const auto labels = grid_labels(count);
    const double step = (max - min) / static_cast<double>(count - 1);
    std::vector<MembershipFn> terms;
    for (std::size_t i = 0; i < count; ++i) {
        const double b = i + 1 == count ? max : min + step * static_cast<double>(i);
        terms.push_back(MembershipFn::triangular(b - step, b, b + step, labels[i]));
    }
    return terms;
}

FuzzySystem grid_partition(const std::vector<FuzzyVariable>& inputs, std::size_t terms_per_var, FISKind kind,
                           RngStream& rng, std::optional<FuzzyVariable> output) {
    if (terms_per_var < 2) throw InvalidInput("grid_partition: terms_per_var must be at least 2");
    if (inputs.empty()) throw InvalidInput("grid_partition: needs at least one input");
    FuzzySystem fs;
    fs.kind = kind;
    fs.tnorm = kind == FISKind::Mamdani ? TNorm::Min : TNorm::Product;
    for (const auto& in : inputs) {
        FuzzyVariable v = in;
        v.terms = grid_terms(v.min, v.max, terms_per_var);
        fs.inputs.push_back(std::move(v));
    }
    if (kind == FISKind::Mamdani) {
        if (!output) throw InvalidInput("grid_partition: Mamdani systems need an output variable");
        if (output->terms.empty()) output->terms = grid_terms(output->min, output->max, terms_per_var);
        output->validate();
        fs.output = std::move(output);
    }

    const std::size_t d = inputs.size();
    std::size_t cells = 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (cells > (std::size_t{1} << 20) / terms_per_var) throw InvalidInput("grid_partition: too many rules");
        cells *= terms_per_var;
    }
    fs.rules.reserve(cells);
    for (std::size_t r = 0; r < cells; ++r) {
        FuzzyRule rule;
        std::size_t rem = r;
        for (std::size_t j = 0; j < d; ++j) {
            rule.antecedent.push_back(static_cast<int>(rem % terms_per_var));
            rem /= terms_per_var;
        }
        if (kind == FISKind::Mamdani)
            rule.consequent_term = static_cast<int>(rng.uniform_index(fs.output->terms.size()));
        else
            rule.coefficients = Vector::Zero(static_cast<Eigen::Index>(d + 1));
        fs.rules.push_back(std::move(rule));
    }
    fs.validate();
    return fs;
}

Vector firing_strengths(const FuzzySystem& fs, const Vector& x) {
    if (x.size() != static_cast<Eigen::Index>(fs.inputs.size()))
        throw InvalidInput("firing_strengths: input has " + std::to_string(x.size()) + " values, system expects " +
                           std::to_string(fs.inputs.size()));
    Vector w(static_cast<Eigen::Index>(fs.rules.size()));
    for (std::size_t r = 0; r < fs.rules.size(); ++r) {
        const auto& rule = fs.rules[r];
        double s = 1.0;
        for (std::size_t j = 0; j < rule.antecedent.size(); ++j) {
            const int t = rule.antecedent[j];
            if (t == kAnyTerm) continue;
            s = tnorm(fs.tnorm, s, mf_eval(fs.inputs[j].terms[static_cast<std::size_t>(t)], x[static_cast<Eigen::Index>(j)]));
        }
        w[static_cast<Eigen::Index>(r)] = rule.weight * s;
    }
    return w;
}

NormalizedFiring normalize_firing(const Vector& w) {
    NormalizedFiring out;
    const double total = w.sum();
    if (!(total > 0)) {
        out.weights = Vector::Constant(w.size(), w.size() ? 1.0 / static_cast<double>(w.size()) : 0.0);
        out.zero_activation = true;
    } else {
        out.weights = w / total;
    }
    return out;
}

Vector ts_rule_outputs(const FuzzySystem& fs, const Vector& x) {
    const auto d = x.size();
    Vector f(static_cast<Eigen::Index>(fs.rules.size()));
    for (std::size_t r = 0; r < fs.rules.size(); ++r) {
        const Vector& c = fs.rules[r].coefficients;
        f[static_cast<Eigen::Index>(r)] = c.head(d).dot(x) + c[d];
    }
    return f;
}

double infer_ts(const FuzzySystem& fs, const Vector& x) {
    if (fs.kind != FISKind::TakagiSugeno) throw InvalidInput("infer_ts: system is not Takagi-Sugeno");
    const auto wbar = normalize_firing(firing_strengths(fs, x)).weights;
    return wbar.dot(ts_rule_outputs(fs, x));
}

MamdaniResult infer_mamdani(const FuzzySystem& fs, const Vector& x, std::size_t resolution) {
    if (fs.kind != FISKind::Mamdani || !fs.output) throw InvalidInput("infer_mamdani: system is not Mamdani");
    if (resolution < 16) throw InvalidInput("infer_mamdani: resolution must be at least 16");
    const FuzzyVariable& out = *fs.output;
    const Vector w = firing_strengths(fs, x);
    const auto n = static_cast<Eigen::Index>(resolution);

    MamdaniResult res;
    res.grid = Vector::LinSpaced(n, out.min, out.max);
    res.aggregate = Vector::Zero(n);
    for (std::size_t r = 0; r < fs.rules.size(); ++r) {
        const double wr = w[static_cast<Eigen::Index>(r)];
        if (wr <= 0) continue;
        const MembershipFn& mf = out.terms[static_cast<std::size_t>(fs.rules[r].consequent_term)];
        for (Eigen::Index k = 0; k < n; ++k)
            res.aggregate[k] = tconorm(fs.tconorm, res.aggregate[k], std::min(wr, mf_eval(mf, res.grid[k])));
    }

    const auto d = defuzzify(res.grid, res.aggregate, fs.defuzz);
    res.value = d.value;
    res.zero_activation = d.zero_activation;
    return res;
}

Defuzzified defuzzify(const Vector& grid, const Vector& mu, Defuzzifier method) {
    if (grid.size() != mu.size() || grid.size() < 2) throw InvalidInput("defuzzify: grid and membership size mismatch");
    const Eigen::Index n = grid.size();
    Defuzzified out;
    // Trapezoidal quadrature weights: endpoints count half a cell.
    Vector q = mu;
    q[0] *= 0.5;
    q[n - 1] *= 0.5;
    const double mass = q.sum();
    if (!(mass > 0)) {
        out.zero_activation = true;
        out.value = 0.5 * (grid[0] + grid[n - 1]);
        return out;
    }
    if (method == Defuzzifier::Centroid) {
        out.value = grid.dot(q) / mass;
        return out;
    }
    const double peak = mu.maxCoeff();
    const double tol = 1e-12 * peak;
    Eigen::Index first = -1, last = -1;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (mu[k] >= peak - tol) {
            if (first < 0) first = k;
            last = k;
        }
    }
    out.value = 0.5 * (grid[first] + grid[last]);
    return out;
}

double infer(const FuzzySystem& fs, const Vector& x) {
    return fs.kind == FISKind::Mamdani ? infer_mamdani(fs, x, fs.resolution).value : infer_ts(fs, x);
}

Vector predict(const FuzzySystem& fs, const Matrix& inputs) {
    if (inputs.cols() != static_cast<Eigen::Index>(fs.inputs.size()))
        throw InvalidInput("predict: input column count does not match the system");
    Vector y(inputs.rows());
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) y[i] = infer(fs, inputs.row(i).transpose());
    return y;
}

namespace {

template <class System, class Fn>
void for_each_mf(System& fs, bool include_output, Fn&& fn) {
    for (auto& v : fs.inputs)
        for (auto& t : v.terms) fn(t);
    if (include_output && fs.output)
        for (auto& t : fs.output->terms) fn(t);
}

}  // namespace

Vector membership_parameters(const FuzzySystem& fs, bool include_output) {
    std::vector<double> flat;
    for_each_mf(fs, include_output, [&](const MembershipFn& mf) {
        for (std::size_t i = 0; i < mf.parameter_count(); ++i) flat.push_back(mf.params[i]);
    });
    return Eigen::Map<Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

FuzzySystem with_membership_parameters(const FuzzySystem& fs, const Vector& params, bool include_output) {
    FuzzySystem out = fs;
    Eigen::Index pos = 0;
    for_each_mf(out, include_output, [&](MembershipFn& mf) {
        const auto k = static_cast<Eigen::Index>(mf.parameter_count());
        if (pos + k > params.size()) throw InvalidInput("with_membership_parameters: too few parameters");
        for (Eigen::Index i = 0; i < k; ++i) mf.params[static_cast<std::size_t>(i)] = params[pos + i];
        pos += k;
        mf.repair();
    });
    if (pos != params.size()) throw InvalidInput("with_membership_parameters: too many parameters");
    return out;
}

}  // namespace hybridci
