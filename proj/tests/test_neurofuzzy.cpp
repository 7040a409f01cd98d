#include "doctest.h"
#include "hybridci/neurofuzzy.hpp"
#include "oracles.hpp"

using namespace hybridci;

namespace {

FuzzyVariable var(const std::string& name, double lo = 0, double hi = 1) { return {name, lo, hi, {}}; }

FuzzySystem ts_system(RngStream& rng, std::size_t d, std::size_t terms) {
    std::vector<FuzzyVariable> vars;
    for (std::size_t j = 0; j < d; ++j) vars.push_back(var("x" + std::to_string(j)));
    auto fs = grid_partition(vars, terms, FISKind::TakagiSugeno, rng);
    for (auto& r : fs.rules) r.coefficients = oracle::random_vector(rng, static_cast<Eigen::Index>(d + 1), -1, 1);
    return fs;
}

Dataset sample(const FuzzySystem& truth, RngStream& rng, Eigen::Index n) {
    Dataset ds{oracle::random_matrix(rng, n, static_cast<Eigen::Index>(truth.inputs.size()), 0, 1), Matrix(n, 1), "s"};
    ds.targets.col(0) = predict(truth, ds.inputs);
    return ds;
}

bool non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1]) return false;
    return true;
}

FuzzySystem gaussian_mamdani() {
    FuzzySystem fs;
    fs.kind = FISKind::Mamdani;
    fs.tnorm = TNorm::Min;
    fs.inputs = {FuzzyVariable{"x", 0, 1, {MembershipFn::gaussian(0.0, 0.3, "low"), MembershipFn::gaussian(1.0, 0.3, "high")}}};
    fs.output = FuzzyVariable{"y", 0, 1, {MembershipFn::gaussian(0.3, 0.2, "low"), MembershipFn::gaussian(0.7, 0.2, "high")}};
    FuzzyRule lo, hi;
    lo.antecedent = {0};
    lo.consequent_term = 0;
    hi.antecedent = {1};
    hi.consequent_term = 1;
    fs.rules = {lo, hi};
    fs.resolution = 101;
    return fs;
}

Dataset step_target(double at) {
    Dataset ds{Matrix(21, 1), Matrix(21, 1), "step"};
    for (int i = 0; i < 21; ++i) {
        const double x = i / 20.0;
        ds.inputs(i, 0) = x;
        ds.targets(i, 0) = x < at ? 0.05 : 0.95;
    }
    return ds;
}

}  // namespace

TEST_CASE("NFTrainConfig validation") {
    NFTrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = {};
    c.ridge = -1;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = {};
    c.antecedent_lr = std::nan("");
    CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("design matrix reproduces the TS output") {
    RngStream rng(1, 0);
    auto fs = ts_system(rng, 2, 3);
    const Matrix x = oracle::random_matrix(rng, 15, 2, 0, 1);
    Vector stacked(static_cast<Eigen::Index>(fs.rules.size() * 3));
    for (std::size_t r = 0; r < fs.rules.size(); ++r) stacked.segment(static_cast<Eigen::Index>(r) * 3, 3) = fs.rules[r].coefficients;
    CHECK((ts_design_matrix(fs, x) * stacked - predict(fs, x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hybrid training recovers consequents of a known system") {
    RngStream rng(2, 0);
    const auto truth = ts_system(rng, 2, 3);
    const Dataset ds = sample(truth, rng, 120);
    auto start = truth;
    for (auto& r : start.rules) r.coefficients.setZero();
    NFTrainConfig cfg;
    cfg.epochs = 1;
    cfg.freeze_antecedents = true;
    const auto res = hybrid_train_ts(start, ds, cfg);
    CHECK(res.loss_curve.back() < 1e-8);
    // Triangular grids reproduce linear functions, so individual coefficients
    // are not identifiable; the input-output map is.
    const Matrix fresh = oracle::random_matrix(rng, 50, 2, 0, 1);
    CHECK((predict(res.system, fresh) - predict(truth, fresh)).cwiseAbs().maxCoeff() < 1e-8);

    // Gaussian terms make the coefficients themselves identifiable.
    auto smooth = truth;
    for (auto& v : smooth.inputs)
        for (auto& mf : v.terms) mf = MembershipFn::gaussian(mf.params[1], 0.35, mf.label);
    const Dataset sds = sample(smooth, rng, 150);
    auto sstart = smooth;
    for (auto& r : sstart.rules) r.coefficients.setZero();
    const auto sres = hybrid_train_ts(sstart, sds, cfg);
    CHECK(sres.loss_curve.back() < 1e-8);
    for (std::size_t r = 0; r < smooth.rules.size(); ++r)
        CHECK((sres.system.rules[r].coefficients - smooth.rules[r].coefficients).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("hybrid training from a zero-residual start changes nothing") {
    RngStream rng(3, 0);
    const auto truth = ts_system(rng, 2, 2);
    const Dataset ds = sample(truth, rng, 40);
    NFTrainConfig cfg;
    cfg.epochs = 5;
    cfg.antecedent_lr = 0.1;
    const auto res = hybrid_train_ts(truth, ds, cfg);
    CHECK(membership_parameters(res.system, false) == membership_parameters(truth, false));
    for (std::size_t r = 0; r < truth.rules.size(); ++r)
        CHECK(res.system.rules[r].coefficients == truth.rules[r].coefficients);
    for (double l : res.loss_curve) CHECK(l == 0.0);
}

TEST_CASE("antecedent gradient matches finite differences") {
    RngStream rng(4, 0);
    for (TNorm t : {TNorm::Product, TNorm::Min}) {
        for (int trial = 0; trial < 8; ++trial) {
            auto fs = ts_system(rng, 2, 3);
            fs.tnorm = t;
            if (trial % 2) {
                // Gaussian terms are smooth everywhere.
                for (auto& v : fs.inputs)
                    for (auto& mf : v.terms) mf = MembershipFn::gaussian(mf.params[1], 0.3, mf.label);
            }
            for (auto& v : fs.inputs)
                for (auto& mf : v.terms) {
                    mf.params[1] += rng.uniform(-0.05, 0.05);
                    mf.repair();
                }
            Dataset ds{oracle::random_matrix(rng, 25, 2, 0.02, 0.98), oracle::random_matrix(rng, 25, 1), "g"};
            // Drop samples within 1e-3 of a kink (any breakpoint, or a tie
            // between memberships under the min t-norm).
            std::vector<Eigen::Index> keep;
            for (Eigen::Index i = 0; i < ds.size(); ++i) {
                bool near = false;
                for (std::size_t j = 0; j < 2; ++j)
                    for (const auto& mf : fs.inputs[j].terms)
                        for (std::size_t k = 0; k < 3 && mf.kind == MFKind::Triangular; ++k)
                            near |= std::abs(ds.inputs(i, static_cast<Eigen::Index>(j)) - mf.params[k]) < 1e-3;
                if (t == TNorm::Min)
                    for (const auto& r : fs.rules) {
                        const double a = mf_eval(fs.inputs[0].terms[static_cast<std::size_t>(r.antecedent[0])], ds.inputs(i, 0));
                        const double b = mf_eval(fs.inputs[1].terms[static_cast<std::size_t>(r.antecedent[1])], ds.inputs(i, 1));
                        near |= std::abs(a - b) < 1e-3;
                    }
                if (!near) keep.push_back(i);
            }
            const Dataset clean = ds.subset(keep, "clean");
            if (clean.size() == 0) continue;
            const Vector analytic = ts_antecedent_gradient(fs, clean);
            const Vector numeric = finite_diff_gradient(
                [&](const Vector& p) { return fis_sse(with_membership_parameters(fs, p, false), clean); },
                membership_parameters(fs, false), 1e-7);
            INFO("tnorm " << to_string(t) << " trial " << trial);
            CHECK(oracle::rel_err(analytic, numeric) < 1e-5);
        }
    }
}

TEST_CASE("least-squares pass beats random consequent perturbations") {
    RngStream rng(5, 0);
    auto fs = ts_system(rng, 2, 3);
    Dataset ds{oracle::random_matrix(rng, 60, 2, 0, 1), Matrix(60, 1), "nl"};
    for (Eigen::Index i = 0; i < 60; ++i) ds.targets(i, 0) = std::sin(4 * ds.inputs(i, 0)) * ds.inputs(i, 1);
    const auto fit = fit_consequents(fs, ds, 0.0);
    const double best = fis_sse(fit.system, ds);
    for (int k = 0; k < 100; ++k) {
        auto other = fit.system;
        for (auto& r : other.rules) r.coefficients += oracle::random_vector(rng, 3, -0.1, 0.1);
        CHECK(fis_sse(other, ds) >= best);
    }
}

TEST_CASE("frozen hybrid training is idempotent after the first epoch") {
    RngStream rng(6, 0);
    auto fs = ts_system(rng, 2, 2);
    Dataset ds{oracle::random_matrix(rng, 50, 2, 0, 1), Matrix(50, 1), "nl"};
    for (Eigen::Index i = 0; i < 50; ++i) ds.targets(i, 0) = ds.inputs(i, 0) * ds.inputs(i, 1);
    NFTrainConfig cfg;
    cfg.freeze_antecedents = true;
    cfg.epochs = 1;
    const auto once = hybrid_train_ts(fs, ds, cfg);
    cfg.epochs = 6;
    const auto many = hybrid_train_ts(fs, ds, cfg);
    CHECK(many.loss_curve.back() == once.loss_curve.back());
    for (std::size_t r = 0; r < fs.rules.size(); ++r)
        CHECK(many.system.rules[r].coefficients == once.system.rules[r].coefficients);
}

TEST_CASE("hybrid training improves a nonlinear fit with monotone loss") {
    RngStream rng(7, 0);
    auto fs = ts_system(rng, 1, 3);
    Dataset ds{Matrix(40, 1), Matrix(40, 1), "sin"};
    for (Eigen::Index i = 0; i < 40; ++i) {
        ds.inputs(i, 0) = (static_cast<double>(i) + 0.37) / 40.0;
        ds.targets(i, 0) = std::sin(6 * ds.inputs(i, 0));
    }
    NFTrainConfig frozen;
    frozen.freeze_antecedents = true;
    frozen.epochs = 1;
    const double lse_only = hybrid_train_ts(fs, ds, frozen).loss_curve.back();

    NFTrainConfig cfg;
    cfg.epochs = 60;
    cfg.antecedent_lr = 0.5;
    const auto res = hybrid_train_ts(fs, ds, cfg);
    CHECK(non_increasing(res.loss_curve));
    CHECK(res.loss_curve.back() < lse_only);
    CHECK_FALSE(res.diverged);
    CHECK_NOTHROW(res.system.validate());

    cfg.ridge = 1e-3;
    CHECK(non_increasing(hybrid_train_ts(fs, ds, cfg).loss_curve));
}

TEST_CASE("Mamdani gradient training") {
    auto fs = gaussian_mamdani();
    const Dataset ds = step_target(0.5);
    NFTrainConfig cfg;
    cfg.antecedent_lr = 0;
    auto still = gradient_train_mamdani(fs, ds, cfg);
    CHECK(membership_parameters(still.system, true) == membership_parameters(fs, true));

    cfg.antecedent_lr = 0.5;
    cfg.epochs = 15;
    auto res = gradient_train_mamdani(fs, ds, cfg);
    CHECK(non_increasing(res.loss_curve));
    CHECK(res.loss_curve.back() < res.loss_curve.front());

    cfg.freeze_antecedents = true;
    auto out_only = gradient_train_mamdani(fs, ds, cfg);
    const Vector before = membership_parameters(fs, false);
    CHECK(membership_parameters(out_only.system, false) == before);
    CHECK(out_only.loss_curve.back() <= out_only.loss_curve.front());

    auto tri = fs;
    tri.output->terms[0] = MembershipFn::triangular(0, 0.3, 0.6, "low");
    CHECK_THROWS_AS(gradient_train_mamdani(tri, ds, cfg), InvalidInput);
}

TEST_CASE("FAM: perfect recall of a single rule") {
    FuzzyVariable in{"x", 0, 1, {MembershipFn::triangular(0, 0.5, 1, "mid")}};
    FuzzyVariable out{"y", 0, 10, {MembershipFn::triangular(2, 5, 8, "mid")}};
    FuzzyRule r;
    r.antecedent = {0};
    r.consequent_term = 0;
    const auto store = fam_store({r}, {in}, out, 21);
    Vector x(1);
    x << 0.5;
    const auto rec = fam_recall(store, x);
    for (Eigen::Index k = 0; k < store.output_grid.size(); ++k)
        CHECK(rec.fuzzy_output[k] == doctest::Approx(mf_eval(out.terms[0], store.output_grid[k])).epsilon(1e-14));
    CHECK(rec.value == doctest::Approx(5.0).epsilon(1e-12));
    CHECK_FALSE(rec.zero_activation);

    const auto zero = fam_recall_keys(store, {Vector::Zero(21)});
    CHECK(zero.zero_activation);
    CHECK(zero.fuzzy_output.isZero());
    x << 3.0;  // outside the grid
    CHECK(fam_recall(store, x).zero_activation);
    CHECK_THROWS_AS(fam_store({r}, {in}, out, 4), InvalidInput);
}

TEST_CASE("FAM: two-rule recall against brute-force max-min composition") {
    RngStream rng(8, 0);
    FuzzyVariable a{"a", 0, 1, grid_terms(0, 1, 3)};
    FuzzyVariable b{"b", -1, 1, grid_terms(-1, 1, 3)};
    FuzzyVariable out{"y", 0, 4, grid_terms(0, 4, 3)};
    std::vector<FuzzyRule> rules(2);
    rules[0].antecedent = {0, 2};
    rules[0].consequent_term = 2;
    rules[1].antecedent = {1, kAnyTerm};
    rules[1].consequent_term = 0;
    const std::size_t g = 17;
    const auto store = fam_store(rules, {a, b}, out, g);

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vector> keys{oracle::random_vector(rng, g, 0, 1), oracle::random_vector(rng, g, 0, 1)};
        if (trial % 3 == 0) keys[1] *= 0.3;
        const auto rec = fam_recall_keys(store, keys);
        double key_height = 0;
        for (const auto& k : keys) key_height = std::max(key_height, k.maxCoeff());

        // Full relation over (u1, u2, v) with product-form key, no factorisation.
        for (std::size_t v = 0; v < g; ++v) {
            const double yv = 0 + 4.0 * static_cast<double>(v) / static_cast<double>(g - 1);
            double agg = 0;
            for (const auto& rule : rules) {
                const double mu_b = mf_eval(out.terms[static_cast<std::size_t>(rule.consequent_term)], yv);
                double best = 0;
                for (std::size_t u1 = 0; u1 < g; ++u1)
                    for (std::size_t u2 = 0; u2 < g; ++u2) {
                        const double x1 = static_cast<double>(u1) / static_cast<double>(g - 1);
                        const double x2 = -1 + 2.0 * static_cast<double>(u2) / static_cast<double>(g - 1);
                        double rel = mu_b;
                        double key = std::min(keys[0][static_cast<Eigen::Index>(u1)], keys[1][static_cast<Eigen::Index>(u2)]);
                        if (rule.antecedent[0] != kAnyTerm)
                            rel = std::min(rel, mf_eval(a.terms[static_cast<std::size_t>(rule.antecedent[0])], x1));
                        if (rule.antecedent[1] != kAnyTerm)
                            rel = std::min(rel, mf_eval(b.terms[static_cast<std::size_t>(rule.antecedent[1])], x2));
                        best = std::max(best, std::min(key, rel));
                    }
                agg = std::max(agg, best);
            }
            CHECK(std::abs(rec.fuzzy_output[static_cast<Eigen::Index>(v)] - agg) < 1e-12);
        }
        CHECK(rec.fuzzy_output.maxCoeff() <= key_height + 1e-15);
    }
}

TEST_CASE("FAM built from a Mamdani system matches its inference at grid inputs") {
    RngStream rng(9, 0);
    FuzzyVariable out{"y", 0, 1, {}};
    auto fs = grid_partition({var("a")}, 3, FISKind::Mamdani, rng, out);
    const auto store = fam_store(fs, 41);
    Vector x(1);
    for (double xv : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        x << xv;
        const auto inferred = infer_mamdani(fs, x, 41);
        const auto rec = fam_recall(store, x);
        CHECK((rec.fuzzy_output - inferred.aggregate).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(rec.value == doctest::Approx(inferred.value).epsilon(1e-12));
    }
}
