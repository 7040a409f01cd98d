#include "doctest.h"
#include "hybridci/dataset.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace hybridci;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
    auto p = std::filesystem::temp_directory_path() / ("hybridci_test_" + name);
    std::ofstream(p, std::ios::binary) << contents;
    return p;
}

}  // namespace

TEST_CASE("mackey-glass fixed points") {
    MackeyGlassParams p;
    p.n = 300;
    p.x0 = 0;
    for (double v : gen_mackey_glass(p)) CHECK(v == 0.0);

    p.x0 = 1.0;
    for (double tau : {0.0, 3.0, 17.0, 30.0}) {
        p.tau = tau;
        for (double v : gen_mackey_glass(p)) REQUIRE(v == 1.0);
    }
}

TEST_CASE("mackey-glass agrees with a ten times finer integration") {
    MackeyGlassParams p;
    p.tau = 17;
    p.n = 500;
    p.x0 = 1.2;
    p.dt = 0.1;
    const auto coarse = gen_mackey_glass(p);
    p.dt = 0.01;
    const auto fine = gen_mackey_glass(p);
    REQUIRE(coarse.size() == 500);
    double worst = 0;
    for (std::size_t i = 0; i < coarse.size(); ++i) worst = std::max(worst, std::abs(coarse[i] - fine[i]));
    CHECK(worst < 1e-3);
}

TEST_CASE("mackey-glass stays in (0, 2) after washout") {
    for (double x0 : {0.1, 0.5, 1.2, 1.49}) {
        MackeyGlassParams p;
        p.x0 = x0;
        p.n = 1000;
        p.washout = 200;
        for (double v : gen_mackey_glass(p)) {
            REQUIRE(v > 0.0);
            REQUIRE(v < 2.0);
        }
    }
}

TEST_CASE("mackey-glass rejects bad parameters and divergence") {
    MackeyGlassParams p;
    p.dt = 0;
    CHECK_THROWS_AS(gen_mackey_glass(p), InvalidInput);
    p.dt = 0.3;  // 1.0 is not a multiple of 0.3
    CHECK_THROWS_AS(gen_mackey_glass(p), InvalidInput);
    MackeyGlassParams blow;
    blow.b = -2.0;  // exponential growth
    blow.x0 = 1.0;
    blow.n = 100;
    CHECK_THROWS_AS(gen_mackey_glass(blow), NumericBlowup);
}

TEST_CASE("embed_series") {
    const std::vector<double> x{0, 1, 2, 3, 4};
    auto ds = embed_series(x, {0}, 1);
    REQUIRE(ds.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(ds.inputs(i, 0) == i);
        CHECK(ds.targets(i, 0) == i + 1);
    }

    auto ds2 = embed_series({0, 1, 2, 3}, {1, 0}, 1);
    REQUIRE(ds2.size() == 2);
    CHECK(ds2.inputs(0, 0) == 0);
    CHECK(ds2.inputs(0, 1) == 1);
    CHECK(ds2.targets(0, 0) == 2);
    CHECK(ds2.inputs(1, 0) == 1);
    CHECK(ds2.inputs(1, 1) == 2);
    CHECK(ds2.targets(1, 0) == 3);

    CHECK_THROWS_AS(embed_series({0, 1, 2}, {2}, 1), InvalidInput);

    RngStream rng(3, 0);
    for (int t = 0; t < 50; ++t) {
        const std::size_t len = 10 + rng.uniform_index(40);
        std::vector<std::size_t> lags;
        for (std::size_t k = 0, c = 1 + rng.uniform_index(4); k < c; ++k) lags.push_back(rng.uniform_index(6));
        const std::size_t horizon = 1 + rng.uniform_index(3);
        std::vector<double> s(len);
        for (auto& v : s) v = rng.uniform01();
        const std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
        CHECK(static_cast<std::size_t>(embed_series(s, lags, horizon).size()) == len - max_lag - horizon);
    }
}

TEST_CASE("load_csv") {
    auto p = temp_file("basic.csv", "1,2,3\n4,5,6");
    auto ds = load_csv(p, false, 1);
    REQUIRE(ds.size() == 2);
    CHECK(ds.inputs(0, 0) == 1);
    CHECK(ds.inputs(0, 1) == 2);
    CHECK(ds.inputs(1, 1) == 5);
    CHECK(ds.targets(0, 0) == 3);
    CHECK(ds.targets(1, 0) == 6);

    auto h = temp_file("header.csv", "a,b,c\n1,2,3\n");
    auto dh = load_csv(h, true, 1);
    CHECK(dh.size() == 1);
    CHECK(dh.targets(0, 0) == 3);

    CHECK_THROWS_AS(load_csv(temp_file("ragged.csv", "1,2,3\n4,5\n"), false, 1), ParseError);
    CHECK_THROWS_AS(load_csv(temp_file("text.csv", "1,x,3\n"), false, 1), ParseError);
    CHECK_THROWS_AS(load_csv(temp_file("empty.csv", ""), false, 1), ParseError);
    CHECK_THROWS_AS(load_csv(temp_file("narrow.csv", "1\n2\n"), false, 1), ParseError);

    try {
        load_csv(temp_file("where.csv", "1,2\n3,oops\n"), false, 1);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
}

TEST_CASE("write_csv then load_csv round-trips bit-exactly") {
    RngStream rng(17, 0);
    Dataset ds{oracle::random_matrix(rng, 20, 3, -1e3, 1e3), oracle::random_matrix(rng, 20, 2, -1e-7, 1e-7), "rt"};
    ds.inputs(0, 0) = 0.1;
    ds.inputs(1, 1) = 1.0 / 3.0;
    auto p = std::filesystem::temp_directory_path() / "hybridci_test_roundtrip.csv";
    write_csv(p, ds, {"a", "b", "c", "y1", "y2"});
    auto back = load_csv(p, true, 2);
    CHECK(back.inputs == ds.inputs);
    CHECK(back.targets == ds.targets);
}

TEST_CASE("split: deterministic partitions") {
    Dataset ds{Matrix(10, 1), Matrix(10, 1), "s"};
    for (int i = 0; i < 10; ++i) ds.inputs(i, 0) = ds.targets(i, 0) = i;

    auto s = split(ds, {0.8, 0.0, 0.2, false, 0});
    REQUIRE(s.train.size() == 8);
    CHECK(s.valid.size() == 0);
    REQUIRE(s.test.size() == 2);
    for (int i = 0; i < 8; ++i) CHECK(s.train.inputs(i, 0) == i);
    CHECK(s.test.inputs(0, 0) == 8);
    CHECK(s.test.inputs(1, 0) == 9);

    auto all = split(ds, {1.0, 0.0, 0.0, false, 0});
    CHECK(all.train.size() == 10);

    CHECK_THROWS_AS(split(ds, {0.5, 0.5, 0.5, false, 0}), InvalidSplit);
    CHECK_THROWS_AS(split(ds, {0.95, 0.05, 0.0, false, 0}), InvalidSplit);
    Dataset tiny{Matrix::Zero(2, 1), Matrix::Zero(2, 1), "t"};
    CHECK_THROWS_AS(split(tiny, {1, 0, 0, false, 0}), InvalidSplit);
}

TEST_CASE("split is a partition of the row multiset") {
    RngStream rng(21, 0);
    for (int t = 0; t < 30; ++t) {
        const auto n = static_cast<Eigen::Index>(10 + rng.uniform_index(40));
        Dataset ds{Matrix(n, 1), Matrix(n, 1), "p"};
        for (Eigen::Index i = 0; i < n; ++i) {
            ds.inputs(i, 0) = static_cast<double>(rng.uniform_index(7));  // duplicates on purpose
            ds.targets(i, 0) = static_cast<double>(i);
        }
        const double v = 0.1 + 0.3 * rng.uniform01();
        const double te = 0.1 + 0.3 * rng.uniform01();
        SplitSpec spec{1.0 - v - te, v, te, rng.bernoulli(0.5), rng.next_u64()};
        auto s = split(ds, spec);
        std::multiset<std::pair<double, double>> orig, joined;
        for (Eigen::Index i = 0; i < n; ++i) orig.emplace(ds.inputs(i, 0), ds.targets(i, 0));
        for (const Dataset* part : {&s.train, &s.valid, &s.test})
            for (Eigen::Index i = 0; i < part->size(); ++i) joined.emplace(part->inputs(i, 0), part->targets(i, 0));
        CHECK(orig == joined);
        auto again = split(ds, spec);
        CHECK(again.test.targets == s.test.targets);
    }
}

TEST_CASE("normalize_minmax") {
    Dataset ds{Matrix(3, 2), Matrix(3, 1), "n"};
    ds.inputs << 0, 7, 5, 7, 10, 7;
    ds.targets << -1, 0, 1;
    auto [norm, scaler] = normalize_minmax(ds);
    CHECK(norm.inputs(0, 0) == 0.0);
    CHECK(norm.inputs(1, 0) == 0.5);
    CHECK(norm.inputs(2, 0) == 1.0);
    for (int i = 0; i < 3; ++i) CHECK(norm.inputs(i, 1) == 0.5);
    CHECK(norm.targets(1, 0) == 0.5);

    RngStream rng(5, 5);
    Dataset r{oracle::random_matrix(rng, 40, 4, -50, 50), oracle::random_matrix(rng, 40, 2, 0, 3), "r"};
    auto [rn, rs] = normalize_minmax(r);
    auto back = rs.inverse(rn);
    CHECK((back.inputs - r.inputs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.targets - r.targets).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rmse") {
    Matrix a(1, 1), b(1, 1);
    a << 0;
    b << 2;
    CHECK(rmse(a, b) == doctest::Approx(2.0));
    CHECK(rmse(b, b) == 0.0);
    CHECK_THROWS_AS(rmse(Matrix(2, 1), Matrix(1, 2)), InvalidInput);

    RngStream rng(8, 8);
    const Matrix p = oracle::random_matrix(rng, 30, 2), t = oracle::random_matrix(rng, 30, 2);
    double sse = 0;
    for (Eigen::Index i = 0; i < 30; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) sse += (p(i, j) - t(i, j)) * (p(i, j) - t(i, j));
    const double r = rmse(p, t);
    CHECK(std::abs(r * r * 60 - sse) < 1e-10);
    CHECK(r > 0);
}

TEST_CASE("fingerprint separates datasets") {
    Dataset a{Matrix::Zero(3, 1), Matrix::Ones(3, 1), "a"};
    Dataset b = a;
    CHECK(fingerprint(a) == fingerprint(b));
    b.targets(2, 0) = 1.0000000001;
    CHECK(fingerprint(a) != fingerprint(b));
}
