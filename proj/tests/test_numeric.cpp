#include "doctest.h"
#include "hybridci/numeric.hpp"
#include "oracles.hpp"

#include <array>
#include <atomic>

using namespace hybridci;

TEST_CASE("least squares: identity system") {
    Matrix a = Matrix::Identity(2, 2);
    Vector b(2);
    b << 3, 4;
    auto sol = solve_least_squares(a, b);
    CHECK(sol.x[0] == doctest::Approx(3.0));
    CHECK(sol.x[1] == doctest::Approx(4.0));
    CHECK_FALSE(sol.rank_deficient);
}

TEST_CASE("least squares: single column gives the target mean") {
    Matrix a(2, 1);
    a << 1, 1;
    Vector b(2);
    b << 1, 3;
    auto sol = solve_least_squares(a, b);
    CHECK(sol.x[0] == doctest::Approx(2.0));
}

TEST_CASE("least squares matches the normal-equations oracle") {
    RngStream rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = oracle::random_matrix(rng, 6, 3);
        const Vector b = oracle::random_vector(rng, 6);
        for (double ridge : {0.0, 0.3}) {
            const Vector x = solve_least_squares(a, b, ridge).x;
            const Vector ref = oracle::normal_equations(a, b, ridge);
            CHECK(oracle::rel_err(x, ref) < 1e-8);
        }
    }
}

TEST_CASE("least squares residual beats random perturbations") {
    RngStream rng(12, 0);
    const Matrix a = oracle::random_matrix(rng, 10, 4);
    const Vector b = oracle::random_vector(rng, 10);
    const Vector x = solve_least_squares(a, b).x;
    const double best = (a * x - b).norm();
    for (int k = 0; k < 100; ++k) {
        const Vector delta = oracle::random_vector(rng, 4, -1e-3, 1e-3);
        CHECK(best <= (a * (x + delta) - b).norm());
    }
}

TEST_CASE("least squares: rank deficiency falls back to a tiny ridge") {
    Matrix a(3, 2);
    a << 1, 2, 2, 4, 3, 6;
    Vector b(3);
    b << 1, 2, 3;
    auto sol = solve_least_squares(a, b);
    CHECK(sol.rank_deficient);
    CHECK(sol.ridge_used == doctest::Approx(kFallbackRidge));
    CHECK((a * sol.x - b).norm() < 1e-6);
}

TEST_CASE("least squares: invalid input") {
    Matrix a = Matrix::Identity(2, 2);
    Vector b(3);
    b.setZero();
    CHECK_THROWS_AS(solve_least_squares(a, b), InvalidInput);
    Vector b2(2);
    b2 << 1, std::nan("");
    CHECK_THROWS_AS(solve_least_squares(a, b2), InvalidInput);
    Vector b3 = Vector::Zero(2);
    CHECK_THROWS_AS(solve_least_squares(a, b3, -1.0), InvalidInput);
}

TEST_CASE("finite differences") {
    Vector x(3);
    x << 1, 2, 3;
    auto constant = [](const Vector&) { return 4.2; };
    CHECK(finite_diff_gradient(constant, x).norm() == 0.0);

    Vector x1(1);
    x1 << 3;
    auto square = [](const Vector& v) { return v[0] * v[0]; };
    CHECK(finite_diff_gradient(square, x1, 1e-6)[0] == doctest::Approx(6.0).epsilon(1e-4));

    auto bad = [](const Vector&) { return std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(finite_diff_gradient(bad, x1), NumericBlowup);
}

TEST_CASE("finite differences converge at second order") {
    // A non-quadratic cubic term makes the truncation error visible.
    RngStream rng(13, 0);
    const Matrix q = oracle::random_matrix(rng, 3, 3);
    const Vector x = oracle::random_vector(rng, 3);
    auto f = [&](const Vector& v) { return v.dot(q * v) + v.array().cube().sum(); };
    const Vector exact = (q + q.transpose()) * x + Vector(3.0 * x.array().square());
    const double e1 = (finite_diff_gradient(f, x, 1e-2) - exact).norm();
    const double e2 = (finite_diff_gradient(f, x, 5e-3) - exact).norm();
    CHECK(e1 / e2 >= 3.0);

    // On a pure quadratic the central difference is exact up to roundoff.
    auto quad = [&](const Vector& v) { return v.dot(q * v); };
    CHECK((finite_diff_gradient(quad, x, 1e-3) - (q + q.transpose()) * x).norm() < 1e-8);
}

TEST_CASE("rng: degenerate gaussian and determinism") {
    RngStream s(42, 7);
    CHECK(rng_draw(s, Gaussian{0, 0}) == 0.0);
    CHECK(rng_draw(s, Gaussian{3.5, 0}) == 3.5);

    RngStream a(5, 9), b(5, 9);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(5, 9);
    RngStream d = c;  // copying replays
    c.uniform01();
    d.uniform01();
    CHECK(c.uniform01() == d.uniform01());

    RngStream e(1, 1);
    CHECK_THROWS_AS(rng_draw(e, Gaussian{0, -1}), InvalidInput);
}

TEST_CASE("rng: uniform mean") {
    RngStream s(2024, 1);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng_draw(s, Uniform01{});
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("rng: distinct streams pass a joint chi-square uniformity test") {
    // 10 x 10 bins of (stream A, stream B) pairs; 99 dof, p = 0.001 critical
    // value 148.23.
    for (std::uint64_t id = 0; id < 5; ++id) {
        RngStream a(99, id), b(99, id + 1);
        std::array<int, 100> bins{};
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const auto u = static_cast<int>(a.uniform01() * 10);
            const auto v = static_cast<int>(b.uniform01() * 10);
            ++bins[static_cast<std::size_t>(u * 10 + v)];
        }
        const double expected = n / 100.0;
        double chi2 = 0;
        for (int c : bins) chi2 += (c - expected) * (c - expected) / expected;
        CHECK(chi2 < 148.23);
    }
}

TEST_CASE("parallel_for visits each index once and rethrows") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); }, 4);
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS(parallel_for(10, [](std::size_t i) {
        if (i == 3) throw InvalidInput("boom");
    }, 3));
}
