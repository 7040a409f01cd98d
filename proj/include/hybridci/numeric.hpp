#pragma once

// Deterministic numeric substrate shared by every module: dense types,
// ridge-regularised least squares, central finite differences, and
// counter-based random streams.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <variant>

#include "hybridci/error.hpp"

namespace hybridci {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

/// Ridge used when an unregularised system turns out to be rank deficient.
inline constexpr double kFallbackRidge = 1e-10;

template <class Scalar>
struct LeastSquaresSolution {
    VectorX<Scalar> x;
    Scalar ridge_used{0};
    /// Set when the system was rank deficient and the fallback ridge kicked in.
    bool rank_deficient{false};
};

/// Minimises ||A x - b||^2 + ridge ||x||^2 with Householder QR.
///
/// Ridge is applied by augmenting the system with sqrt(ridge) I rows, so
/// the normal matrix is never formed. A rank-deficient system with
/// ridge == 0 is re-solved with kFallbackRidge and flagged.
template <class DerivedA, class DerivedB>
LeastSquaresSolution<typename DerivedA::Scalar> solve_least_squares(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    typename DerivedA::Scalar ridge = 0) {
    using Scalar = typename DerivedA::Scalar;
    if (a.rows() != b.rows() || b.cols() != 1)
        throw InvalidInput("solve_least_squares: A has " + std::to_string(a.rows()) +
                           " rows but b has " + std::to_string(b.rows()));
    if (!(ridge >= 0)) throw InvalidInput("solve_least_squares: ridge must be >= 0");
    if (!a.allFinite() || !b.allFinite())
        throw InvalidInput("solve_least_squares: non-finite entry in A or b");

    LeastSquaresSolution<Scalar> out;
    const auto rows = a.rows();
    const auto cols = a.cols();
    if (cols == 0) {
        out.x.resize(0);
        return out;
    }

    if (ridge == 0) {
        Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(a);
        if (qr.rank() == cols) {
            out.x = qr.solve(b);
            return out;
        }
        ridge = static_cast<Scalar>(kFallbackRidge);
        out.rank_deficient = true;
    }

    MatrixX<Scalar> aug(rows + cols, cols);
    aug.topRows(rows) = a;
    aug.bottomRows(cols) = MatrixX<Scalar>::Identity(cols, cols) * std::sqrt(ridge);
    VectorX<Scalar> rhs = VectorX<Scalar>::Zero(rows + cols);
    rhs.head(rows) = b;
    out.x = Eigen::HouseholderQR<MatrixX<Scalar>>(aug).solve(rhs);
    out.ridge_used = ridge;
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient, (f(x + h e_i) - f(x - h e_i)) / 2h per
/// coordinate. Non-finite evaluations raise NumericBlowup.
template <class Fn, class Derived>
VectorX<typename Derived::Scalar> finite_diff_gradient(Fn&& f, const Eigen::MatrixBase<Derived>& x,
                                                       typename Derived::Scalar h = 1e-6) {
    using Scalar = typename Derived::Scalar;
    if (!(h > 0)) throw InvalidInput("finite_diff_gradient: step must be positive");
    VectorX<Scalar> probe = x;
    VectorX<Scalar> grad(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Scalar xi = probe[i];
        probe[i] = xi + h;
        const Scalar fp = f(static_cast<const VectorX<Scalar>&>(probe));
        probe[i] = xi - h;
        const Scalar fm = f(static_cast<const VectorX<Scalar>&>(probe));
        probe[i] = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericBlowup("finite_diff_gradient: non-finite function value at coordinate " +
                                std::to_string(i));
        grad[i] = (fp - fm) / (2 * h);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Packs a purpose tag, a generation and an individual index into a stream id.
inline constexpr std::uint64_t make_stream_id(std::uint64_t tag, std::uint64_t generation,
                                              std::uint64_t index) noexcept {
    return (tag << 48) ^ ((generation & 0xFFFFFFULL) << 24) ^ (index & 0xFFFFFFULL);
}

struct Uniform01 {};
struct Gaussian {
    double mean{0};
    double sd{1};
};
using Distribution = std::variant<Uniform01, Gaussian>;

/// Counter-based generator: draw k of stream (seed, id) is a pure function
/// of (seed, id, k). Copying a stream replays it.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : seed_(seed), stream_id_(stream_id), key_(splitmix64(seed ^ splitmix64(stream_id))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept {
        return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) noexcept {
        if (n <= 1) return 0;
        auto k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    /// Box-Muller, one variate per two uniforms. sd == 0 returns mean exactly.
    double gaussian(double mean, double sd) noexcept {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    bool bernoulli(double p) noexcept { return uniform01() < p; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_{0};
};

double rng_draw(RngStream& stream, const Distribution& kind);

// ---------------------------------------------------------------------------
// Concurrency
// ---------------------------------------------------------------------------

/// Worker count from HYBRIDCI_THREADS (unset or 0 means hardware concurrency).
unsigned resolve_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; results must be written to per-index slots.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  unsigned threads = resolve_thread_count());

}  // namespace hybridci
