#include "hybridci/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace hybridci {

void Dataset::validate() const {
    if (inputs.rows() < 1) throw InvalidInput("dataset '" + name + "': no rows");
    if (inputs.cols() < 1) throw InvalidInput("dataset '" + name + "': no input columns");
    if (targets.cols() < 1) throw InvalidInput("dataset '" + name + "': no target columns");
    if (inputs.rows() != targets.rows())
        throw InvalidInput("dataset '" + name + "': input and target row counts differ");
    if (!inputs.allFinite() || !targets.allFinite())
        throw InvalidInput("dataset '" + name + "': non-finite entry");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows, std::string new_name) const {
    Dataset out;
    out.name = std::move(new_name);
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(rows[k]);
        out.targets.row(static_cast<Eigen::Index>(k)) = targets.row(rows[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double mg_rhs(double x, double delayed, double a, double b) {
    const double d2 = delayed * delayed;
    const double d4 = d2 * d2;
    const double d8 = d4 * d4;
    return a * delayed / (1.0 + d8 * d2) - b * x;
}

}  // namespace

std::vector<double> gen_mackey_glass(const MackeyGlassParams& p) {
    if (!(p.dt > 0)) throw InvalidInput("gen_mackey_glass: dt must be positive");
    if (!(p.tau >= 0)) throw InvalidInput("gen_mackey_glass: tau must be >= 0");
    if (p.n < 1) throw InvalidInput("gen_mackey_glass: n must be >= 1");
    if (!(p.sample_interval > 0)) throw InvalidInput("gen_mackey_glass: sample_interval must be positive");
    const double ratio = p.sample_interval / p.dt;
    const auto steps_per_sample = static_cast<std::size_t>(std::llround(ratio));
    if (steps_per_sample < 1 || std::abs(ratio - static_cast<double>(steps_per_sample)) > 1e-9 * ratio)
        throw InvalidInput("gen_mackey_glass: sample_interval must be an integer multiple of dt");

    const std::size_t total_samples = p.washout + p.n;
    const std::size_t total_steps = (total_samples - 1) * steps_per_sample;

    std::vector<double> hist;
    hist.reserve(total_steps + 1);
    hist.push_back(p.x0);

    // Delayed value x(t - tau). Before t = 0 the history is constant x0. When
    // tau < dt the delayed point can lie past the last stored step; it is then
    // clamped to that step.
    auto delayed = [&](double t) {
        const double s = t - p.tau;
        if (s <= 0) return p.x0;
        const double pos = s / p.dt;
        const auto i = static_cast<std::size_t>(std::floor(pos));
        if (i + 1 >= hist.size()) return hist.back();
        const double frac = pos - static_cast<double>(i);
        return hist[i] + frac * (hist[i + 1] - hist[i]);
    };

    const double h = p.dt;
    for (std::size_t k = 0; k < total_steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const double x = hist[k];
        double k1, k2, k3, k4;
        if (p.tau == 0) {
            k1 = mg_rhs(x, x, p.a, p.b);
            k2 = mg_rhs(x + 0.5 * h * k1, x + 0.5 * h * k1, p.a, p.b);
            k3 = mg_rhs(x + 0.5 * h * k2, x + 0.5 * h * k2, p.a, p.b);
            k4 = mg_rhs(x + h * k3, x + h * k3, p.a, p.b);
        } else {
            const double d0 = delayed(t);
            const double dm = delayed(t + 0.5 * h);
            const double d1 = delayed(t + h);
            k1 = mg_rhs(x, d0, p.a, p.b);
            k2 = mg_rhs(x + 0.5 * h * k1, dm, p.a, p.b);
            k3 = mg_rhs(x + 0.5 * h * k2, dm, p.a, p.b);
            k4 = mg_rhs(x + h * k3, d1, p.a, p.b);
        }
        const double next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(next) || std::abs(next) > 1e6)
            throw NumericBlowup("gen_mackey_glass: trajectory diverged at t = " + std::to_string(t + h));
        hist.push_back(next);
    }

    std::vector<double> out;
    out.reserve(p.n);
    for (std::size_t s = p.washout; s < total_samples; ++s) out.push_back(hist[s * steps_per_sample]);
    return out;
}

Dataset embed_series(const std::vector<double>& x, const std::vector<std::size_t>& lags,
                     std::size_t horizon, std::string name) {
    if (lags.empty()) throw InvalidInput("embed_series: at least one lag required");
    if (horizon < 1) throw InvalidInput("embed_series: horizon must be positive");
    const std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
    if (max_lag + horizon >= x.size())
        throw InvalidInput("embed_series: series of length " + std::to_string(x.size()) +
                           " too short for max lag " + std::to_string(max_lag) + " and horizon " +
                           std::to_string(horizon));
    const std::size_t rows = x.size() - max_lag - horizon;
    Dataset ds;
    ds.name = std::move(name);
    ds.inputs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lags.size()));
    ds.targets.resize(static_cast<Eigen::Index>(rows), 1);
    for (std::size_t k = 0; k < rows; ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        for (std::size_t j = 0; j < lags.size(); ++j)
            ds.inputs(r, static_cast<Eigen::Index>(j)) = x[k + max_lag - lags[j]];
        ds.targets(r, 0) = x[k + max_lag + horizon];
    }
    return ds;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw InvalidInput("format_double: conversion failed");
    return std::string(buf, ptr);
}

Dataset load_csv(const std::filesystem::path& path, bool has_header, std::size_t target_cols) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open " + path.string());

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (has_header && line_no == 1) continue;
        if (line.empty()) continue;

        std::vector<double> cells;
        std::size_t col = 0;
        std::size_t start = 0;
        for (;;) {
            const std::size_t end = line.find(',', start);
            const std::string_view cell(line.data() + start,
                                        (end == std::string::npos ? line.size() : end) - start);
            ++col;
            double v = 0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
                throw ParseError("load_csv: " + path.string() + " row " + std::to_string(line_no) +
                                 ", column " + std::to_string(col) + ": not a number: '" +
                                 std::string(cell) + "'");
            if (!std::isfinite(v))
                throw ParseError("load_csv: " + path.string() + " row " + std::to_string(line_no) +
                                 ", column " + std::to_string(col) + ": non-finite value");
            cells.push_back(v);
            if (end == std::string::npos) break;
            start = end + 1;
        }
        if (rows.empty()) {
            width = cells.size();
            if (width <= target_cols)
                throw ParseError("load_csv: " + path.string() + " row " + std::to_string(line_no) + ": " +
                                 std::to_string(width) + " columns, need more than " +
                                 std::to_string(target_cols));
        } else if (cells.size() != width) {
            throw ParseError("load_csv: " + path.string() + " row " + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " columns, got " + std::to_string(cells.size()));
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw ParseError("load_csv: " + path.string() + ": no data rows");
    if (target_cols < 1) throw ParseError("load_csv: target_cols must be >= 1");

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(width - target_cols);
    const auto m = static_cast<Eigen::Index>(target_cols);
    Dataset ds;
    ds.name = path.stem().string();
    ds.inputs.resize(n, d);
    ds.targets.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j) ds.inputs(i, j) = r[static_cast<std::size_t>(j)];
        for (Eigen::Index j = 0; j < m; ++j) ds.targets(i, j) = r[static_cast<std::size_t>(d + j)];
    }
    return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds, const std::vector<std::string>& header) {
    std::ostringstream os;
    if (!header.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
        os << '\n';
    }
    for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
        bool first = true;
        auto put = [&](double v) {
            if (!first) os << ',';
            os << format_double(v);
            first = false;
        };
        for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) put(ds.inputs(i, j));
        for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) put(ds.targets(i, j));
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("write_csv: cannot open " + path.string());
    out << os.str();
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
    for (double f : {train_fraction, valid_fraction, test_fraction})
        if (!(f >= 0)) throw InvalidSplit("split fractions must be >= 0");
    if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-12)
        throw InvalidSplit("split fractions must sum to 1");
}

DatasetSplit split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(ds.size());
    if (n < 3) throw InvalidSplit("split: need at least 3 rows");

    auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
    const std::size_t n_valid = count(spec.valid_fraction);
    const std::size_t n_test = count(spec.test_fraction);
    if (n_valid + n_test > n) throw InvalidSplit("split: partitions exceed row count");
    const std::size_t n_train = n - n_valid - n_test;
    if (spec.valid_fraction > 0 && n_valid == 0) throw InvalidSplit("split: validation fraction maps to zero rows");
    if (spec.test_fraction > 0 && n_test == 0) throw InvalidSplit("split: test fraction maps to zero rows");
    if (spec.train_fraction > 0 && n_train == 0) throw InvalidSplit("split: train fraction maps to zero rows");

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (spec.shuffle) {
        RngStream rng(spec.seed, make_stream_id(0x5, 0, 0));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }

    auto take = [&](std::size_t from, std::size_t len, const char* suffix) {
        std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(from),
                                       order.begin() + static_cast<std::ptrdiff_t>(from + len));
        return ds.subset(rows, ds.name + suffix);
    };
    return {take(0, n_train, "/train"), take(n_train, n_valid, "/valid"), take(n_train + n_valid, n_test, "/test")};
}

// ---------------------------------------------------------------------------

namespace {

Matrix scale_columns(const Matrix& m, const Vector& lo, const Vector& hi) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double span = hi[j] - lo[j];
        if (span > 0)
            out.col(j) = (m.col(j).array() - lo[j]) / span;
        else
            out.col(j).setConstant(0.5);
    }
    return out;
}

Matrix unscale_columns(const Matrix& m, const Vector& lo, const Vector& hi) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double span = hi[j] - lo[j];
        if (span > 0)
            out.col(j) = lo[j] + m.col(j).array() * span;
        else
            out.col(j).setConstant(lo[j]);
    }
    return out;
}

}  // namespace

Dataset MinMaxScaler::transform(const Dataset& ds) const {
    Dataset out{scale_columns(ds.inputs, input_min, input_max), scale_columns(ds.targets, target_min, target_max),
                ds.name};
    return out;
}

Dataset MinMaxScaler::inverse(const Dataset& ds) const {
    return {unscale_columns(ds.inputs, input_min, input_max), unscale_columns(ds.targets, target_min, target_max),
            ds.name};
}

Matrix MinMaxScaler::inverse_targets(const Matrix& t) const { return unscale_columns(t, target_min, target_max); }

std::pair<Dataset, MinMaxScaler> normalize_minmax(const Dataset& ds) {
    if (!ds.inputs.allFinite() || !ds.targets.allFinite()) throw InvalidInput("normalize_minmax: non-finite entry");
    if (ds.size() < 1) throw InvalidInput("normalize_minmax: empty dataset");
    MinMaxScaler s;
    s.input_min = ds.inputs.colwise().minCoeff().transpose();
    s.input_max = ds.inputs.colwise().maxCoeff().transpose();
    s.target_min = ds.targets.colwise().minCoeff().transpose();
    s.target_max = ds.targets.colwise().maxCoeff().transpose();
    return {s.transform(ds), s};
}

std::uint64_t fingerprint(const Dataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Matrix& m) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
        const std::size_t len = static_cast<std::size_t>(m.size()) * sizeof(double);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t shape[3] = {static_cast<std::uint64_t>(ds.inputs.rows()),
                                    static_cast<std::uint64_t>(ds.inputs.cols()),
                                    static_cast<std::uint64_t>(ds.targets.cols())};
    for (auto s : shape) {
        for (int b = 0; b < 8; ++b) {
            h ^= (s >> (8 * b)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    mix(ds.inputs);
    mix(ds.targets);
    return h;
}

}  // namespace hybridci
