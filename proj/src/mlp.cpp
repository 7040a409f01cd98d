#include "hybridci/mlp.hpp"

#include <string>

namespace hybridci {

std::string_view to_string(TransferFn f) {
    switch (f) {
        case TransferFn::Sigmoid: return "sigmoid";
        case TransferFn::Tanh: return "tanh";
        case TransferFn::Gaussian: return "gaussian";
        case TransferFn::Linear: return "linear";
    }
    return "linear";
}

TransferFn transfer_from_string(std::string_view s) {
    if (s == "sigmoid") return TransferFn::Sigmoid;
    if (s == "tanh") return TransferFn::Tanh;
    if (s == "gaussian") return TransferFn::Gaussian;
    if (s == "linear") return TransferFn::Linear;
    throw InvalidInput("unknown transfer function '" + std::string(s) + "'");
}

MLPNetwork MLPNetwork::zeros(std::vector<Eigen::Index> sizes, std::vector<TransferFn> hidden_transfer) {
    MLPNetwork net;
    net.layer_sizes = std::move(sizes);
    net.transfer = std::move(hidden_transfer);
    if (net.layer_sizes.size() < 2) throw InvalidInput("MLPNetwork: need at least input and output layers");
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l)
        net.weights.push_back(Matrix::Zero(net.layer_sizes[l + 1], net.layer_sizes[l] + 1));
    net.validate();
    return net;
}

MLPNetwork MLPNetwork::random(std::vector<Eigen::Index> sizes, std::vector<TransferFn> hidden_transfer,
                              RngStream& rng, double scale) {
    MLPNetwork net = zeros(std::move(sizes), std::move(hidden_transfer));
    for (auto& w : net.weights)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-scale, scale);
    return net;
}

Eigen::Index MLPNetwork::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& w : weights) n += w.size();
    return n;
}

void MLPNetwork::validate() const {
    if (layer_sizes.size() < 2) throw InvalidInput("MLPNetwork: need at least input and output layers");
    for (auto s : layer_sizes)
        if (s < 1) throw InvalidInput("MLPNetwork: every layer needs at least one unit");
    if (weights.size() + 1 != layer_sizes.size()) throw InvalidInput("MLPNetwork: weight count mismatch");
    if (transfer.size() != layer_sizes.size() - 2)
        throw InvalidInput("MLPNetwork: need one transfer function per hidden layer");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] + 1)
            throw InvalidInput("MLPNetwork: weight shape mismatch at layer " + std::to_string(l));
        if (!weights[l].allFinite()) throw InvalidInput("MLPNetwork: non-finite weight");
    }
}

Vector MLPNetwork::parameters() const {
    Vector p(parameter_count());
    Eigen::Index k = 0;
    for (const auto& w : weights)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) p[k++] = w(r, c);
    return p;
}

MLPNetwork MLPNetwork::with_parameters(const Vector& params) const {
    if (params.size() != parameter_count())
        throw InvalidInput("MLPNetwork::with_parameters: expected " + std::to_string(parameter_count()) +
                           " parameters, got " + std::to_string(params.size()));
    MLPNetwork out = *this;
    Eigen::Index k = 0;
    for (auto& w : out.weights)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = params[k++];
    return out;
}

namespace {

// Pre-activations and activations of every layer for a batch.
struct BatchTrace {
    std::vector<Matrix> pre;   // pre[l]: n x size[l+1]
    std::vector<Matrix> act;   // act[0] = inputs, act[l+1] = f(pre[l])
};

BatchTrace trace_batch(const MLPNetwork& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_width())
        throw InvalidInput("forward: input width " + std::to_string(inputs.cols()) + " != network input width " +
                           std::to_string(net.input_width()));
    BatchTrace t;
    t.act.push_back(inputs);
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = net.weights[l];
        const Eigen::Index in = w.cols() - 1;
        Matrix z = t.act.back() * w.leftCols(in).transpose();
        z.rowwise() += w.col(in).transpose();
        Matrix a = z;
        if (l + 1 < layers) {
            const TransferFn f = net.transfer[l];
            a = z.unaryExpr([f](double v) { return apply_transfer(f, v); });
        }
        t.pre.push_back(std::move(z));
        t.act.push_back(std::move(a));
    }
    return t;
}

void check_dataset(const MLPNetwork& net, const Dataset& ds) {
    if (ds.inputs.cols() != net.input_width() || ds.targets.cols() != net.output_width())
        throw InvalidInput("dataset '" + ds.name + "' shape does not match network");
    if (ds.inputs.rows() != ds.targets.rows()) throw InvalidInput("dataset '" + ds.name + "': row mismatch");
}

// Backpropagates output-layer deltas (n x m) and accumulates into per-layer
// callbacks: visit(l, delta_l) where delta_l is n x size[l+1].
template <class Visit>
void backprop(const MLPNetwork& net, const BatchTrace& t, Matrix delta, Visit&& visit) {
    for (std::size_t l = net.weights.size(); l-- > 0;) {
        visit(l, delta);
        if (l == 0) break;
        const Matrix& w = net.weights[l];
        Matrix prev = delta * w.leftCols(w.cols() - 1);
        const TransferFn f = net.transfer[l - 1];
        const Matrix& z = t.pre[l - 1];
        const Matrix& a = t.act[l];
        for (Eigen::Index i = 0; i < prev.rows(); ++i)
            for (Eigen::Index j = 0; j < prev.cols(); ++j) prev(i, j) *= transfer_derivative(f, z(i, j), a(i, j));
        delta = std::move(prev);
    }
}

std::vector<Eigen::Index> layer_offsets(const MLPNetwork& net) {
    std::vector<Eigen::Index> off;
    Eigen::Index k = 0;
    for (const auto& w : net.weights) {
        off.push_back(k);
        k += w.size();
    }
    return off;
}

}  // namespace

Vector forward(const MLPNetwork& net, const Vector& x) {
    if (x.size() != net.input_width())
        throw InvalidInput("forward: input length " + std::to_string(x.size()) + " != network input width " +
                           std::to_string(net.input_width()));
    Vector a = x;
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = net.weights[l];
        Vector z = w.leftCols(w.cols() - 1) * a + w.col(w.cols() - 1);
        if (l + 1 < layers) {
            const TransferFn f = net.transfer[l];
            z = z.unaryExpr([f](double v) { return apply_transfer(f, v); });
        }
        a = std::move(z);
    }
    return a;
}

Matrix forward_batch(const MLPNetwork& net, const Matrix& inputs) { return trace_batch(net, inputs).act.back(); }

Vector residuals(const MLPNetwork& net, const Dataset& ds) {
    check_dataset(net, ds);
    const Matrix r = forward_batch(net, ds.inputs) - ds.targets;
    // Row-major over (sample, output).
    Vector out(r.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        for (Eigen::Index o = 0; o < r.cols(); ++o) out[k++] = r(i, o);
    return out;
}

double sse(const MLPNetwork& net, const Dataset& ds) {
    check_dataset(net, ds);
    return (forward_batch(net, ds.inputs) - ds.targets).squaredNorm();
}

Vector gradient(const MLPNetwork& net, const Dataset& ds) {
    check_dataset(net, ds);
    const BatchTrace t = trace_batch(net, ds.inputs);
    const auto offsets = layer_offsets(net);
    Vector g(net.parameter_count());
    backprop(net, t, 2.0 * (t.act.back() - ds.targets), [&](std::size_t l, const Matrix& delta) {
        const Matrix& a = t.act[l];
        const Eigen::Index in = a.cols();
        const Matrix gw = delta.transpose() * a;       // out x in
        const Vector gb = delta.colwise().sum().transpose();
        Eigen::Index k = offsets[l];
        for (Eigen::Index r = 0; r < gw.rows(); ++r) {
            for (Eigen::Index c = 0; c < in; ++c) g[k++] = gw(r, c);
            g[k++] = gb[r];
        }
    });
    return g;
}

Matrix jacobian(const MLPNetwork& net, const Dataset& ds) {
    check_dataset(net, ds);
    const BatchTrace t = trace_batch(net, ds.inputs);
    const auto offsets = layer_offsets(net);
    const Eigen::Index n = ds.size();
    const Eigen::Index m = net.output_width();
    Matrix jac(n * m, net.parameter_count());
    for (Eigen::Index o = 0; o < m; ++o) {
        Matrix seed = Matrix::Zero(n, m);
        seed.col(o).setOnes();
        backprop(net, t, std::move(seed), [&](std::size_t l, const Matrix& delta) {
            const Matrix& a = t.act[l];
            const Eigen::Index in = a.cols();
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Index k = offsets[l];
                auto row = jac.row(i * m + o);
                for (Eigen::Index r = 0; r < delta.cols(); ++r) {
                    const double d = delta(i, r);
                    for (Eigen::Index c = 0; c < in; ++c) row[k++] = d * a(i, c);
                    row[k++] = d;
                }
            }
        });
    }
    return jac;
}

}  // namespace hybridci
