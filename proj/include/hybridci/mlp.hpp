#pragma once

#include <string_view>
#include <vector>

#include "hybridci/dataset.hpp"
#include "hybridci/numeric.hpp"

namespace hybridci {

enum class TransferFn { Sigmoid, Tanh, Gaussian, Linear };

std::string_view to_string(TransferFn f);
TransferFn transfer_from_string(std::string_view s);

template <class Scalar>
Scalar apply_transfer(TransferFn f, Scalar z) {
    switch (f) {
        case TransferFn::Sigmoid: return Scalar(1) / (Scalar(1) + std::exp(-z));
        case TransferFn::Tanh: return std::tanh(z);
        case TransferFn::Gaussian: return std::exp(-z * z);
        case TransferFn::Linear: return z;
    }
    return z;
}

/// d f / d z, given the pre-activation z and the activation a = f(z).
template <class Scalar>
Scalar transfer_derivative(TransferFn f, Scalar z, Scalar a) {
    switch (f) {
        case TransferFn::Sigmoid: return a * (Scalar(1) - a);
        case TransferFn::Tanh: return Scalar(1) - a * a;
        case TransferFn::Gaussian: return Scalar(-2) * z * a;
        case TransferFn::Linear: return Scalar(1);
    }
    return Scalar(1);
}

/// Layered feedforward network with a linear output layer.
///
/// weights[l] maps layer l to layer l + 1 and has shape
/// layer_sizes[l + 1] x (layer_sizes[l] + 1); the last column holds the
/// biases. transfer[l] is the activation of hidden layer l + 1.
///
/// Flattened parameter order (gradient, jacobian, genomes): layer-major,
/// then row-major inside each weight matrix, so each neuron contributes its
/// incoming weights followed by its bias.
struct MLPNetwork {
    std::vector<Eigen::Index> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<TransferFn> transfer;

    static MLPNetwork zeros(std::vector<Eigen::Index> sizes, std::vector<TransferFn> hidden_transfer);
    /// Weights drawn uniformly from [-scale, scale].
    static MLPNetwork random(std::vector<Eigen::Index> sizes, std::vector<TransferFn> hidden_transfer,
                             RngStream& rng, double scale = 0.5);

    Eigen::Index input_width() const { return layer_sizes.front(); }
    Eigen::Index output_width() const { return layer_sizes.back(); }
    std::size_t hidden_layers() const { return layer_sizes.size() - 2; }
    Eigen::Index parameter_count() const;

    void validate() const;

    Vector parameters() const;
    /// Copy of this network with the flattened parameters replaced.
    MLPNetwork with_parameters(const Vector& params) const;
};

Vector forward(const MLPNetwork& net, const Vector& x);
/// Row i of the result is forward(net, inputs.row(i)).
Matrix forward_batch(const MLPNetwork& net, const Matrix& inputs);

/// Residual vector y - t, ordered row-major over (sample, output).
Vector residuals(const MLPNetwork& net, const Dataset& ds);

/// Sum of squared residuals over every sample and output.
double sse(const MLPNetwork& net, const Dataset& ds);

/// Backpropagated d sse / d w in the flattened parameter order.
Vector gradient(const MLPNetwork& net, const Dataset& ds);

/// d residual_r / d w_c, shape (n m) x parameter_count.
Matrix jacobian(const MLPNetwork& net, const Dataset& ds);

}  // namespace hybridci
