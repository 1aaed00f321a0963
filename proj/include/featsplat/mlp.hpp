// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"

#include <Eigen/Core>

#include <vector>

namespace featsplat {

struct MlpConfig {
    int hidden_layers = 3;
    int width = 256;
};

/// Activations kept from a forward pass (column per sample).
struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs; // input to each linear layer
    bool valid() const { return !inputs.empty(); }
};

/// ReLU perceptron: hidden_layers x (linear + ReLU), then a linear output layer.
class Mlp {
public:
    Mlp() = default;
    Mlp(int in_dim, int out_dim, const MlpConfig &config);

    int in_dim() const { return mInDim; }
    int out_dim() const { return mOutDim; }
    std::size_t layer_count() const { return mWeights.size(); }

    Eigen::MatrixXd &weight(std::size_t i) { return mWeights[i]; }
    const Eigen::MatrixXd &weight(std::size_t i) const { return mWeights[i]; }
    Eigen::VectorXd &bias(std::size_t i) { return mBiases[i]; }
    const Eigen::VectorXd &bias(std::size_t i) const { return mBiases[i]; }

    /// Uniform(+-1/sqrt(fan_in)) for weights and biases.
    void initialize(std::uint64_t seed);

    /// x is in_dim x N; returns out_dim x N.
    Eigen::MatrixXd forward(const Eigen::MatrixXd &x, MlpCache *cache = nullptr) const;

    /// Accumulates parameter gradients (same shapes as weights/biases) and returns
    /// d(loss)/d(input).
    Eigen::MatrixXd backward(const MlpCache &cache, const Eigen::MatrixXd &d_out, std::vector<Eigen::MatrixXd> &d_weights,
                             std::vector<Eigen::VectorXd> &d_biases) const;

private:
    int mInDim = 0;
    int mOutDim = 0;
    std::vector<Eigen::MatrixXd> mWeights;
    std::vector<Eigen::VectorXd> mBiases;
};

} // namespace featsplat
