// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/mlp.hpp"
#include "featsplat/random.hpp"

#include <cmath>

namespace featsplat {

Mlp::Mlp(int in_dim, int out_dim, const MlpConfig &config) : mInDim(in_dim), mOutDim(out_dim) {
    require(in_dim >= 1 && out_dim >= 1, ErrorKind::Configuration, "mlp dimensions must be positive");
    require(config.hidden_layers >= 0 && (config.hidden_layers == 0 || config.width >= 1), ErrorKind::Configuration,
            "invalid mlp hidden configuration");
    int prev = in_dim;
    for (int i = 0; i < config.hidden_layers; ++i) {
        mWeights.emplace_back(Eigen::MatrixXd::Zero(config.width, prev));
        mBiases.emplace_back(Eigen::VectorXd::Zero(config.width));
        prev = config.width;
    }
    mWeights.emplace_back(Eigen::MatrixXd::Zero(out_dim, prev));
    mBiases.emplace_back(Eigen::VectorXd::Zero(out_dim));
}

void
Mlp::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < mWeights.size(); ++i) {
        const double bound = 1.0 / std::sqrt(double(mWeights[i].cols()));
        for (Eigen::Index k = 0; k < mWeights[i].size(); ++k)
            mWeights[i].data()[k] = rng.uniform(-bound, bound);
        for (Eigen::Index k = 0; k < mBiases[i].size(); ++k)
            mBiases[i][k] = rng.uniform(-bound, bound);
    }
}

Eigen::MatrixXd
Mlp::forward(const Eigen::MatrixXd &x, MlpCache *cache) const {
    require(x.rows() == mInDim, ErrorKind::Configuration,
            "mlp input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(mInDim));
    if (cache)
        cache->inputs.clear();
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < mWeights.size(); ++i) {
        if (cache)
            cache->inputs.push_back(h);
        Eigen::MatrixXd z = mWeights[i] * h;
        z.colwise() += mBiases[i];
        if (i + 1 < mWeights.size())
            z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

Eigen::MatrixXd
Mlp::backward(const MlpCache &cache, const Eigen::MatrixXd &d_out, std::vector<Eigen::MatrixXd> &d_weights,
              std::vector<Eigen::VectorXd> &d_biases) const {
    require(cache.inputs.size() == mWeights.size(), ErrorKind::Usage, "mlp backward needs the forward cache");
    require(d_out.rows() == mOutDim && d_out.cols() == cache.inputs.front().cols(), ErrorKind::Configuration,
            "mlp upstream gradient shape mismatch");
    if (d_weights.size() != mWeights.size()) {
        d_weights.clear();
        d_biases.clear();
        for (std::size_t i = 0; i < mWeights.size(); ++i) {
            d_weights.emplace_back(Eigen::MatrixXd::Zero(mWeights[i].rows(), mWeights[i].cols()));
            d_biases.emplace_back(Eigen::VectorXd::Zero(mBiases[i].size()));
        }
    }
    Eigen::MatrixXd g = d_out;
    for (std::size_t k = mWeights.size(); k-- > 0;) {
        const Eigen::MatrixXd &input = cache.inputs[k];
        d_weights[k].noalias() += g * input.transpose();
        d_biases[k].noalias() += g.rowwise().sum();
        g = mWeights[k].transpose() * g;
        // The input of layer k > 0 is a ReLU output; its mask is input > 0.
        if (k > 0)
            g = g.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
    return g;
}

} // namespace featsplat
