// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"
#include "featsplat/hash_grid.hpp"
#include "featsplat/mlp.hpp"
#include "featsplat/render.hpp"

#include <span>
#include <vector>

namespace featsplat {

enum class EncodingKind {
    HashGrid,
    PerGaussian, // ablation: one trainable L*D code per Gaussian instead of the hash grid
};

struct FieldConfig {
    HashGridConfig grid;
    MlpConfig head;
    int clip_dim = 512;
    int dino_dim = 384;
    EncodingKind encoding = EncodingKind::HashGrid;
    std::size_t gaussian_count = 0; // only used by PerGaussian

    void validate() const;
};

enum class Head { Semantic, Regularizer };

/// Cached intermediate values of one batched field evaluation.
struct FieldForward {
    RowMatrix encoding; // N x (L*D + K)
    EncodingCache encoding_cache;
    std::vector<std::uint32_t> ids;
    MlpCache semantic_cache;
    MlpCache regularizer_cache;
    Eigen::MatrixXd semantic_raw; // clip_dim x N, before normalization
    VecX semantic_norm;
    RowMatrix semantic;    // N x clip_dim, unit rows
    RowMatrix regularizer; // N x dino_dim
    bool valid = false;
};

/// Trainable parameter gradients, one block per entry of parameter_blocks().
struct FieldGradients {
    std::vector<VecX> blocks;

    double squared_norm() const;
};

/// Hash-grid (or per-Gaussian) encoding shared by a unit-norm semantic head and an
/// unnormalized regularizer head.
class FeatureField {
public:
    FeatureField() = default;
    FeatureField(const FieldConfig &config, std::uint64_t seed);

    const FieldConfig &config() const { return mConfig; }
    int encoding_dim() const { return mConfig.grid.encoding_dim(); }

    HashEncoding &encoding() { return mEncoding; }
    const HashEncoding &encoding() const { return mEncoding; }
    RowMatrix &per_gaussian_codes() { return mCodes; }
    const RowMatrix &per_gaussian_codes() const { return mCodes; }
    Mlp &semantic_head() { return mSemantic; }
    const Mlp &semantic_head() const { return mSemantic; }
    Mlp &regularizer_head() { return mRegularizer; }
    const Mlp &regularizer_head() const { return mRegularizer; }

    /// Hash encoding of one point (HashGrid mode only).
    VecX encode(const Vec3 &x, std::span<const double> aux = {}) const;
    VecX decode_semantic(const VecX &q) const;
    VecX decode_regularizer(const VecX &q) const;

    /// Evaluates both heads for a batch. positions is N x 3; ids index Gaussians
    /// (needed by PerGaussian mode); aux is N x aux_dim or empty.
    FieldForward forward(const RowMatrix &positions, std::span<const std::uint32_t> ids,
                         const RowMatrix &aux = RowMatrix()) const;

    /// Chain rule through both heads and the encoding. Either upstream may be
    /// empty (0 rows) to mean zero.
    FieldGradients backward(const FieldForward &forward, const RowMatrix &d_semantic,
                            const RowMatrix &d_regularizer) const;

    std::vector<std::span<double>> parameter_blocks();
    std::vector<std::span<const double>> parameter_blocks() const;
    FieldGradients zero_gradients() const;
    std::size_t parameter_count() const;

private:
    FieldConfig mConfig;
    HashEncoding mEncoding;
    RowMatrix mCodes;
    Mlp mSemantic;
    Mlp mRegularizer;
};

/// Unit-normalizes the columns of `raw`; columns with norm below 1e-12 become the
/// first standard basis vector.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd &raw, VecX *norms = nullptr);

/// Per-Gaussian head outputs for the selected Gaussians (zero rows elsewhere), then
/// blended into a feature map for `cam`.
FeatureMap render_field(const GaussianScene &scene, const FeatureField &field, const Camera &cam, Head head,
                        const RowMatrix &aux = RowMatrix());

} // namespace featsplat
