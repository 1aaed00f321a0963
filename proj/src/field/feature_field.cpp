// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/feature_field.hpp"
#include "featsplat/random.hpp"

#include <cmath>

namespace featsplat {

namespace {

constexpr double kNormGuard = 1e-12;

void
push_mlp_blocks(Mlp &mlp, std::vector<std::span<double>> &out) {
    for (std::size_t i = 0; i < mlp.layer_count(); ++i) {
        out.emplace_back(mlp.weight(i).data(), std::size_t(mlp.weight(i).size()));
        out.emplace_back(mlp.bias(i).data(), std::size_t(mlp.bias(i).size()));
    }
}

void
append_mlp_grads(const std::vector<Eigen::MatrixXd> &dw, const std::vector<Eigen::VectorXd> &db,
                 std::vector<VecX> &blocks, std::size_t &at) {
    for (std::size_t i = 0; i < dw.size(); ++i) {
        blocks[at++] = Eigen::Map<const VecX>(dw[i].data(), dw[i].size());
        blocks[at++] = db[i];
    }
}

} // namespace

void
FieldConfig::validate() const {
    grid.validate();
    require(clip_dim >= 1 && dino_dim >= 1, ErrorKind::Configuration, "head output dimensions must be positive");
    if (encoding == EncodingKind::PerGaussian)
        require(gaussian_count >= 1, ErrorKind::Configuration, "per-gaussian encoding needs the gaussian count");
}

double
FieldGradients::squared_norm() const {
    double s = 0.0;
    for (const auto &b : blocks)
        s += b.squaredNorm();
    return s;
}

Eigen::MatrixXd
normalize_columns(const Eigen::MatrixXd &raw, VecX *norms) {
    Eigen::MatrixXd out(raw.rows(), raw.cols());
    if (norms)
        norms->resize(raw.cols());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        const double n = raw.col(c).norm();
        if (norms)
            (*norms)[c] = n;
        if (n < kNormGuard) {
            out.col(c).setZero();
            out(0, c) = 1.0;
        } else {
            out.col(c) = raw.col(c) / n;
        }
    }
    return out;
}

FeatureField::FeatureField(const FieldConfig &config, std::uint64_t seed) : mConfig(config) {
    config.validate();
    const int enc_dim = config.grid.encoding_dim();
    if (config.encoding == EncodingKind::HashGrid) {
        mEncoding = HashEncoding(config.grid);
        mEncoding.initialize(seed);
    } else {
        mCodes = RowMatrix::Zero(Eigen::Index(config.gaussian_count), config.grid.levels * config.grid.feat_dim);
        Rng rng(seed);
        for (Eigen::Index i = 0; i < mCodes.size(); ++i)
            mCodes.data()[i] = rng.uniform(-1e-4, 1e-4);
    }
    mSemantic = Mlp(enc_dim, config.clip_dim, config.head);
    mRegularizer = Mlp(enc_dim, config.dino_dim, config.head);
    mSemantic.initialize(seed ^ 0x9e3779b97f4a7c15ull);
    mRegularizer.initialize(seed ^ 0xc2b2ae3d27d4eb4full);
}

VecX
FeatureField::encode(const Vec3 &x, std::span<const double> aux) const {
    require(mConfig.encoding == EncodingKind::HashGrid, ErrorKind::Usage, "point encoding needs the hash grid");
    return mEncoding.encode(x, aux);
}

VecX
FeatureField::decode_semantic(const VecX &q) const {
    require(q.size() == encoding_dim(), ErrorKind::Configuration, "encoding dimension mismatch");
    return normalize_columns(mSemantic.forward(q));
}

VecX
FeatureField::decode_regularizer(const VecX &q) const {
    require(q.size() == encoding_dim(), ErrorKind::Configuration, "encoding dimension mismatch");
    return mRegularizer.forward(q);
}

FieldForward
FeatureField::forward(const RowMatrix &positions, std::span<const std::uint32_t> ids, const RowMatrix &aux) const {
    FieldForward f;
    const Eigen::Index n = positions.rows();
    f.ids.assign(ids.begin(), ids.end());
    if (mConfig.encoding == EncodingKind::HashGrid) {
        f.encoding = mEncoding.encode(positions, aux, &f.encoding_cache);
    } else {
        require(std::size_t(n) == ids.size(), ErrorKind::Configuration, "per-gaussian encoding needs one id per row");
        const int lk = mConfig.grid.levels * mConfig.grid.feat_dim;
        f.encoding = RowMatrix::Zero(n, encoding_dim());
        for (Eigen::Index i = 0; i < n; ++i) {
            require(ids[std::size_t(i)] < mCodes.rows(), ErrorKind::Index, "gaussian id out of range");
            f.encoding.row(i).head(lk) = mCodes.row(ids[std::size_t(i)]);
        }
        if (mConfig.grid.aux_dim > 0) {
            require(aux.rows() == n && aux.cols() == mConfig.grid.aux_dim, ErrorKind::Configuration,
                    "aux input must be N x aux_dim");
            f.encoding.rightCols(mConfig.grid.aux_dim) = aux;
        }
    }
    const Eigen::MatrixXd q = f.encoding.transpose();
    f.semantic_raw = mSemantic.forward(q, &f.semantic_cache);
    f.semantic = normalize_columns(f.semantic_raw, &f.semantic_norm).transpose();
    f.regularizer = mRegularizer.forward(q, &f.regularizer_cache).transpose();
    f.valid = true;
    return f;
}

FieldGradients
FeatureField::backward(const FieldForward &fwd, const RowMatrix &d_semantic, const RowMatrix &d_regularizer) const {
    require(fwd.valid, ErrorKind::Usage, "field backward needs a cached forward pass");
    const Eigen::Index n = fwd.encoding.rows();
    FieldGradients grads = zero_gradients();
    Eigen::MatrixXd d_q = Eigen::MatrixXd::Zero(encoding_dim(), n);

    const std::size_t enc_blocks = 1;
    std::size_t at = enc_blocks;
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;

    if (d_semantic.rows() > 0) {
        require(d_semantic.rows() == n && d_semantic.cols() == mConfig.clip_dim, ErrorKind::Configuration,
                "semantic gradient shape mismatch");
        // Through f = h / |h|: df/dh g = (g - f (f . g)) / |h|.
        Eigen::MatrixXd d_raw(mConfig.clip_dim, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double norm = fwd.semantic_norm[i];
            if (norm < kNormGuard) {
                d_raw.col(i).setZero();
                continue;
            }
            const VecX f = fwd.semantic.row(i).transpose();
            const VecX g = d_semantic.row(i).transpose();
            d_raw.col(i) = (g - f * f.dot(g)) / norm;
        }
        d_q += mSemantic.backward(fwd.semantic_cache, d_raw, dw, db);
        append_mlp_grads(dw, db, grads.blocks, at);
    } else {
        at += 2 * mSemantic.layer_count();
    }

    if (d_regularizer.rows() > 0) {
        require(d_regularizer.rows() == n && d_regularizer.cols() == mConfig.dino_dim, ErrorKind::Configuration,
                "regularizer gradient shape mismatch");
        dw.clear();
        db.clear();
        d_q += mRegularizer.backward(fwd.regularizer_cache, d_regularizer.transpose(), dw, db);
        append_mlp_grads(dw, db, grads.blocks, at);
    }

    const RowMatrix d_enc = d_q.transpose();
    if (mConfig.encoding == EncodingKind::HashGrid) {
        mEncoding.backward(fwd.encoding_cache, d_enc, std::span<double>(grads.blocks[0].data(), grads.blocks[0].size()));
    } else {
        const int lk = mConfig.grid.levels * mConfig.grid.feat_dim;
        Eigen::Map<RowMatrix> codes(grads.blocks[0].data(), mCodes.rows(), mCodes.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            codes.row(fwd.ids[std::size_t(i)]) += d_enc.row(i).head(lk);
    }
    return grads;
}

std::vector<std::span<double>>
FeatureField::parameter_blocks() {
    std::vector<std::span<double>> out;
    if (mConfig.encoding == EncodingKind::HashGrid)
        out.push_back(mEncoding.table());
    else
        out.emplace_back(mCodes.data(), std::size_t(mCodes.size()));
    push_mlp_blocks(mSemantic, out);
    push_mlp_blocks(mRegularizer, out);
    return out;
}

std::vector<std::span<const double>>
FeatureField::parameter_blocks() const {
    auto blocks = const_cast<FeatureField *>(this)->parameter_blocks();
    return {blocks.begin(), blocks.end()};
}

FieldGradients
FeatureField::zero_gradients() const {
    FieldGradients g;
    for (auto block : parameter_blocks())
        g.blocks.push_back(VecX::Zero(Eigen::Index(block.size())));
    return g;
}

std::size_t
FeatureField::parameter_count() const {
    std::size_t n = 0;
    for (auto block : parameter_blocks())
        n += block.size();
    return n;
}

FeatureMap
render_field(const GaussianScene &scene, const FeatureField &field, const Camera &cam, Head head, const RowMatrix &aux) {
    scene.validate();
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (scene.selection_mask[i])
            ids.push_back(std::uint32_t(i));
    RowMatrix positions(Eigen::Index(ids.size()), 3);
    for (std::size_t k = 0; k < ids.size(); ++k)
        positions.row(Eigen::Index(k)) = scene.gaussians[ids[k]].position().transpose();
    RowMatrix aux_rows;
    if (field.config().grid.aux_dim > 0) {
        require(aux.rows() == 1 && aux.cols() == field.config().grid.aux_dim, ErrorKind::Configuration,
                "render_field takes a single aux row shared by all Gaussians");
        aux_rows = aux.replicate(Eigen::Index(ids.size()), 1);
    }
    const FieldForward fwd = field.forward(positions, ids, aux_rows);
    const RowMatrix &rows = head == Head::Semantic ? fwd.semantic : fwd.regularizer;
    RowMatrix per_gaussian = RowMatrix::Zero(Eigen::Index(scene.size()), rows.cols());
    for (std::size_t k = 0; k < ids.size(); ++k)
        per_gaussian.row(ids[k]) = rows.row(Eigen::Index(k));
    const BlendCache cache = rasterize(scene, cam, {RasterMode::Tiled, true});
    return render_features(cache, per_gaussian);
}

} // namespace featsplat
