// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "featsplat/feature_field.hpp"
#include "featsplat/io.hpp"

#include <gtest/gtest.h>

using namespace featsplat;
using namespace featsplat::testing;

namespace {

FieldConfig
tiny_field(int aux_dim = 0) {
    FieldConfig c;
    c.grid.levels = 2;
    c.grid.table_size = 64;
    c.grid.feat_dim = 2;
    c.grid.n_min = 2;
    c.grid.n_max = 6;
    c.grid.aux_dim = aux_dim;
    c.grid.bounds_min = Vec3(-1, -1, -1);
    c.grid.bounds_max = Vec3(1, 1, 1);
    c.head = {2, 8};
    c.clip_dim = 5;
    c.dino_dim = 3;
    return c;
}

FeatureField
tiny_random_field(std::uint64_t seed, int aux_dim = 0) {
    FeatureField f(tiny_field(aux_dim), seed);
    f.encoding().initialize(seed + 1, 0.8); // large enough that the heads see varied inputs
    return f;
}

std::vector<std::uint32_t>
iota_ids(std::size_t n) {
    std::vector<std::uint32_t> ids(n);
    for (std::size_t i = 0; i < n; ++i)
        ids[i] = std::uint32_t(i);
    return ids;
}

} // namespace

TEST(Mlp, BackwardMatchesCentralDifferences) {
    Mlp mlp(4, 3, {2, 6});
    mlp.initialize(12);
    Rng rng(1);
    const Eigen::MatrixXd x = random_matrix(4, 10, rng);
    const Eigen::MatrixXd up = random_matrix(3, 10, rng);
    MlpCache cache;
    mlp.forward(x, &cache);
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
    for (std::size_t i = 0; i < mlp.layer_count(); ++i) {
        dw.push_back(Eigen::MatrixXd::Zero(mlp.weight(i).rows(), mlp.weight(i).cols()));
        db.push_back(Eigen::VectorXd::Zero(mlp.bias(i).size()));
    }
    const Eigen::MatrixXd dx = mlp.backward(cache, up, dw, db);
    auto objective = [&](const Eigen::MatrixXd &in) { return (mlp.forward(in).array() * up.array()).sum(); };

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        for (Eigen::Index i = 0; i < mlp.weight(l).size(); ++i) {
            double &w = mlp.weight(l).data()[i];
            const double keep = w;
            w = keep + h;
            const double a = objective(x);
            w = keep - h;
            const double b = objective(x);
            w = keep;
            worst = std::max(worst, relative_error(dw[l].data()[i], (a - b) / (2 * h), 1e-6));
        }
        for (Eigen::Index i = 0; i < mlp.bias(l).size(); ++i) {
            double &w = mlp.bias(l)[i];
            const double keep = w;
            w = keep + h;
            const double a = objective(x);
            w = keep - h;
            const double b = objective(x);
            w = keep;
            worst = std::max(worst, relative_error(db[l][i], (a - b) / (2 * h), 1e-6));
        }
    }
    Eigen::MatrixXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = xp.data()[i];
        xp.data()[i] = keep + h;
        const double a = objective(xp);
        xp.data()[i] = keep - h;
        const double b = objective(xp);
        xp.data()[i] = keep;
        worst = std::max(worst, relative_error(dx.data()[i], (a - b) / (2 * h), 1e-6));
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(Mlp, ShapeAndCacheErrors) {
    Mlp mlp(3, 2, {1, 4});
    EXPECT_THROW(mlp.forward(Eigen::MatrixXd::Zero(4, 1)), Error);
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
    try {
        mlp.backward(MlpCache(), Eigen::MatrixXd::Zero(2, 1), dw, db);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Usage);
    }
}

TEST(FeatureField, SemanticOutputsAreUnitNorm) {
    const FeatureField f = tiny_random_field(3);
    Rng rng(2);
    const RowMatrix pos = random_matrix(50, 3, rng);
    const FieldForward fwd = f.forward(pos, iota_ids(50));
    ASSERT_TRUE(fwd.valid);
    EXPECT_EQ(fwd.semantic.cols(), 5);
    EXPECT_EQ(fwd.regularizer.cols(), 3);
    for (Eigen::Index i = 0; i < 50; ++i)
        EXPECT_NEAR(fwd.semantic.row(i).norm(), 1.0, 1e-12);
    // Single-point path agrees with the batch.
    const VecX q = f.encode(Vec3(pos.row(4).transpose()));
    EXPECT_LE((f.decode_semantic(q).transpose() - fwd.semantic.row(4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((f.decode_regularizer(q).transpose() - fwd.regularizer.row(4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FeatureField, ZeroVectorsNormalizeToFirstAxis) {
    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(3, 2);
    raw.col(1) << 3, 0, 4;
    VecX norms;
    const Eigen::MatrixXd n = normalize_columns(raw, &norms);
    EXPECT_EQ(n.col(0), Eigen::Vector3d(1, 0, 0));
    EXPECT_TRUE(n.col(1).isApprox(Eigen::Vector3d(0.6, 0, 0.8)));
    EXPECT_DOUBLE_EQ(norms[1], 5.0);
}

TEST(FeatureField, BackwardMatchesCentralDifferences) {
    FeatureField f = tiny_random_field(21);
    Rng rng(5);
    const RowMatrix pos = random_matrix(12, 3, rng);
    const RowMatrix us = random_matrix(12, 5, rng);
    const RowMatrix ur = random_matrix(12, 3, rng);
    const auto ids = iota_ids(12);
    const FieldGradients grads = f.backward(f.forward(pos, ids), us, ur);

    auto objective = [&] {
        const FieldForward fw = f.forward(pos, ids);
        return (fw.semantic.array() * us.array()).sum() + (fw.regularizer.array() * ur.array()).sum();
    };
    auto blocks = f.parameter_blocks();
    ASSERT_EQ(blocks.size(), grads.blocks.size());
    const double h = 1e-6;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        ASSERT_EQ(std::size_t(grads.blocks[b].size()), blocks[b].size());
        for (std::size_t i = 0; i < blocks[b].size(); i += 2) {
            const double keep = blocks[b][i];
            blocks[b][i] = keep + h;
            const double a = objective();
            blocks[b][i] = keep - h;
            const double c = objective();
            blocks[b][i] = keep;
            worst = std::max(worst, relative_error(grads.blocks[b][Eigen::Index(i)], (a - c) / (2 * h), 1e-5));
            ++checked;
        }
    }
    EXPECT_GT(checked, 100u);
    EXPECT_LE(worst, 1e-4);
}

TEST(FeatureField, EmptyUpstreamMeansZero) {
    const FeatureField f = tiny_random_field(4);
    Rng rng(9);
    const RowMatrix pos = random_matrix(6, 3, rng);
    const auto ids = iota_ids(6);
    const FieldForward fwd = f.forward(pos, ids);
    const RowMatrix ur = random_matrix(6, 3, rng);
    const FieldGradients only_reg = f.backward(fwd, RowMatrix(), ur);
    const FieldGradients explicit_zero = f.backward(fwd, RowMatrix::Zero(6, 5), ur);
    for (std::size_t b = 0; b < only_reg.blocks.size(); ++b)
        EXPECT_EQ(only_reg.blocks[b], explicit_zero.blocks[b]);
}

TEST(FeatureField, DimensionMismatchesAreConfigurationErrors) {
    const FeatureField f = tiny_random_field(6);
    try {
        f.decode_semantic(VecX::Zero(3));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Configuration);
    }
    Rng rng(1);
    const RowMatrix pos = random_matrix(4, 3, rng);
    const FieldForward fwd = f.forward(pos, iota_ids(4));
    try {
        f.backward(fwd, RowMatrix::Zero(4, 7), RowMatrix());
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Configuration);
    }
    FieldConfig bad = tiny_field();
    bad.clip_dim = 0;
    EXPECT_THROW(FeatureField(bad, 1), Error);
}

TEST(FeatureField, PerGaussianCodesReplaceTheGrid) {
    FieldConfig c = tiny_field();
    c.encoding = EncodingKind::PerGaussian;
    c.gaussian_count = 3;
    FeatureField f(c, 2);
    EXPECT_EQ(f.per_gaussian_codes().rows(), 3);
    const RowMatrix pos = RowMatrix::Zero(2, 3);
    const std::uint32_t ids[] = {0, 2};
    const FieldForward fwd = f.forward(pos, ids);
    EXPECT_TRUE(fwd.encoding.row(1).isApprox(f.per_gaussian_codes().row(2)));
    const std::uint32_t bad[] = {0, 3};
    EXPECT_THROW(f.forward(pos, bad), Error);
}

TEST(FeatureField, CheckpointRoundTripIsExactInFloat) {
    FeatureField f = tiny_random_field(8, 1);
    // Parameters are stored as f32, so round them first for an exact comparison.
    for (auto block : f.parameter_blocks())
        for (double &v : block)
            v = double(float(v));
    const auto dir = scratch_dir("checkpoint");
    write_checkpoint(f, dir / "f.fmgs");
    const FeatureField g = read_checkpoint(dir / "f.fmgs");
    EXPECT_EQ(g.config().grid.levels, 2);
    EXPECT_EQ(g.config().grid.aux_dim, 1);
    EXPECT_EQ(g.config().grid.bounds_min, f.config().grid.bounds_min);
    EXPECT_EQ(g.config().clip_dim, 5);
    const auto a = f.parameter_blocks();
    const auto b = g.parameter_blocks();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_TRUE(std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end()));
    const double aux[] = {0.3};
    EXPECT_EQ(f.decode_semantic(f.encode(Vec3(0.1, 0.2, -0.3), aux)),
              g.decode_semantic(g.encode(Vec3(0.1, 0.2, -0.3), aux)));
}

TEST(RenderField, MatchesManualBlend) {
    GaussianScene s = random_scene(40, 17);
    s.selection_mask[3] = false;
    FieldConfig c = tiny_field();
    c.grid.bounds_min = Vec3(-1.2, -1.2, 1.8);
    c.grid.bounds_max = Vec3(1.2, 1.2, 5.2);
    FeatureField f(c, 3);
    f.encoding().initialize(4, 0.8);
    const Camera cam = axis_camera(12, 10, 12);
    const FeatureMap m = render_field(s, f, cam, Head::Semantic);

    RowMatrix rows = RowMatrix::Zero(40, 5);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s.selection_mask[i])
            rows.row(Eigen::Index(i)) = f.decode_semantic(f.encode(s.gaussians[i].position())).transpose();
    const FeatureMap expected = render_features(rasterize(s, cam, {RasterMode::Tiled, true}), rows);
    EXPECT_LE((m.values - expected.values).cwiseAbs().maxCoeff(), 1e-9);
}
