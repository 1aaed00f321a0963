// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "featsplat/query.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace featsplat;
using namespace featsplat::testing;

namespace {

VecX
axis(int dim, int k) {
    VecX v = VecX::Zero(dim);
    v[k] = 1.0;
    return v;
}

FeatureMap
single_pixel(const VecX &v) {
    FeatureMap m(1, 1, int(v.size()));
    m.values.row(0) = v.transpose();
    return m;
}

VecX
random_unit(int dim, Rng &rng) {
    VecX v(dim);
    for (int i = 0; i < dim; ++i)
        v[i] = rng.normal();
    return v.normalized();
}

} // namespace

TEST(Relevancy, MatchingQueryAgainstOrthogonalCanonical) {
    const RelevancyMap r = relevancy(single_pixel(axis(4, 0)), axis(4, 0), {axis(4, 1)});
    EXPECT_NEAR(r.values[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);
}

TEST(Relevancy, MinimumOverCanonicals) {
    VecX f = VecX::Zero(3);
    f << 0.6, 0.8, 0.0;
    const VecX q = axis(3, 0);
    const RelevancyMap one = relevancy(single_pixel(f), q, {axis(3, 2)});
    const RelevancyMap two = relevancy(single_pixel(f), q, {axis(3, 2), axis(3, 1)});
    EXPECT_NEAR(one.values[0], 1.0 / (1.0 + std::exp(0.0 - 0.6)), 1e-12);
    EXPECT_NEAR(two.values[0], 1.0 / (1.0 + std::exp(0.8 - 0.6)), 1e-12);
    EXPECT_LT(two.values[0], one.values[0]);
}

TEST(Relevancy, AtMostHalfWhenQueryIsACanonical) {
    Rng rng(3);
    std::vector<VecX> canon;
    for (int i = 0; i < 4; ++i)
        canon.push_back(random_unit(8, rng));
    FeatureMap m(5, 4, 8);
    m.values = random_matrix(20, 8, rng);
    const RelevancyMap r = relevancy(m, canon[2], canon);
    for (double v : r.values)
        EXPECT_LE(v, 0.5 + 1e-15);
}

TEST(Relevancy, InvariantToCanonicalOrderAndPixelScale) {
    Rng rng(4);
    std::vector<VecX> canon;
    for (int i = 0; i < 4; ++i)
        canon.push_back(random_unit(6, rng));
    const VecX q = random_unit(6, rng);
    FeatureMap m(4, 3, 6);
    m.values = random_matrix(12, 6, rng);
    const RelevancyMap a = relevancy(m, q, canon);
    std::vector<VecX> shuffled = {canon[3], canon[1], canon[0], canon[2]};
    FeatureMap scaled = m;
    for (Eigen::Index i = 0; i < scaled.values.rows(); ++i)
        scaled.values.row(i) *= 0.1 + i;
    const RelevancyMap b = relevancy(scaled, q, shuffled);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        EXPECT_GT(a.values[i], 0.0);
        EXPECT_LT(a.values[i], 1.0);
        EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
    }
}

TEST(Relevancy, NeedsCanonicalsAndMatchingDims) {
    try {
        relevancy(single_pixel(axis(3, 0)), axis(3, 0), {});
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Configuration);
    }
    EXPECT_THROW(relevancy(single_pixel(axis(3, 0)), axis(4, 0), {axis(3, 1)}), Error);
}

TEST(QuerySetChecks, DimensionAndNorm) {
    QuerySet s;
    s.queries = {{"mug", axis(4, 0)}};
    s.canonicals = {{"object", axis(4, 1)}};
    EXPECT_NO_THROW(s.validate(4));
    EXPECT_THROW(s.validate(5), Error);
    s.queries[0].vector *= 2.0;
    EXPECT_THROW(s.validate(4), Error);
}

TEST(Detection, AllEqualMapPicksOrigin) {
    RelevancyMap m;
    m.width = 5;
    m.height = 4;
    m.values.assign(20, 0.3);
    const Detection inside = detect(m, {0, 0, 1, 1});
    EXPECT_TRUE(inside.success);
    EXPECT_EQ(inside.x, 0);
    EXPECT_EQ(inside.y, 0);
    EXPECT_FALSE(detect(m, {2, 2, 4, 3}).success);
}

TEST(Detection, PlantedPeak) {
    RelevancyMap m;
    m.width = 6;
    m.height = 5;
    m.values.assign(30, 0.1);
    m.values[3 * 6 + 4] = 0.9;
    const Detection d = detect(m, {3, 2, 5, 4});
    EXPECT_TRUE(d.success);
    EXPECT_EQ(d.x, 4);
    EXPECT_EQ(d.y, 3);
    EXPECT_FALSE(detect(m, {0, 0, 2, 2}).success);
}

TEST(Detection, BadBoxesAreAnnotationErrors) {
    RelevancyMap m;
    m.width = 4;
    m.height = 4;
    m.values.assign(16, 0.0);
    for (const Box &b : {Box{2, 0, 2, 3}, Box{0, 3, 3, 1}, Box{0, 0, 4, 3}}) {
        try {
            detect(m, b);
            FAIL();
        } catch (const Error &e) {
            EXPECT_EQ(e.kind(), ErrorKind::Annotation);
        }
    }
}

TEST(Segmentation, ArgmaxAndLowerIndexTies) {
    FeatureMap m(3, 1, 2);
    m.pixel(0, 0) << 1, 0;
    m.pixel(1, 0) << 0, 5;
    m.pixel(2, 0) << 1, 1; // equidistant from both classes
    const auto labels = segment(m, {axis(2, 0), axis(2, 1)});
    EXPECT_EQ(labels, (std::vector<int>{0, 1, 0}));
    EXPECT_THROW(segment(m, {axis(2, 0)}), Error);
}

TEST(Metrics, IoUOnFourByFour) {
    // Predicted square covers the top-left 2x2, truth the top 2x4 half.
    std::vector<int> pred(16, 0), gt(16, 0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            pred[std::size_t(y * 4 + x)] = 1;
    for (int i = 0; i < 8; ++i)
        gt[std::size_t(i)] = 1;
    const auto iou = class_iou(pred, gt, 3);
    EXPECT_DOUBLE_EQ(iou[1], 4.0 / 8.0);
    EXPECT_DOUBLE_EQ(iou[0], 8.0 / 12.0);
    EXPECT_TRUE(std::isnan(iou[2]));
    EXPECT_DOUBLE_EQ(miou(pred, gt, 3), 0.5 * (0.5 + 8.0 / 12.0));

    // One-third overlap: truth is the left 2x4, prediction the middle 2x4.
    std::vector<int> a(16, 0), b(16, 0);
    for (int y = 0; y < 4; ++y) {
        b[std::size_t(y * 4 + 0)] = b[std::size_t(y * 4 + 1)] = 1;
        a[std::size_t(y * 4 + 1)] = a[std::size_t(y * 4 + 2)] = 1;
    }
    EXPECT_DOUBLE_EQ(class_iou(a, b, 2)[1], 1.0 / 3.0);
}

TEST(Metrics, PerfectAndDisjoint) {
    const std::vector<int> gt = {0, 0, 1, 1, 2, 2};
    EXPECT_DOUBLE_EQ(miou(gt, gt, 3), 1.0);
    EXPECT_DOUBLE_EQ(miou({1, 1, 2, 2, 0, 0}, gt, 3), 0.0);
    // Ignored pixels do not count against the prediction.
    EXPECT_DOUBLE_EQ(miou({0, 1, 1, 1, 2, 2}, {0, -1, 1, 1, 2, 2}, 3), 1.0);
}

TEST(Metrics, AveragePrecisionHandValues) {
    EXPECT_NEAR(average_precision({0.9, 0.8, 0.7, 0.6}, {true, false, true, false}), 0.5 + 0.5 * 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(average_precision({0.9, 0.8, 0.1}, {true, true, false}), 1.0);
    EXPECT_DOUBLE_EQ(average_precision({0.5, 0.5, 0.5, 0.5}, {false, true, false, false}), 0.25);
    EXPECT_DOUBLE_EQ(average_precision({0.1, 0.2}, {false, false}), 0.0);
}

TEST(Metrics, MeanAveragePrecisionSkipsAbsentClasses) {
    const std::vector<int> gt = {0, 0, 1, -1};
    const std::vector<std::vector<double>> scores = {
        {0.9, 0.8, 0.1, 5.0}, // perfect for class 0; the ignored pixel does not matter
        {0.2, 0.9, 0.5, 0.0}, // class 1 ranked second
        {0.3, 0.3, 0.3, 0.3}, // no positives
    };
    EXPECT_NEAR(map_score(scores, gt, 3), 0.5 * (1.0 + 0.5), 1e-12);
}

TEST(FalseColor, EndsOfTheRamp) {
    RelevancyMap m;
    m.width = 2;
    m.height = 1;
    m.values = {0.2, 0.7};
    const auto rgb = false_color(m);
    ASSERT_EQ(rgb.size(), 6u);
    EXPECT_EQ(rgb[2], 128); // low end is dark blue
    EXPECT_EQ(rgb[0], 0);
    EXPECT_EQ(rgb[3], 128); // high end is dark red
    EXPECT_EQ(rgb[5], 0);
}
