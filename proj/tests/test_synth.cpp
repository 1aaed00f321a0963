// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "featsplat/io.hpp"
#include "featsplat/synth.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

using namespace featsplat;
using namespace featsplat::testing;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string>
directory_bytes(const fs::path &root) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file())
            continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return out;
}

} // namespace

TEST(Synth, FixtureIsDeterministic) {
    SynthSpec spec;
    spec.train_views = 3;
    spec.test_views = 2;
    const auto a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
    write_synth_fixture(spec, a);
    write_synth_fixture(spec, b);
    const auto da = directory_bytes(a), db = directory_bytes(b);
    EXPECT_GT(da.size(), 10u);
    EXPECT_TRUE(da == db);

    spec.seed = 8;
    const auto c = scratch_dir("synth_c");
    write_synth_fixture(spec, c);
    EXPECT_NE(directory_bytes(c).at("scene.ply"), da.at("scene.ply"));
}

TEST(Synth, SceneComposition) {
    const SynthScene s = make_synth_scene(SynthSpec());
    ASSERT_EQ(s.region.size(), s.scene.size());
    EXPECT_NEAR(double(s.structural) / double(s.scene.size()), 0.4, 0.01);
    const auto regions = synth_regions();
    ASSERT_EQ(regions.size(), 4u);
    for (int r = 0; r < 4; ++r)
        EXPECT_GT(std::count(s.region.begin(), s.region.end(), r), 10) << regions[std::size_t(r)].label;
    EXPECT_NO_THROW(s.scene.validate());
}

TEST(Synth, EmbeddingsAreOrthonormal) {
    SynthSpec spec;
    spec.train_views = 1;
    spec.test_views = 1;
    const auto dir = scratch_dir("synth_embed");
    const SynthFiles files = write_synth_fixture(spec, dir);
    auto all = read_embeddings(files.queries);
    const auto canon = read_embeddings(files.canonicals);
    EXPECT_EQ(canon.size(), 4u);
    all.insert(all.end(), canon.begin(), canon.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
        ASSERT_EQ(all[i].vector.size(), spec.clip_dim);
        for (std::size_t j = 0; j < all.size(); ++j)
            EXPECT_NEAR(all[i].vector.dot(all[j].vector), i == j ? 1.0 : 0.0, 1e-6) << i << "," << j;
    }
}

TEST(Synth, PyramidHasSevenAscendingLevels) {
    const auto scales = synth_scales();
    ASSERT_EQ(scales.size(), 7u);
    EXPECT_NEAR(scales.front(), 0.05, 1e-12);
    EXPECT_NEAR(scales.back(), 0.5, 1e-12);
    for (std::size_t i = 1; i < scales.size(); ++i)
        EXPECT_NEAR(scales[i] / scales[i - 1], scales[1] / scales[0], 1e-9);

    SynthSpec spec;
    spec.train_views = 1;
    spec.test_views = 1;
    const auto dir = scratch_dir("synth_pyramid");
    const SynthFiles files = write_synth_fixture(spec, dir);
    const PoseSet poses = read_poses(files.train_poses);
    const FeatureContainer clip = read_container(poses.frames[0].clip);
    ASSERT_EQ(clip.pyramid.size(), 7u);
    for (std::size_t i = 1; i < 7; ++i) {
        EXPECT_GT(clip.pyramid[i].scale, clip.pyramid[i - 1].scale);
        EXPECT_LE(clip.pyramid[i].map.pixel_count(), clip.pyramid[i - 1].map.pixel_count());
    }
    for (const auto &level : clip.pyramid)
        for (Eigen::Index p = 0; p < level.map.values.rows(); ++p)
            EXPECT_NEAR(level.map.values.row(p).norm(), 1.0, 1e-5);
}

TEST(Synth, LabelsAndBoxesAgree) {
    SynthSpec spec;
    spec.train_views = 1;
    const auto dir = scratch_dir("synth_boxes");
    const SynthFiles files = write_synth_fixture(spec, dir);
    const auto boxes = read_boxes(files.boxes);
    EXPECT_EQ(boxes.size(), files.box_count);
    EXPECT_GE(boxes.size(), 20u);
    const auto legend = read_legend(files.legend);
    for (const auto &b : boxes) {
        const Image8 mask = read_png(files.masks / (b.view_id + ".png"));
        int index = -1;
        for (const auto &[k, v] : legend)
            if (v == b.label)
                index = k;
        ASSERT_GE(index, 0);
        int inside = 0;
        for (int y = b.box.y0; y <= b.box.y1; ++y)
            for (int x = b.box.x0; x <= b.box.x1; ++x)
                inside += mask.pixels[std::size_t(y * mask.width + x)] == index;
        EXPECT_GT(inside, 0) << b.view_id << " " << b.label;
    }
}
