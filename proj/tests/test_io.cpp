// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "featsplat/config.hpp"
#include "featsplat/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

using namespace featsplat;
using namespace featsplat::testing;
namespace fs = std::filesystem;

namespace {

std::string
slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void
spit(const fs::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

ErrorKind
kind_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.kind();
    }
    ADD_FAILURE() << "no featsplat::Error thrown";
    return ErrorKind::Usage;
}

FeatureContainer
sample_container(DType dtype) {
    Rng rng(1);
    FeatureContainer c;
    c.dtype = dtype;
    c.map = FeatureMap(5, 3, 4);
    c.map.values = random_matrix(15, 4, rng);
    for (double s : {0.1, 0.3}) {
        PyramidLevel l;
        l.scale = s;
        l.map = FeatureMap(s < 0.2 ? 4 : 2, s < 0.2 ? 3 : 1, 4);
        l.map.values = random_matrix(l.map.values.rows(), 4, rng);
        c.pyramid.push_back(l);
    }
    // Store-precision values so the round trip can be compared exactly.
    auto quantize = [&](RowMatrix &m) {
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = dtype == DType::F32 ? double(float(m.data()[i]))
                                              : double(half_to_float(float_to_half(float(m.data()[i]))));
    };
    quantize(c.map.values);
    for (auto &l : c.pyramid)
        quantize(l.map.values);
    return c;
}

} // namespace

TEST(HalfFloat, KnownEncodings) {
    EXPECT_EQ(float_to_half(0.0f), 0x0000);
    EXPECT_EQ(float_to_half(-0.0f), 0x8000);
    EXPECT_EQ(float_to_half(1.0f), 0x3C00);
    EXPECT_EQ(float_to_half(-2.0f), 0xC000);
    EXPECT_EQ(float_to_half(65504.0f), 0x7BFF);
    EXPECT_EQ(float_to_half(65520.0f), 0x7C00); // rounds up to infinity
    EXPECT_EQ(float_to_half(1.0f / 3.0f), 0x3555);
    EXPECT_EQ(float_to_half(std::ldexp(1.0f, -24)), 0x0001);
    EXPECT_EQ(float_to_half(std::ldexp(1.0f, -25)), 0x0000);       // tie to even
    EXPECT_EQ(float_to_half(std::ldexp(3.0f, -25)), 0x0002);       // tie to even
    EXPECT_EQ(float_to_half(std::numeric_limits<float>::infinity()), 0x7C00);
    const std::uint16_t nan = float_to_half(std::numeric_limits<float>::quiet_NaN());
    EXPECT_EQ(nan & 0x7C00, 0x7C00);
    EXPECT_NE(nan & 0x03FF, 0);
}

TEST(HalfFloat, DecodesEveryFiniteHalfExactly) {
    for (std::uint32_t h = 0; h < 0x10000; ++h) {
        const auto bits = std::uint16_t(h);
        if ((bits & 0x7C00) == 0x7C00)
            continue;
        EXPECT_EQ(float_to_half(half_to_float(bits)), bits) << h;
    }
    EXPECT_EQ(half_to_float(0x3C00), 1.0f);
    EXPECT_EQ(half_to_float(0x0001), std::ldexp(1.0f, -24));
    EXPECT_TRUE(std::isinf(half_to_float(0xFC00)));
}

TEST(Container, RoundTripIsBitExact) {
    const auto dir = scratch_dir("container");
    for (DType dtype : {DType::F32, DType::F16}) {
        const FeatureContainer c = sample_container(dtype);
        write_container(c, dir / "a.fmfc");
        const FeatureContainer r = read_container(dir / "a.fmfc");
        EXPECT_EQ(r.dtype, dtype);
        EXPECT_EQ(r.map.width, 5);
        EXPECT_EQ(r.map.values, c.map.values);
        ASSERT_EQ(r.pyramid.size(), 2u);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_EQ(r.pyramid[i].map.values, c.pyramid[i].map.values);
            EXPECT_FLOAT_EQ(float(r.pyramid[i].scale), float(c.pyramid[i].scale));
        }
        write_container(r, dir / "b.fmfc");
        EXPECT_EQ(slurp(dir / "a.fmfc"), slurp(dir / "b.fmfc"));
    }
    EXPECT_LT(fs::file_size(dir / "b.fmfc"), fs::file_size(dir / "a.fmfc") + 1);
}

TEST(Container, HeaderLayout) {
    const auto dir = scratch_dir("container_layout");
    FeatureContainer c;
    c.map = FeatureMap(2, 1, 3);
    c.map.values << 1, 2, 3, 4, 5, 6;
    write_container(c, dir / "x.fmfc");
    const std::string bytes = slurp(dir / "x.fmfc");
    ASSERT_EQ(bytes.size(), 4u + 6 * 4 + 6 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "FMFC");
    float third;
    std::memcpy(&third, bytes.data() + 28 + 2 * 4, 4);
    EXPECT_EQ(third, 3.0f); // pixel-major payload
}

TEST(Container, MalformedFilesAreFormatErrors) {
    const auto dir = scratch_dir("container_bad");
    const FeatureContainer c = sample_container(DType::F32);
    write_container(c, dir / "good.fmfc");
    const std::string good = slurp(dir / "good.fmfc");
    spit(dir / "truncated.fmfc", good.substr(0, good.size() - 3));
    spit(dir / "trailing.fmfc", good + "x");
    std::string magic = good;
    magic[0] = 'X';
    spit(dir / "magic.fmfc", magic);
    std::string version = good;
    version[4] = 9;
    spit(dir / "version.fmfc", version);
    for (const char *name : {"truncated.fmfc", "trailing.fmfc", "magic.fmfc", "version.fmfc"})
        EXPECT_EQ(kind_of([&] { read_container(dir / name); }), ErrorKind::Format) << name;
    EXPECT_EQ(kind_of([&] { read_container(dir / "missing.fmfc"); }), ErrorKind::Io);
}

TEST(Selection, SidecarRoundTrip) {
    const auto dir = scratch_dir("selection");
    const std::vector<bool> mask = {true, false, false, true, true, false, true};
    write_selection(mask, dir / "s.fmsl");
    EXPECT_EQ(read_selection(dir / "s.fmsl"), mask);
    EXPECT_EQ(fs::file_size(dir / "s.fmsl"), 4u + 4 + 8 + 7);
    spit(dir / "short.fmsl", slurp(dir / "s.fmsl").substr(0, 18));
    EXPECT_EQ(kind_of([&] { read_selection(dir / "short.fmsl"); }), ErrorKind::Format);
}

TEST(Checkpoint, CorruptHeaderIsFormatError) {
    const auto dir = scratch_dir("checkpoint_bad");
    FieldConfig c;
    c.grid.levels = 1;
    c.grid.table_size = 16;
    c.grid.n_min = c.grid.n_max = 2;
    c.head = {1, 4};
    c.clip_dim = 3;
    c.dino_dim = 2;
    write_checkpoint(FeatureField(c, 1), dir / "f.fmgs");
    std::string bytes = slurp(dir / "f.fmgs");
    spit(dir / "short.fmgs", bytes.substr(0, bytes.size() - 4));
    EXPECT_EQ(kind_of([&] { read_checkpoint(dir / "short.fmgs"); }), ErrorKind::Format);
    bytes[16] = 3; // table_size that is not a power of two
    spit(dir / "bad.fmgs", bytes);
    EXPECT_EQ(kind_of([&] { read_checkpoint(dir / "bad.fmgs"); }), ErrorKind::Format);
}

TEST(Poses, OpenGlCameraToWorldIsConverted) {
    const auto dir = scratch_dir("poses");
    // A camera at (0, 0, 5) looking toward the origin, written the OpenGL way.
    spit(dir / "p.json", R"({
        // comments are allowed
        "convention": "opengl",
        "frames": [{"id": "a", "width": 20, "height": 10, "fx": 30, "fy": 30,
                    "camera_to_world": [[1,0,0,0],[0,1,0,0],[0,0,1,5],[0,0,0,1]]}]
    })");
    const PoseSet p = read_poses(dir / "p.json");
    const Camera &cam = p.find("a").camera;
    EXPECT_NEAR(cam.cx, 10.0, 1e-12);
    EXPECT_NEAR(cam.cy, 5.0, 1e-12);
    EXPECT_LE((cam.center() - Vec3(0, 0, 5)).norm(), 1e-12);
    EXPECT_NEAR(cam.to_camera(Vec3(0, 0, 0)).z(), 5.0, 1e-12); // origin is in front
    EXPECT_LT(cam.to_camera(Vec3(0, 1, 0)).y(), 0.0);           // world up is image up

    write_poses(p, dir / "q.json");
    const PoseSet q = read_poses(dir / "q.json");
    EXPECT_LE((q.frames[0].camera.rotation - cam.rotation).norm(), 1e-12);
    EXPECT_LE((q.frames[0].camera.translation - cam.translation).norm(), 1e-12);
    EXPECT_EQ(kind_of([&] { q.find("zzz"); }), ErrorKind::Configuration);
}

TEST(Poses, Errors) {
    const auto dir = scratch_dir("poses_bad");
    EXPECT_EQ(kind_of([&] { read_poses(dir / "none.json"); }), ErrorKind::Io);
    spit(dir / "garbage.json", "{ not json");
    EXPECT_EQ(kind_of([&] { read_poses(dir / "garbage.json"); }), ErrorKind::Format);
    const std::string frame = R"({"id": "a", "width": 4, "height": 4, "fx": 4, "fy": 4,
        "world_to_camera": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]])";
    spit(dir / "dup.json", R"({"frames": [)" + frame + "}, " + frame + "}]}");
    EXPECT_EQ(kind_of([&] { read_poses(dir / "dup.json"); }), ErrorKind::Format);
    spit(dir / "missing_clip.json", R"({"frames": [)" + frame + R"(, "clip": "nope.fmfc"}]})");
    EXPECT_EQ(kind_of([&] { read_poses(dir / "missing_clip.json"); }), ErrorKind::Io);
    spit(dir / "bad_rot.json", R"({"frames": [{"id": "a", "width": 4, "height": 4, "fx": 4, "fy": 4,
        "world_to_camera": [[2,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}]})");
    EXPECT_EQ(kind_of([&] { read_poses(dir / "bad_rot.json"); }), ErrorKind::Format);
}

TEST(TextFiles, RoundTrips) {
    const auto dir = scratch_dir("text");
    VecX v(3);
    v << 0.1, -0.25, 1e-7;
    write_embeddings({{"coffee mug", v}, {"book", -v}}, dir / "e.tsv");
    const auto e = read_embeddings(dir / "e.tsv");
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[0].label, "coffee mug");
    for (int i = 0; i < 3; ++i)
        EXPECT_EQ(float(e[1].vector[i]), float(-v[i]));

    write_boxes({{"test_00", "mug", {1, 2, 30, 40}}}, dir / "b.tsv");
    const auto b = read_boxes(dir / "b.tsv");
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b[0].box.x1, 30);
    EXPECT_EQ(b[0].label, "mug");

    write_legend({{0, "wall"}, {3, "lamp"}}, dir / "l.tsv");
    const auto l = read_legend(dir / "l.tsv");
    EXPECT_EQ(l.at(3), "lamp");
}

TEST(TextFiles, ParseErrors) {
    const auto dir = scratch_dir("text_bad");
    spit(dir / "dims.tsv", "a\t1 0\nb\t1 0 0\n");
    spit(dir / "number.tsv", "# header\n\na\t1 x 0\n");
    spit(dir / "box.tsv", "v\tmug\t1 2 3\n");
    spit(dir / "legend.tsv", "0\twall\n0\tmug\n");
    spit(dir / "legend_range.tsv", "300\twall\n");
    EXPECT_EQ(kind_of([&] { read_embeddings(dir / "dims.tsv"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { read_embeddings(dir / "number.tsv"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { read_boxes(dir / "box.tsv"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { read_legend(dir / "legend.tsv"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { read_legend(dir / "legend_range.tsv"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { read_embeddings(dir / "absent.tsv"); }), ErrorKind::Io);
}

TEST(Png, RoundTripGrayAndRgb) {
    const auto dir = scratch_dir("png");
    Image8 gray{3, 2, 1, {0, 10, 20, 255, 128, 7}};
    write_png(gray, dir / "g.png");
    const Image8 g = read_png(dir / "g.png");
    EXPECT_EQ(g.channels, 1);
    EXPECT_EQ(g.pixels, gray.pixels);

    FeatureMap rgb(2, 1, 3);
    rgb.values << -0.5, 0.5, 1.0, 2.0, 0.0, 0.25;
    const Image8 q = to_image(rgb);
    EXPECT_EQ(q.pixels, (std::vector<std::uint8_t>{0, 128, 255, 255, 0, 64}));
    write_png(q, dir / "c.png");
    EXPECT_EQ(read_png(dir / "c.png").pixels, q.pixels);

    spit(dir / "fake.png", "not a png at all");
    EXPECT_EQ(kind_of([&] { read_png(dir / "fake.png"); }), ErrorKind::Format);
}

TEST(Config, ParsesSectionsAndOverrides) {
    const std::string text = R"({
        // training run
        "scene": "scene.ply", "poses": "poses.json", "seed": 4,
        "grid": {"levels": 8, "table_size": 16384, "bounds": "auto"},
        "train": {"total_steps": 100, "pixel_loss_start_step": 50, "clip_target": "single_scale"}
    })";
    const RunConfig c = parse_run_config(text, "/data", {"train.lambda=0.5", "head.width=32", "output=\"out dir\""});
    EXPECT_EQ(c.scene, fs::path("/data/scene.ply"));
    EXPECT_EQ(c.output, fs::path("/data/out dir"));
    EXPECT_EQ(c.field.grid.levels, 8);
    EXPECT_EQ(c.field.grid.table_size, 16384u);
    EXPECT_TRUE(c.auto_bounds);
    EXPECT_EQ(c.train.seed, 4u);
    EXPECT_EQ(c.train.lambda, 0.5);
    EXPECT_EQ(c.field.head.width, 32);
    EXPECT_EQ(c.train.clip_target, ClipTargetMode::SingleScale);
    // Defaults survive where nothing is given.
    EXPECT_EQ(c.train.gamma, 0.01);
    EXPECT_EQ(c.train.kernel, 3);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    const std::string base = R"("scene": "s.ply", "poses": "p.json")";
    EXPECT_EQ(kind_of([&] { parse_run_config("{" + base + R"(, "grid": {"levles": 3}})", "."); }),
              ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { parse_run_config("{" + base + R"(, "colour": 1})", "."); }), ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { parse_run_config("{" + base + R"(, "train": {"kernel": 4}})", "."); }),
              ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { parse_run_config("{" + base + R"(, "train": {"clip_target": "x"}})", "."); }),
              ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { parse_run_config(R"({"scene": "s.ply"})", "."); }), ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { parse_run_config("{" + base + ", ", "."); }), ErrorKind::Configuration);
    EXPECT_EQ(kind_of([&] { load_run_config("/nonexistent/run.json"); }), ErrorKind::Io);
}

TEST(Config, ScaleConditionedGetsAuxInput) {
    const RunConfig c = parse_run_config(
        R"({"scene": "s.ply", "poses": "p.json", "train": {"clip_target": "scale_conditioned"}})", ".");
    EXPECT_EQ(c.field.grid.aux_dim, 1);
}

TEST(Config, FormatParsesBackToTheSameValues) {
    RunConfig c = parse_run_config(R"({"scene": "a/s.ply", "poses": "p.json", "views": ["v1", "v2"],
        "grid": {"bounds": {"min": [-1, -2, -3], "max": [1, 2, 3.5]}},
        "field": {"encoding": "per_gaussian", "clip_dim": 16},
        "train": {"lr_init": 0.002, "stop_after": 7}})",
                                   "/base");
    const std::string text = format_run_config(c, "/base");
    const RunConfig r = parse_run_config(text, "/base");
    EXPECT_EQ(r.scene, c.scene);
    EXPECT_EQ(r.views, c.views);
    EXPECT_FALSE(r.auto_bounds);
    EXPECT_EQ(r.field.grid.bounds_max, Vec3(1, 2, 3.5));
    EXPECT_EQ(r.field.encoding, EncodingKind::PerGaussian);
    EXPECT_EQ(r.field.clip_dim, 16);
    EXPECT_EQ(r.train.lr_init, 0.002);
    EXPECT_EQ(r.train.stop_after, 7);
    EXPECT_EQ(format_run_config(r, "/base"), text);
}
