// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/config.hpp"
#include "featsplat/io.hpp"
#include "featsplat/scene.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace featsplat {

// Synthetic desk scene: a backdrop plane with flat labeled panels in front of it.
// Every region is covered by large "structural" Gaussians plus a cloud of tiny
// detail Gaussians (60% of the scene) that project below two pixels. Region
// embeddings are mutually orthogonal and orthogonal to the canonical phrases.
//
// The per-view clip pyramid mimics a patch-based extractor: each square patch is
// embedded as the single region that dominates it, with panel pixels weighted
// above backdrop pixels. A small panel next to a larger one loses every coarse
// patch it shares with it.

struct SynthSpec {
    std::uint64_t seed = 7;
    int width = 64;
    int height = 64;
    double focal = 64.0;
    int clip_dim = 32;
    int dino_dim = 16;
    int train_views = 12;
    int test_views = 8;
    int train_steps = 2000;
    DType dtype = DType::F32;
};

struct SynthRegion {
    std::string label;
    Vec3 center;      // panel center
    double half_size; // panel half side
    Vec3 color;
};

/// Regions in label order; region 0 is the backdrop.
std::vector<SynthRegion> synth_regions();

/// Clip pyramid scale fractions (seven, geometric from 0.05 to 0.5).
std::vector<double> synth_scales();

struct SynthScene {
    GaussianScene scene;
    std::vector<int> region; // region label per Gaussian
    std::size_t structural = 0;
};

SynthScene make_synth_scene(const SynthSpec &spec);

/// Region one-hots rendered with every Gaussian; argmax per pixel, 255 where the
/// total weight is below one half.
std::vector<std::uint8_t> synth_label_map(const SynthScene &scene, const Camera &cam, int region_count);

/// Pyramid of winner-take-all patch embeddings for one label map.
std::vector<PyramidLevel> synth_clip_pyramid(const std::vector<std::uint8_t> &labels, int width, int height,
                                             const std::vector<VecX> &region_embeddings);

struct SynthFiles {
    std::filesystem::path dir;
    std::filesystem::path scene;
    std::filesystem::path train_poses;
    std::filesystem::path test_poses;
    std::filesystem::path queries;
    std::filesystem::path canonicals;
    std::filesystem::path boxes;
    std::filesystem::path masks;
    std::filesystem::path legend;
    std::filesystem::path config;
    std::size_t gaussians = 0;
    std::size_t box_count = 0;
};

/// Writes the full fixture into `dir` (created if missing). Output bytes depend
/// only on `spec`.
SynthFiles write_synth_fixture(const SynthSpec &spec, const std::filesystem::path &dir);

/// Training config the fixture ships with (small grid and heads).
RunConfig synth_run_config(const SynthSpec &spec, const SynthFiles &files);

} // namespace featsplat
