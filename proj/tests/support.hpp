// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/random.hpp"
#include "featsplat/render.hpp"
#include "featsplat/scene.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <string>

namespace featsplat::testing {

inline Gaussian
make_gaussian(const Vec3 &pos, const Vec3 &scale, double opacity, const Vec4 &rot = Vec4(1, 0, 0, 0)) {
    Gaussian g;
    for (int i = 0; i < 3; ++i) {
        g.mean[std::size_t(i)] = float(pos[i]);
        g.log_scale[std::size_t(i)] = float(std::log(scale[i]));
    }
    for (int i = 0; i < 4; ++i)
        g.rotation[std::size_t(i)] = float(rot[i]);
    g.opacity_logit = float(std::log(opacity / (1.0 - opacity)));
    return g;
}

/// Camera at the origin looking down +z.
inline Camera
axis_camera(int width, int height, double focal) {
    Camera c;
    c.fx = c.fy = focal;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    c.width = width;
    c.height = height;
    return c;
}

/// Random Gaussians in a slab in front of the origin, all selected.
inline GaussianScene
random_scene(std::size_t count, std::uint64_t seed, double min_scale = 0.03, double max_scale = 0.25) {
    Rng rng(seed);
    GaussianScene s;
    for (std::size_t i = 0; i < count; ++i) {
        const Vec3 pos(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(2.0, 5.0));
        const Vec3 scale(rng.uniform(min_scale, max_scale), rng.uniform(min_scale, max_scale),
                         rng.uniform(min_scale, max_scale));
        const Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        Gaussian g = make_gaussian(pos, scale, rng.uniform(0.1, 0.95), q.normalized());
        for (auto &c : g.sh)
            c = float(rng.uniform(-0.5, 0.5));
        s.gaussians.push_back(g);
    }
    s.select_all();
    return s;
}

/// Camera near the origin aimed at the scene slab from a random direction.
inline Camera
random_camera(Rng &rng, int width, int height) {
    const Vec3 eye(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.5, 0.5));
    const Vec3 target(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 3.5);
    return Camera::look_at(eye, target, Vec3(0, 1, 0), rng.uniform(0.8, 1.2) * width, width, height);
}

inline RowMatrix
random_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng) {
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path
scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("featsplat_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline double
relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace featsplat::testing
