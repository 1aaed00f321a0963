// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace featsplat {

inline constexpr int kShCoeffsPerChannel = 16;
inline constexpr int kShCoeffCount = 3 * kShCoeffsPerChannel;
inline constexpr double kScaleFloor = 1e-6;

/// One 3D Gaussian in storage form. Activations are applied on read.
///
/// SH layout follows reference scene exports: sh[0..2] are the DC terms for
/// r, g, b; sh[3 + c * 15 + (k - 1)] holds basis k >= 1 of channel c.
struct Gaussian {
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    std::array<float, 4> rotation{1.f, 0.f, 0.f, 0.f}; // (w, x, y, z), not necessarily unit
    std::array<float, 3> log_scale{0.f, 0.f, 0.f};
    float opacity_logit = 0.f;
    std::array<float, kShCoeffCount> sh{};

    Vec3 position() const { return {mean[0], mean[1], mean[2]}; }
    Vec4 quaternion() const { return {rotation[0], rotation[1], rotation[2], rotation[3]}; }
    /// exp(log_scale), clamped to the scale floor.
    Vec3 scale() const;
    double opacity() const;
    Mat3 covariance() const;

    float &sh_coeff(int channel, int basis);
    float sh_coeff(int channel, int basis) const;
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    std::vector<bool> selection_mask;

    std::size_t size() const { return gaussians.size(); }
    void select_all() { selection_mask.assign(gaussians.size(), true); }
    std::size_t selected_count() const;
    /// Axis-aligned bounds of the means, each side expanded by `margin` times the extent.
    std::pair<Vec3, Vec3> bounds(double margin = 0.05) const;
    void validate() const;
};

/// Pinhole camera; world_to_camera maps world points into a +z-forward camera frame.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;
    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }
    /// Same pose and field of view at a different pixel resolution.
    Camera rescaled(int new_width, int new_height) const;

    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double focal, int width, int height);
};

Mat3 quaternion_to_rotation(const Vec4 &wxyz);

/// R S S^T R^T for a (w, x, y, z) quaternion and per-axis standard deviations.
Mat3 assemble_covariance(const Vec4 &rotation, const Vec3 &scale);

/// Unnormalized Gaussian kernel exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)).
double gaussian_density(const Gaussian &g, const Vec3 &x);

/// Degree-3 real SH color plus 0.5, clamped below at zero.
Vec3 eval_sh_color(const Gaussian &g, const Vec3 &view_dir);

/// Binary little-endian PLY in the layout written by reference Gaussian-splatting
/// trainers: x y z [nx ny nz] f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3.
GaussianScene load_scene_ply(const std::filesystem::path &path);
void save_scene_ply(const GaussianScene &scene, const std::filesystem::path &path);

} // namespace featsplat
