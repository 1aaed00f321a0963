// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"
#include "featsplat/scene.hpp"

#include <optional>
#include <span>
#include <vector>

namespace featsplat {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kFootprintSigmas = 3.0;
inline constexpr int kTileSize = 16;

struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity(); // dilated
    Mat2 conic = Mat2::Identity(); // inverse of cov2d
    double depth = 0.0;
    std::uint32_t source_index = 0;
    double opacity = 0.0;
    double radius = 0.0; // 3 * sqrt(max eigenvalue of cov2d), pixels

    /// Alpha at a pixel-space point: opacity times the 2D kernel, capped at 0.99.
    /// Zero outside the 3-sigma ellipse or below 1/255.
    double alpha_at(const Vec2 &p) const;
};

/// EWA projection into `cam`. Returns nullopt when the Gaussian is behind the
/// near plane or its 3-sigma footprint misses the image entirely.
std::optional<ProjectedGaussian> project_gaussian(const Gaussian &g, const Camera &cam, std::uint32_t index = 0);

/// 2x2 image-space covariance J W Sigma W^T J^T, without dilation.
Mat2 projected_covariance(const Mat3 &cov_world, const Camera &cam, const Vec3 &mean_camera);

/// Ascending depth; equal depths ordered by source index.
std::vector<ProjectedGaussian> sort_by_depth(std::vector<ProjectedGaussian> projected);

struct PixelContribution {
    std::uint32_t gaussian_index = 0;
    double alpha_eff = 0.0;
    double blend_weight = 0.0;
};

/// Front-to-back compositing weights alpha_i * prod_{j<i}(1 - alpha_j) for a sorted
/// alpha list; stops once transmittance falls below 1e-4.
std::vector<double> composite_weights(std::span<const double> alphas);

/// Per-pixel blend weights of one camera, in compressed row form. Rendering any
/// per-Gaussian attribute is a sparse product with these weights.
class BlendCache {
public:
    BlendCache() = default;
    BlendCache(int width, int height, std::size_t gaussian_count);

    int width() const { return mWidth; }
    int height() const { return mHeight; }
    std::size_t gaussian_count() const { return mGaussianCount; }
    bool valid() const { return !mOffsets.empty(); }

    std::span<const PixelContribution> pixel(std::size_t p) const {
        return {mEntries.data() + mOffsets[p], mOffsets[p + 1] - mOffsets[p]};
    }
    std::size_t entry_count() const { return mEntries.size(); }

    // Fills pixel lists; called by the rasterizer only.
    void assign(std::vector<std::vector<PixelContribution>> &&per_pixel);

private:
    int mWidth = 0;
    int mHeight = 0;
    std::size_t mGaussianCount = 0;
    std::vector<std::size_t> mOffsets;
    std::vector<PixelContribution> mEntries;
};

enum class RasterMode {
    Tiled,           // 16x16 tiles, per-tile depth-sorted lists
    NaiveGlobalSort, // reference path: one global sort, every Gaussian tested per pixel
};

struct RasterOptions {
    RasterMode mode = RasterMode::Tiled;
    bool selected_only = false;
};

BlendCache rasterize(const GaussianScene &scene, const Camera &cam, const RasterOptions &options = {});

/// Blends per-Gaussian rows (one row per scene Gaussian) into a W x H x D map.
/// Background is zero.
FeatureMap render_features(const BlendCache &cache, const RowMatrix &per_gaussian);

/// Adjoint of render_features: row k = sum over pixels of weight(k, p) * upstream(p).
RowMatrix backward_features(const BlendCache &cache, const FeatureMap &upstream);

/// RGB from SH colors over all Gaussians; returns a 3-channel map on black.
FeatureMap render_rgb(const GaussianScene &scene, const Camera &cam, RasterMode mode = RasterMode::Tiled);

} // namespace featsplat
