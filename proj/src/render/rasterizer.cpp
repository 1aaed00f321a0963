// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/render.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace featsplat {

namespace {

struct PixelRange {
    int x0, y0, x1, y1; // inclusive
};

// Pixels whose centers can fall inside the 3-sigma square around the mean.
PixelRange
footprint_pixels(const Vec2 &mean, double radius) {
    return {int(std::floor(mean.x() - radius - 0.5)), int(std::floor(mean.y() - radius - 0.5)),
            int(std::ceil(mean.x() + radius - 0.5)), int(std::ceil(mean.y() + radius - 0.5))};
}

bool
depth_less(const ProjectedGaussian &a, const ProjectedGaussian &b) {
    return std::tie(a.depth, a.source_index) < std::tie(b.depth, b.source_index);
}

std::vector<ProjectedGaussian>
project_all(const GaussianScene &scene, const Camera &cam, bool selected_only) {
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (selected_only && !scene.selection_mask[i])
            continue;
        if (auto p = project_gaussian(scene.gaussians[i], cam, std::uint32_t(i)))
            out.push_back(*p);
    }
    return out;
}

// Blends one pixel over an already depth-sorted candidate list.
void
blend_pixel(const std::vector<const ProjectedGaussian *> &sorted, const Vec2 &center,
            std::vector<PixelContribution> &out) {
    double transmittance = 1.0;
    for (const ProjectedGaussian *g : sorted) {
        const double alpha = g->alpha_at(center);
        if (alpha <= 0.0)
            continue;
        out.push_back({g->source_index, alpha, alpha * transmittance});
        transmittance *= 1.0 - alpha;
        if (transmittance < kTransmittanceCutoff)
            break;
    }
}

} // namespace

double
ProjectedGaussian::alpha_at(const Vec2 &p) const {
    const Vec2 d = p - mean2d;
    const double power = d.dot(conic * d);
    if (power > kFootprintSigmas * kFootprintSigmas)
        return 0.0;
    const double alpha = std::min(kMaxAlpha, opacity * std::exp(-0.5 * power));
    return alpha < kMinAlpha ? 0.0 : alpha;
}

Mat2
projected_covariance(const Mat3 &cov_world, const Camera &cam, const Vec3 &t) {
    const double z = t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * t.x() / (z * z), 0.0, cam.fy / z, -cam.fy * t.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> jw = jac * cam.rotation;
    Mat2 cov = jw * cov_world * jw.transpose();
    return 0.5 * (cov + cov.transpose());
}

std::optional<ProjectedGaussian>
project_gaussian(const Gaussian &g, const Camera &cam, std::uint32_t index) {
    const Vec3 t = cam.to_camera(g.position());
    if (!(t.z() > kNearPlane))
        return std::nullopt;

    ProjectedGaussian p;
    p.source_index = index;
    p.depth = t.z();
    p.opacity = g.opacity();
    p.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    p.cov2d = projected_covariance(g.covariance(), cam, t);
    p.cov2d(0, 0) += kCovarianceDilation;
    p.cov2d(1, 1) += kCovarianceDilation;

    const double a = p.cov2d(0, 0), b = p.cov2d(0, 1), c = p.cov2d(1, 1);
    const double det = a * c - b * b;
    if (!(det > 0.0) || !std::isfinite(det))
        return std::nullopt;
    p.conic << c / det, -b / det, -b / det, a / det;
    const double mid = 0.5 * (a + c);
    const double lambda_max = mid + std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
    p.radius = kFootprintSigmas * std::sqrt(lambda_max);

    const PixelRange r = footprint_pixels(p.mean2d, p.radius);
    if (r.x1 < 0 || r.y1 < 0 || r.x0 >= cam.width || r.y0 >= cam.height)
        return std::nullopt;
    return p;
}

std::vector<ProjectedGaussian>
sort_by_depth(std::vector<ProjectedGaussian> projected) {
    std::sort(projected.begin(), projected.end(), depth_less);
    return projected;
}

std::vector<double>
composite_weights(std::span<const double> alphas) {
    std::vector<double> w;
    w.reserve(alphas.size());
    double transmittance = 1.0;
    for (double a : alphas) {
        w.push_back(a * transmittance);
        transmittance *= 1.0 - a;
        if (transmittance < kTransmittanceCutoff)
            break;
    }
    w.resize(alphas.size(), 0.0);
    return w;
}

BlendCache::BlendCache(int width, int height, std::size_t gaussian_count)
    : mWidth(width), mHeight(height), mGaussianCount(gaussian_count) {}

void
BlendCache::assign(std::vector<std::vector<PixelContribution>> &&per_pixel) {
    mOffsets.assign(per_pixel.size() + 1, 0);
    for (std::size_t p = 0; p < per_pixel.size(); ++p)
        mOffsets[p + 1] = mOffsets[p] + per_pixel[p].size();
    mEntries.clear();
    mEntries.reserve(mOffsets.back());
    for (auto &list : per_pixel)
        mEntries.insert(mEntries.end(), list.begin(), list.end());
}

BlendCache
rasterize(const GaussianScene &scene, const Camera &cam, const RasterOptions &options) {
    cam.validate();
    if (options.selected_only)
        scene.validate();

    const int w = cam.width, h = cam.height;
    std::vector<std::vector<PixelContribution>> per_pixel(std::size_t(w) * h);
    std::vector<ProjectedGaussian> projected = project_all(scene, cam, options.selected_only);

    if (options.mode == RasterMode::NaiveGlobalSort) {
        projected = sort_by_depth(std::move(projected));
        std::vector<const ProjectedGaussian *> order;
        order.reserve(projected.size());
        for (const auto &p : projected)
            order.push_back(&p);
        parallel_for(std::size_t(h), 4, [&](std::size_t y0, std::size_t y1) {
            for (std::size_t y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x)
                    blend_pixel(order, Vec2(x + 0.5, double(y) + 0.5), per_pixel[y * w + x]);
        });
    } else {
        const int tiles_x = (w + kTileSize - 1) / kTileSize;
        const int tiles_y = (h + kTileSize - 1) / kTileSize;
        std::vector<std::vector<const ProjectedGaussian *>> bins(std::size_t(tiles_x) * tiles_y);
        for (const auto &p : projected) {
            const PixelRange r = footprint_pixels(p.mean2d, p.radius);
            const int tx0 = std::max(0, r.x0) / kTileSize, tx1 = std::min(w - 1, r.x1) / kTileSize;
            const int ty0 = std::max(0, r.y0) / kTileSize, ty1 = std::min(h - 1, r.y1) / kTileSize;
            for (int ty = ty0; ty <= ty1; ++ty)
                for (int tx = tx0; tx <= tx1; ++tx)
                    bins[std::size_t(ty) * tiles_x + tx].push_back(&p);
        }
        parallel_for(bins.size(), 1, [&](std::size_t t0, std::size_t t1) {
            for (std::size_t t = t0; t < t1; ++t) {
                auto &bin = bins[t];
                std::sort(bin.begin(), bin.end(),
                          [](const ProjectedGaussian *a, const ProjectedGaussian *b) { return depth_less(*a, *b); });
                const int tx = int(t % tiles_x), ty = int(t / tiles_x);
                const int xe = std::min(w, (tx + 1) * kTileSize), ye = std::min(h, (ty + 1) * kTileSize);
                for (int y = ty * kTileSize; y < ye; ++y)
                    for (int x = tx * kTileSize; x < xe; ++x)
                        blend_pixel(bin, Vec2(x + 0.5, y + 0.5), per_pixel[std::size_t(y) * w + x]);
            }
        });
    }

    BlendCache cache(w, h, scene.size());
    cache.assign(std::move(per_pixel));
    return cache;
}

FeatureMap
render_features(const BlendCache &cache, const RowMatrix &per_gaussian) {
    require(cache.valid(), ErrorKind::Usage, "render_features needs a rasterized blend cache");
    require(std::size_t(per_gaussian.rows()) == cache.gaussian_count(), ErrorKind::Configuration,
            "per-gaussian feature rows do not match the scene size");
    FeatureMap out(cache.width(), cache.height(), int(per_gaussian.cols()));
    parallel_for(out.pixel_count(), 256, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
            auto row = out.values.row(Eigen::Index(p));
            for (const auto &c : cache.pixel(p))
                row.noalias() += c.blend_weight * per_gaussian.row(c.gaussian_index);
        }
    });
    return out;
}

RowMatrix
backward_features(const BlendCache &cache, const FeatureMap &upstream) {
    require(cache.valid(), ErrorKind::Usage, "backward_features called without a forward blend cache");
    require(upstream.width == cache.width() && upstream.height == cache.height(), ErrorKind::Configuration,
            "upstream gradient resolution does not match the blend cache");
    RowMatrix grad = RowMatrix::Zero(Eigen::Index(cache.gaussian_count()), upstream.dim());
    // Serial pixel order keeps the accumulation bit-reproducible.
    for (std::size_t p = 0; p < upstream.pixel_count(); ++p) {
        const auto up = upstream.values.row(Eigen::Index(p));
        for (const auto &c : cache.pixel(p))
            grad.row(c.gaussian_index).noalias() += c.blend_weight * up;
    }
    return grad;
}

FeatureMap
render_rgb(const GaussianScene &scene, const Camera &cam, RasterMode mode) {
    const BlendCache cache = rasterize(scene, cam, {mode, false});
    RowMatrix colors(Eigen::Index(scene.size()), 3);
    const Vec3 eye = cam.center();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian &g = scene.gaussians[i];
        Vec3 dir = g.position() - eye;
        const double n = dir.norm();
        dir = n > 0 ? Vec3(dir / n) : Vec3(0, 0, 1);
        colors.row(Eigen::Index(i)) = eval_sh_color(g, dir).transpose();
    }
    return render_features(cache, colors);
}

} // namespace featsplat
