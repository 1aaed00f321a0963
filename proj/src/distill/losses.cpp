// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace featsplat {

namespace {

void
require_same_shape(const FeatureMap &a, const FeatureMap &b, const char *what) {
    require(a.same_shape(b), ErrorKind::Configuration,
            std::string(what) + ": shape mismatch " + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                std::to_string(a.dim()) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                std::to_string(b.dim()));
}

double
sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

} // namespace

FeatureMap
resample_bilinear(const FeatureMap &map, int width, int height) {
    require(map.width >= 1 && map.height >= 1, ErrorKind::Format, "cannot resample an empty map");
    if (map.width == width && map.height == height)
        return map;
    FeatureMap out(width, height, map.dim());
    const double sx = double(map.width) / width;
    const double sy = double(map.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(map.height - 1));
        const int y0 = int(std::floor(fy));
        const int y1 = std::min(y0 + 1, map.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(map.width - 1));
            const int x0 = int(std::floor(fx));
            const int x1 = std::min(x0 + 1, map.width - 1);
            const double tx = fx - x0;
            out.pixel(x, y) = (1 - ty) * ((1 - tx) * map.pixel(x0, y0) + tx * map.pixel(x1, y0)) +
                              ty * ((1 - tx) * map.pixel(x0, y1) + tx * map.pixel(x1, y1));
        }
    }
    return out;
}

FeatureMap
build_hybrid_clip(const std::vector<PyramidLevel> &pyramid) {
    require(!pyramid.empty(), ErrorKind::Format, "empty feature pyramid");
    const PyramidLevel *finest = &pyramid.front();
    for (const auto &level : pyramid) {
        require(level.map.dim() == pyramid.front().map.dim(), ErrorKind::Format,
                "pyramid levels disagree on feature dimension");
        require(level.map.width >= 1 && level.map.height >= 1, ErrorKind::Format, "empty pyramid level");
        if (level.map.pixel_count() > finest->map.pixel_count())
            finest = &level;
    }
    FeatureMap sum(finest->map.width, finest->map.height, finest->map.dim());
    for (const auto &level : pyramid)
        sum.values += resample_bilinear(level.map, sum.width, sum.height).values;
    sum.values /= double(pyramid.size());
    return normalized_pixels(sum);
}

double
clip_loss(const FeatureMap &rendered, const FeatureMap &target, double delta, FeatureMap *grad) {
    require_same_shape(rendered, target, "clip loss");
    const double count = double(rendered.values.size());
    if (grad)
        *grad = FeatureMap(rendered.width, rendered.height, rendered.dim());
    double total = 0.0;
    for (Eigen::Index i = 0; i < rendered.values.size(); ++i) {
        const double d = rendered.values.data()[i] - target.values.data()[i];
        const double a = std::abs(d);
        if (a < delta) {
            total += 0.5 * d * d;
            if (grad)
                grad->values.data()[i] = d / count;
        } else {
            total += delta * (a - 0.5 * delta);
            if (grad)
                grad->values.data()[i] = delta * sign(d) / count;
        }
    }
    return total / count;
}

double
dino_loss(const FeatureMap &rendered, const FeatureMap &target, FeatureMap *grad) {
    require_same_shape(rendered, target, "dino loss");
    const double count = double(rendered.values.size());
    const RowMatrix diff = rendered.values - target.values;
    if (grad) {
        *grad = FeatureMap(rendered.width, rendered.height, rendered.dim());
        grad->values = (2.0 / count) * diff;
    }
    return diff.squaredNorm() / count;
}

double
pixel_alignment_loss(const FeatureMap &rendered_clip, const FeatureMap &rendered_dino, int kernel, FeatureMap *grad_clip) {
    require(kernel >= 3 && kernel % 2 == 1, ErrorKind::Configuration, "pixel alignment kernel must be odd and >= 3");
    require(rendered_clip.width == rendered_dino.width && rendered_clip.height == rendered_dino.height,
            ErrorKind::Configuration, "pixel alignment maps differ in resolution");
    const int w = rendered_clip.width, h = rendered_clip.height;
    const int r = kernel / 2;
    const FeatureMap u = normalized_pixels(rendered_clip);
    const FeatureMap v = normalized_pixels(rendered_dino);
    const double pixels = double(u.pixel_count());

    FeatureMap grad_u;
    if (grad_clip)
        grad_u = FeatureMap(w, h, u.dim());

    double total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int count = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if ((dx || dy) && x + dx >= 0 && x + dx < w && y + dy >= 0 && y + dy < h)
                        ++count;
            if (count == 0)
                continue;
            const auto ui = u.pixel(x, y);
            const auto vi = v.pixel(x, y);
            double acc = 0.0;
            const double scale = 1.0 / (count * pixels);
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!(dx || dy) || nx < 0 || nx >= w || ny < 0 || ny >= h)
                        continue;
                    const double diff = vi.dot(v.pixel(nx, ny)) - ui.dot(u.pixel(nx, ny));
                    acc += std::abs(diff);
                    if (grad_clip) {
                        const double s = -sign(diff) * scale;
                        grad_u.pixel(x, y) += s * u.pixel(nx, ny);
                        grad_u.pixel(nx, ny) += s * ui;
                    }
                }
            }
            total += acc / count;
        }
    }

    if (grad_clip) {
        *grad_clip = FeatureMap(w, h, u.dim());
        for (std::size_t p = 0; p < u.pixel_count(); ++p) {
            const auto raw = rendered_clip.values.row(Eigen::Index(p));
            const double n = raw.norm();
            if (n < 1e-12)
                continue;
            const auto up = u.values.row(Eigen::Index(p));
            const auto g = grad_u.values.row(Eigen::Index(p));
            grad_clip->values.row(Eigen::Index(p)) = (g - up * up.dot(g)) / n;
        }
    }
    return total / pixels;
}

double
effective_gamma(int step, const LossWeights &weights) {
    return step < weights.pixel_loss_start_step ? 0.0 : weights.gamma;
}

double
total_loss(const LossComponents &c, int step, const LossWeights &weights) {
    require(step >= 0, ErrorKind::InvalidParameter, "negative step");
    double total = weights.lambda * c.clip + (1.0 - weights.lambda) * c.dino;
    if (step >= weights.pixel_loss_start_step)
        total += weights.gamma * c.pixel;
    return total;
}

} // namespace featsplat
