// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"

#include <vector>

namespace featsplat {

struct PyramidLevel {
    double scale = 0.0; // patch side as a fraction of the image size
    FeatureMap map;
};

/// Bilinear resampling with half-pixel centers and edge clamping.
FeatureMap resample_bilinear(const FeatureMap &map, int width, int height);

/// Upsamples every level to the grid of the finest level (most cells), averages
/// per pixel and renormalizes each pixel to unit length.
FeatureMap build_hybrid_clip(const std::vector<PyramidLevel> &pyramid);

/// Mean elementwise Huber loss. When grad is given it receives d(loss)/d(rendered).
double clip_loss(const FeatureMap &rendered, const FeatureMap &target, double delta, FeatureMap *grad = nullptr);

/// Mean squared elementwise difference.
double dino_loss(const FeatureMap &rendered, const FeatureMap &target, FeatureMap *grad = nullptr);

/// Neighborhood dot-product consistency between the unit-normalized semantic and
/// regularizer renders over a K x K window. Border pixels average over their valid
/// neighbors. The regularizer map is a constant: grad receives d(loss)/d(rendered_clip)
/// only.
double pixel_alignment_loss(const FeatureMap &rendered_clip, const FeatureMap &rendered_dino, int kernel,
                            FeatureMap *grad_clip = nullptr);

struct LossWeights {
    double lambda = 0.2;
    double gamma = 0.01;
    int pixel_loss_start_step = 2500;
};

struct LossComponents {
    double clip = 0.0;
    double dino = 0.0;
    double pixel = 0.0;
};

/// lambda * clip + (1 - lambda) * dino + gamma * pixel; the pixel term is absent
/// before pixel_loss_start_step.
double total_loss(const LossComponents &components, int step, const LossWeights &weights);

/// Weight actually applied to the pixel term at `step`.
double effective_gamma(int step, const LossWeights &weights);

} // namespace featsplat
