// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"
#include "featsplat/feature_field.hpp"
#include "featsplat/losses.hpp"
#include "featsplat/render.hpp"
#include "featsplat/scene.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace featsplat {

enum class ClipTargetMode {
    Hybrid,          // average of the whole pyramid
    SingleScale,     // one pyramid level only
    ScaleConditioned // random level per step, scale fed to the field as an aux input
};

struct TrainConfig {
    double lambda = 0.2;
    double gamma = 0.01;
    double delta = 1.25;
    int kernel = 3;
    int total_steps = 4200;
    int pixel_loss_start_step = 2500;
    double lr_init = 5e-3;
    double lr_final = 4e-3;
    double weight_decay = 1e-9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    std::uint64_t seed = 0;

    ClipTargetMode clip_target = ClipTargetMode::Hybrid;
    int single_scale_level = -1; // -1: the coarsest level (largest scale fraction)
    /// Stop after this many steps while keeping the schedule of total_steps; -1 runs all.
    int stop_after = -1;

    void validate() const;
    LossWeights loss_weights() const { return {lambda, gamma, pixel_loss_start_step}; }
};

/// Exponential decay from lr_init at step 0 to lr_final at step total_steps - 1.
double learning_rate(const TrainConfig &config, int step);

/// One training view. The clip target must already be at the render resolution;
/// the pyramid is only needed by the scale-conditioned mode.
struct SupervisionPair {
    Camera camera;
    FeatureMap clip_target;
    FeatureMap dino_target;
    std::vector<PyramidLevel> clip_pyramid;

    void validate() const;
};

/// Builds the clip target for `mode` from a pyramid and resamples both targets to
/// width x height.
SupervisionPair make_supervision(const Camera &camera, std::vector<PyramidLevel> pyramid, const FeatureMap &dino,
                                 const TrainConfig &config, int width, int height);

struct SelectionPolicy {
    double min_radius_px = 2.0;
    double target_low = 0.35;
    double target_high = 0.45;
};

struct SelectionResult {
    std::vector<bool> mask;
    double fraction = 0.0;
    double opacity_threshold = 0.0;
    std::size_t size_qualified = 0;
    std::string note;
};

/// Opacity >= threshold and projected 3-sigma radius above min_radius_px in at least
/// one view; the threshold is tuned so the selected fraction lands in the target band
/// when some threshold allows it.
SelectionResult select_gaussians(const GaussianScene &scene, std::span<const Camera> cameras,
                                 const SelectionPolicy &policy = {});

/// Rectified Adam with L2 weight decay folded into the gradient.
class RAdam {
public:
    RAdam(std::span<const std::span<double>> params, double beta1, double beta2, double epsilon, double weight_decay);

    void step(std::span<const std::span<double>> params, const FieldGradients &grads, double lr);
    int steps_taken() const { return mStep; }

private:
    double mBeta1, mBeta2, mEps, mWeightDecay;
    int mStep = 0;
    std::vector<VecX> mM;
    std::vector<VecX> mV;
};

struct StepRecord {
    int step = 0;
    int view = 0;
    double clip = 0.0;
    double dino = 0.0;
    double pixel = 0.0;
    double total = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

std::string to_json_line(const StepRecord &record);

struct TrainResult {
    std::vector<StepRecord> log;
    int steps_run = 0;
};

using StepCallback = std::function<void(const StepRecord &)>;

/// Distills the supervision into `field` with scene geometry frozen. Only Gaussians
/// in scene.selection_mask are rendered.
TrainResult train(const GaussianScene &scene, FeatureField &field, const std::vector<SupervisionPair> &data,
                  const TrainConfig &config, const StepCallback &on_step = {});

/// Scalar training objective and its gradient for one view at one step, with the
/// same code path as train(). Exposed for gradient checks.
struct ObjectiveEvaluation {
    LossComponents components;
    double total = 0.0;
    FieldGradients gradients;
};

ObjectiveEvaluation evaluate_objective(const GaussianScene &scene, const FeatureField &field,
                                       const SupervisionPair &pair, const TrainConfig &config, int step,
                                       const RowMatrix &aux = RowMatrix(), const FeatureMap *clip_target = nullptr);

} // namespace featsplat
