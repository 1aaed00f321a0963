// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/config.hpp"
#include "featsplat/distill.hpp"
#include "featsplat/io.hpp"
#include "featsplat/query.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace featsplat {

// Workflows behind the command-line tool.

struct TrainingRun {
    GaussianScene scene; // selection_mask holds the trained subset
    FeatureField field;
    SelectionResult selection;
    TrainResult result;
    double seconds = 0.0;
};

/// Loads the scene, poses and supervision named by `config`, selects Gaussians,
/// trains, and (when write_outputs) writes field.fmgs, selection.fmsl and
/// metrics.jsonl into config.output.
TrainingRun run_training(const RunConfig &config, bool write_outputs = true, const StepCallback &on_step = {});

/// Supervision pairs for every configured view at the configured render size.
std::vector<SupervisionPair> load_supervision(const RunConfig &config, const PoseSet &poses);

/// Scene with the selection sidecar applied (all Gaussians when `selection` is empty).
GaussianScene load_scene(const std::filesystem::path &scene, const std::filesystem::path &selection = {});

/// The single aux row a scale-conditioned field is rendered with; empty otherwise.
RowMatrix query_aux(const FeatureField &field, double scale);

struct EvalInputs {
    PoseSet poses;
    std::vector<LabeledEmbedding> queries;
    std::vector<LabeledEmbedding> canonicals;
    std::vector<BoxAnnotation> boxes;
    std::filesystem::path mask_dir; // <view id>.png, 255 = ignore
    std::map<int, std::string> legend;
    int erode_px = 3;
    double aux_scale = 0.158;
};

struct QueryOutcome {
    std::string view_id;
    std::string label;
    Box box;
    Detection detection;
    double peak = 0.0;
};

struct EvalReport {
    std::vector<QueryOutcome> queries;
    double detection_accuracy = 0.0;
    double miou = 0.0;
    double interior_miou = 0.0;
    double mean_cosine = 0.0; // interior pixels, rendered semantic vs. ground-truth class embedding
    double map = 0.0;
    double render_fps = 0.0;
    int views = 0;

    std::string to_json() const;
};

EvalReport evaluate(const GaussianScene &scene, const FeatureField &field, const EvalInputs &inputs);

/// Label map from a mask image via the legend: value -> class index in `classes`,
/// 255 and values missing from the legend -> -1.
std::vector<int> mask_to_labels(const Image8 &mask, const std::map<int, std::string> &legend,
                                const std::vector<std::string> &classes);

/// Marks every pixel within `radius` (Chebyshev) of a different label as -1.
std::vector<int> erode_labels(const std::vector<int> &labels, int width, int height, int radius);

} // namespace featsplat
