// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"

#include <string>
#include <vector>

namespace featsplat {

inline const std::vector<std::string> kCanonicalPhrases = {"object", "stuff", "things", "texture"};

struct LabeledEmbedding {
    std::string label;
    VecX vector;
};

struct QuerySet {
    std::vector<LabeledEmbedding> queries;
    std::vector<LabeledEmbedding> canonicals;

    void validate(int dim) const;
};

struct RelevancyMap {
    int width = 0;
    int height = 0;
    std::vector<double> values; // row-major
    std::string label;

    double at(int x, int y) const { return values[std::size_t(y) * width + x]; }
};

/// min over canonicals of exp(f.q) / (exp(f.q) + exp(f.c)), on unit-normalized pixels.
RelevancyMap relevancy(const FeatureMap &rendered, const VecX &query, const std::vector<VecX> &canonicals,
                       const std::string &label = {});

struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // inclusive pixel bounds
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct Detection {
    bool success = false;
    int x = 0;
    int y = 0;
};

/// First row-major argmax; success iff it lies inside the box.
Detection detect(const RelevancyMap &map, const Box &box);

/// Per-pixel argmax of cosine similarity to each class; ties go to the lower index.
std::vector<int> segment(const FeatureMap &rendered, const std::vector<VecX> &classes);

/// IoU per class; NaN for classes absent from both maps.
std::vector<double> class_iou(const std::vector<int> &pred, const std::vector<int> &gt, int class_count);

/// Mean IoU over classes present in prediction or ground truth. Pixels whose ground
/// truth is negative are ignored.
double miou(const std::vector<int> &pred, const std::vector<int> &gt, int class_count);

/// Average precision of one score map against a binary mask (scores tied at the
/// same value enter the ranking together).
double average_precision(const std::vector<double> &scores, const std::vector<bool> &positive);

/// Mean of average_precision over classes that have at least one positive pixel.
/// Pixels whose ground truth is negative are ignored.
double map_score(const std::vector<std::vector<double>> &class_scores, const std::vector<int> &gt, int class_count);

/// Red-to-blue false color for a relevancy map (values normalized to the map range).
std::vector<std::uint8_t> false_color(const RelevancyMap &map);

} // namespace featsplat
