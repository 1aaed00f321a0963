// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace featsplat {

void
QuerySet::validate(int dim) const {
    auto check = [&](const LabeledEmbedding &e) {
        require(e.vector.size() == dim, ErrorKind::Configuration,
                "embedding '" + e.label + "' has dimension " + std::to_string(e.vector.size()) + ", expected " +
                    std::to_string(dim));
        require(std::abs(e.vector.norm() - 1.0) <= 1e-3, ErrorKind::Format, "embedding '" + e.label + "' is not unit norm");
    };
    for (const auto &q : queries)
        check(q);
    for (const auto &c : canonicals)
        check(c);
    require(!canonicals.empty(), ErrorKind::Configuration, "query set has no canonical embeddings");
}

RelevancyMap
relevancy(const FeatureMap &rendered, const VecX &query, const std::vector<VecX> &canonicals, const std::string &label) {
    require(!canonicals.empty(), ErrorKind::Configuration, "relevancy needs at least one canonical embedding");
    require(query.size() == rendered.dim(), ErrorKind::Configuration, "query dimension mismatch");
    for (const auto &c : canonicals)
        require(c.size() == rendered.dim(), ErrorKind::Configuration, "canonical dimension mismatch");

    const FeatureMap unit = normalized_pixels(rendered);
    RelevancyMap out;
    out.width = rendered.width;
    out.height = rendered.height;
    out.label = label;
    out.values.resize(rendered.pixel_count());
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        const auto f = unit.values.row(Eigen::Index(p));
        const double sq = f.dot(query);
        double r = 1.0;
        for (const auto &c : canonicals) {
            // exp(a) / (exp(a) + exp(b)) written as a logistic of a - b.
            const double sc = f.dot(c);
            r = std::min(r, 1.0 / (1.0 + std::exp(sc - sq)));
        }
        out.values[p] = r;
    }
    return out;
}

Detection
detect(const RelevancyMap &map, const Box &box) {
    require(box.x1 > box.x0 && box.y1 > box.y0, ErrorKind::Annotation, "degenerate detection box");
    require(box.x0 >= 0 && box.y0 >= 0 && box.x1 < map.width && box.y1 < map.height, ErrorKind::Annotation,
            "detection box outside the image");
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const std::size_t idx = std::size_t(it - map.values.begin());
    Detection d;
    d.x = int(idx % std::size_t(map.width));
    d.y = int(idx / std::size_t(map.width));
    d.success = box.contains(d.x, d.y);
    return d;
}

std::vector<int>
segment(const FeatureMap &rendered, const std::vector<VecX> &classes) {
    require(classes.size() >= 2, ErrorKind::Configuration, "segmentation needs at least two classes");
    std::vector<VecX> unit;
    for (const auto &c : classes) {
        require(c.size() == rendered.dim(), ErrorKind::Configuration, "class embedding dimension mismatch");
        const double n = c.norm();
        unit.push_back(n > 0 ? VecX(c / n) : c);
    }
    const FeatureMap f = normalized_pixels(rendered);
    std::vector<int> labels(rendered.pixel_count(), 0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const auto row = f.values.row(Eigen::Index(p));
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < unit.size(); ++k) {
            const double s = row.dot(unit[k]);
            if (s > best) {
                best = s;
                labels[p] = int(k);
            }
        }
    }
    return labels;
}

std::vector<double>
class_iou(const std::vector<int> &pred, const std::vector<int> &gt, int class_count) {
    require(pred.size() == gt.size(), ErrorKind::Configuration, "label maps differ in resolution");
    std::vector<std::size_t> inter(std::size_t(class_count), 0), uni(std::size_t(class_count), 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] < 0)
            continue;
        const int p = pred[i], g = gt[i];
        require(g < class_count, ErrorKind::Annotation, "ground-truth label outside the class set");
        if (p == g) {
            ++inter[std::size_t(g)];
            ++uni[std::size_t(g)];
        } else {
            if (p >= 0 && p < class_count)
                ++uni[std::size_t(p)];
            ++uni[std::size_t(g)];
        }
    }
    std::vector<double> iou(std::size_t(class_count), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < iou.size(); ++c)
        if (uni[c] > 0)
            iou[c] = double(inter[c]) / double(uni[c]);
    return iou;
}

double
miou(const std::vector<int> &pred, const std::vector<int> &gt, int class_count) {
    double sum = 0.0;
    int present = 0;
    for (double v : class_iou(pred, gt, class_count)) {
        if (std::isnan(v))
            continue;
        sum += v;
        ++present;
    }
    return present == 0 ? 1.0 : sum / present;
}

double
average_precision(const std::vector<double> &scores, const std::vector<bool> &positive) {
    require(scores.size() == positive.size(), ErrorKind::Configuration, "score and mask sizes differ");
    const std::size_t total_pos = std::size_t(std::count(positive.begin(), positive.end(), true));
    if (total_pos == 0)
        return 0.0;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += positive[order[j]] ? 1 : 0;
            ++j;
        }
        seen = j;
        const double recall = double(tp) / double(total_pos);
        const double precision = double(tp) / double(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double
map_score(const std::vector<std::vector<double>> &class_scores, const std::vector<int> &gt, int class_count) {
    require(int(class_scores.size()) == class_count, ErrorKind::Configuration, "need one score map per class");
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < class_count; ++c) {
        require(class_scores[std::size_t(c)].size() == gt.size(), ErrorKind::Configuration,
                "score map resolution differs from ground truth");
        std::vector<double> scores;
        std::vector<bool> positive;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] < 0)
                continue;
            scores.push_back(class_scores[std::size_t(c)][i]);
            positive.push_back(gt[i] == c);
        }
        if (std::find(positive.begin(), positive.end(), true) == positive.end())
            continue;
        sum += average_precision(scores, positive);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / counted;
}

std::vector<std::uint8_t>
false_color(const RelevancyMap &map) {
    std::vector<std::uint8_t> rgb(map.values.size() * 3);
    const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
    const double lo = map.values.empty() ? 0.0 : *lo_it;
    const double span = map.values.empty() ? 1.0 : std::max(*hi_it - lo, 1e-12);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double t = (map.values[i] - lo) / span;
        // blue -> cyan -> yellow -> red
        const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
        const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
        const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
        rgb[3 * i + 0] = std::uint8_t(std::lround(255.0 * r));
        rgb[3 * i + 1] = std::uint8_t(std::lround(255.0 * g));
        rgb[3 * i + 2] = std::uint8_t(std::lround(255.0 * b));
    }
    return rgb;
}

} // namespace featsplat
