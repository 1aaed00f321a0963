// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace featsplat {

namespace fs = std::filesystem;

namespace {

std::vector<PyramidLevel>
pyramid_from(const FeatureContainer &c) {
    if (!c.pyramid.empty())
        return c.pyramid;
    require(c.map.pixel_count() > 0, ErrorKind::Format, "clip container holds neither a map nor a pyramid");
    return {PyramidLevel{1.0, c.map}};
}

const VecX &
embedding_for(const std::vector<LabeledEmbedding> &set, const std::string &label) {
    for (const auto &e : set)
        if (e.label == label)
            return e.vector;
    fail(ErrorKind::Annotation, "no query embedding for label '" + label + "'");
}

} // namespace

GaussianScene
load_scene(const fs::path &scene_path, const fs::path &selection) {
    GaussianScene scene = load_scene_ply(scene_path);
    if (!selection.empty()) {
        std::vector<bool> mask = read_selection(selection);
        require(mask.size() == scene.size(), ErrorKind::Format,
                "selection has " + std::to_string(mask.size()) + " entries for " + std::to_string(scene.size()) +
                    " gaussians");
        scene.selection_mask = std::move(mask);
    }
    return scene;
}

RowMatrix
query_aux(const FeatureField &field, double scale) {
    const int k = field.config().grid.aux_dim;
    return k > 0 ? RowMatrix::Constant(1, k, scale) : RowMatrix();
}

std::vector<SupervisionPair>
load_supervision(const RunConfig &config, const PoseSet &poses) {
    std::vector<const PoseFrame *> frames;
    if (config.views.empty()) {
        for (const auto &f : poses.frames)
            frames.push_back(&f);
    } else {
        for (const auto &id : config.views)
            frames.push_back(&poses.find(id));
    }
    require(!frames.empty(), ErrorKind::Configuration, "no training views");
    std::vector<SupervisionPair> data;
    for (const PoseFrame *f : frames) {
        require(!f->clip.empty() && !f->dino.empty(), ErrorKind::Configuration,
                "training view '" + f->id + "' lacks clip or dino features");
        const FeatureContainer clip = read_container(f->clip);
        const FeatureContainer dino = read_container(f->dino);
        require(dino.map.pixel_count() > 0, ErrorKind::Format, "dino container for '" + f->id + "' is empty");
        int w = config.render_width, h = config.render_height;
        if (w == 0) {
            w = std::max(1, int(std::lround(f->camera.width * config.render_scale)));
            h = std::max(1, int(std::lround(f->camera.height * config.render_scale)));
        }
        data.push_back(make_supervision(f->camera, pyramid_from(clip), dino.map, config.train, w, h));
    }
    return data;
}

TrainingRun
run_training(const RunConfig &config, bool write_outputs, const StepCallback &on_step) {
    const auto start = std::chrono::steady_clock::now();
    TrainingRun run;
    run.scene = load_scene_ply(config.scene);
    const PoseSet poses = read_poses(config.poses);
    const std::vector<SupervisionPair> data = load_supervision(config, poses);

    std::vector<Camera> cameras;
    for (const auto &p : data)
        cameras.push_back(p.camera);
    if (config.select) {
        run.selection = select_gaussians(run.scene, cameras, config.selection);
        run.scene.selection_mask = run.selection.mask;
    } else {
        run.scene.select_all();
        run.selection.mask = run.scene.selection_mask;
        run.selection.fraction = 1.0;
        run.selection.note = "selection disabled; training all " + std::to_string(run.scene.size()) + " gaussians";
    }

    FieldConfig fc = config.field;
    if (config.auto_bounds) {
        const auto [lo, hi] = run.scene.bounds();
        fc.grid.bounds_min = lo;
        fc.grid.bounds_max = hi;
    }
    if (fc.encoding == EncodingKind::PerGaussian)
        fc.gaussian_count = run.scene.size();
    run.field = FeatureField(fc, config.train.seed);

    std::ofstream metrics;
    if (write_outputs) {
        fs::create_directories(config.output);
        metrics.open(config.output / "metrics.jsonl");
        require(bool(metrics), ErrorKind::Io, "cannot write metrics to " + config.output.string());
    }
    run.result = train(run.scene, run.field, data, config.train, [&](const StepRecord &rec) {
        if (metrics.is_open())
            metrics << to_json_line(rec) << '\n';
        if (on_step)
            on_step(rec);
    });
    if (write_outputs) {
        write_checkpoint(run.field, config.output / "field.fmgs");
        write_selection(run.scene.selection_mask, config.output / "selection.fmsl");
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

std::vector<int>
mask_to_labels(const Image8 &mask, const std::map<int, std::string> &legend, const std::vector<std::string> &classes) {
    require(mask.channels == 1, ErrorKind::Annotation, "mask images must be single-channel");
    std::vector<int> lut(256, -1);
    for (const auto &[value, label] : legend) {
        const auto it = std::find(classes.begin(), classes.end(), label);
        if (it != classes.end())
            lut[std::size_t(value)] = int(it - classes.begin());
    }
    lut[255] = -1;
    std::vector<int> labels(mask.pixels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = lut[mask.pixels[i]];
    return labels;
}

std::vector<int>
erode_labels(const std::vector<int> &labels, int width, int height, int radius) {
    std::vector<int> out = labels;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int l = labels[std::size_t(y) * width + x];
            bool interior = l >= 0;
            for (int dy = -radius; dy <= radius && interior; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= width || yy >= height)
                        continue;
                    if (labels[std::size_t(yy) * width + xx] != l) {
                        interior = false;
                        break;
                    }
                }
            }
            if (!interior)
                out[std::size_t(y) * width + x] = -1;
        }
    }
    return out;
}

EvalReport
evaluate(const GaussianScene &scene, const FeatureField &field, const EvalInputs &in) {
    require(!in.poses.frames.empty(), ErrorKind::Configuration, "evaluation needs at least one view");
    std::vector<VecX> canonicals;
    for (const auto &c : in.canonicals)
        canonicals.push_back(c.vector);
    QuerySet{in.queries, in.canonicals}.validate(field.config().clip_dim);

    std::vector<std::string> classes;
    std::vector<VecX> class_vecs;
    for (const auto &[value, label] : in.legend) {
        if (value == 255)
            continue;
        classes.push_back(label);
        class_vecs.push_back(embedding_for(in.queries, label));
    }
    const RowMatrix aux = query_aux(field, in.aux_scale);

    EvalReport report;
    double render_seconds = 0.0;
    std::vector<int> all_pred, all_gt, all_interior;
    std::vector<std::vector<double>> class_scores(classes.size());
    double cos_sum = 0.0;
    std::size_t cos_count = 0;
    std::size_t successes = 0;

    for (const auto &frame : in.poses.frames) {
        const auto t0 = std::chrono::steady_clock::now();
        const FeatureMap rendered = render_field(scene, field, frame.camera, Head::Semantic, aux);
        render_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++report.views;

        for (const auto &b : in.boxes) {
            if (b.view_id != frame.id)
                continue;
            const RelevancyMap r = relevancy(rendered, embedding_for(in.queries, b.label), canonicals, b.label);
            QueryOutcome q{frame.id, b.label, b.box, detect(r, b.box), 0.0};
            q.peak = r.at(q.detection.x, q.detection.y);
            successes += q.detection.success ? 1 : 0;
            report.queries.push_back(q);
        }

        if (in.mask_dir.empty() || classes.size() < 2)
            continue;
        const fs::path mask_path = in.mask_dir / (frame.id + ".png");
        if (!fs::exists(mask_path))
            continue;
        const Image8 mask = read_png(mask_path);
        require(mask.width == rendered.width && mask.height == rendered.height, ErrorKind::Annotation,
                "mask " + mask_path.string() + " does not match the render resolution");
        const std::vector<int> gt = mask_to_labels(mask, in.legend, classes);
        const std::vector<int> interior = erode_labels(gt, mask.width, mask.height, in.erode_px);
        const std::vector<int> pred = segment(rendered, class_vecs);
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_gt.insert(all_gt.end(), gt.begin(), gt.end());
        all_interior.insert(all_interior.end(), interior.begin(), interior.end());
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const RelevancyMap r = relevancy(rendered, class_vecs[c], canonicals);
            class_scores[c].insert(class_scores[c].end(), r.values.begin(), r.values.end());
        }
        const FeatureMap unit = normalized_pixels(rendered);
        for (std::size_t p = 0; p < interior.size(); ++p) {
            if (interior[p] < 0)
                continue;
            cos_sum += unit.values.row(Eigen::Index(p)).dot(class_vecs[std::size_t(interior[p])]);
            ++cos_count;
        }
    }

    report.detection_accuracy = report.queries.empty() ? 0.0 : double(successes) / double(report.queries.size());
    if (!all_gt.empty()) {
        const int n = int(classes.size());
        report.miou = miou(all_pred, all_gt, n);
        report.interior_miou = miou(all_pred, all_interior, n);
        report.map = map_score(class_scores, all_gt, n);
    }
    report.mean_cosine = cos_count ? cos_sum / double(cos_count) : 0.0;
    report.render_fps = render_seconds > 0.0 ? report.views / render_seconds : 0.0;
    return report;
}

std::string
EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["views"] = views;
    j["queries"] = queries.size();
    j["detection_accuracy"] = detection_accuracy;
    j["miou"] = miou;
    j["interior_miou"] = interior_miou;
    j["mean_cosine"] = mean_cosine;
    j["map"] = map;
    j["render_fps"] = render_fps;
    nlohmann::ordered_json detail = nlohmann::ordered_json::array();
    for (const auto &q : queries)
        detail.push_back({{"view", q.view_id},
                          {"label", q.label},
                          {"box", {q.box.x0, q.box.y0, q.box.x1, q.box.y1}},
                          {"argmax", {q.detection.x, q.detection.y}},
                          {"relevancy", q.peak},
                          {"success", q.detection.success}});
    j["detections"] = detail;
    return j.dump(2);
}

} // namespace featsplat
