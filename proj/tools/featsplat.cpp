// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/pipeline.hpp"
#include "featsplat/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace featsplat;
namespace fs = std::filesystem;

namespace {

enum ExitCode {
    kOk = 0,
    kUnexpected = 1,
    kUsage = 2,
    kConfigError = 3,
    kFormatError = 4,
    kDiverged = 5,
    kIoError = 6,
};

int
exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage: return kUsage;
    case ErrorKind::Format: return kFormatError;
    case ErrorKind::Divergence: return kDiverged;
    case ErrorKind::Io: return kIoError;
    default: return kConfigError;
    }
}

struct SceneArgs {
    std::string scene;
    std::string selection;
    std::string checkpoint;
    std::string poses;

    void add(CLI::App *app, bool need_checkpoint) {
        app->add_option("--scene", scene, "Gaussian scene (.ply)")->required();
        app->add_option("--selection", selection, "Selection sidecar written by train (default: all Gaussians)");
        auto *ck = app->add_option("--checkpoint", checkpoint, "Field checkpoint (.fmgs)");
        if (need_checkpoint)
            ck->required();
        app->add_option("--poses", poses, "Pose file (.json)")->required();
    }
};

void
write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path);
    require(bool(out), ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

void
ensure_parent(const fs::path &path) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
}

int
cmd_synth(const std::string &out, const SynthSpec &spec) {
    const SynthFiles files = write_synth_fixture(spec, out);
    std::printf("wrote synthetic fixture to %s: %zu gaussians, %d train views, %d test views, %zu boxes\n",
                files.dir.c_str(), files.gaussians, spec.train_views, spec.test_views, files.box_count);
    std::printf("train with: featsplat train --config %s\n", files.config.c_str());
    return kOk;
}

int
cmd_train(const std::string &config_path, const std::vector<std::string> &overrides, const std::string &output,
          int log_every) {
    RunConfig cfg = load_run_config(config_path, overrides);
    if (!output.empty())
        cfg.output = output;
    const TrainingRun run = run_training(cfg, true, [&](const StepRecord &r) {
        if (log_every > 0 && (r.step % log_every == 0 || r.step + 1 == cfg.train.total_steps))
            std::printf("step %5d  total %.6f  clip %.6f  dino %.6f  pixel %.6f  lr %.3e\n", r.step, r.total, r.clip,
                        r.dino, r.pixel, r.lr);
    });
    std::printf("%s\n", run.selection.note.c_str());
    std::printf("trained %d steps in %.1f s; outputs in %s\n", run.result.steps_run, run.seconds, cfg.output.c_str());
    return kOk;
}

int
cmd_render(const SceneArgs &sa, const std::string &view, const std::string &mode, const std::string &out,
           double aux_scale) {
    const GaussianScene scene = load_scene(sa.scene, sa.selection);
    const PoseSet poses = read_poses(sa.poses);
    const PoseFrame &frame = poses.find(view);
    ensure_parent(out);
    if (mode == "rgb") {
        write_png(to_image(render_rgb(scene, frame.camera)), out);
        return kOk;
    }
    require(mode == "semantic" || mode == "regularizer", ErrorKind::Usage, "mode must be rgb, semantic or regularizer");
    require(!sa.checkpoint.empty(), ErrorKind::Usage, "feature rendering needs --checkpoint");
    const FeatureField field = read_checkpoint(sa.checkpoint);
    FeatureContainer c;
    c.map = render_field(scene, field, frame.camera, mode == "semantic" ? Head::Semantic : Head::Regularizer,
                         query_aux(field, aux_scale));
    c.dim = c.map.dim();
    write_container(c, out);
    return kOk;
}

int
cmd_query(const SceneArgs &sa, const std::string &view, const std::string &queries_path,
          const std::string &canonicals_path, const std::vector<std::string> &labels, const std::string &out_dir,
          double aux_scale) {
    const GaussianScene scene = load_scene(sa.scene, sa.selection);
    const PoseSet poses = read_poses(sa.poses);
    const PoseFrame &frame = poses.find(view);
    const FeatureField field = read_checkpoint(sa.checkpoint);
    const auto queries = read_embeddings(queries_path);
    const auto canon = read_embeddings(canonicals_path);
    QuerySet{queries, canon}.validate(field.config().clip_dim);
    std::vector<VecX> canonicals;
    for (const auto &c : canon)
        canonicals.push_back(c.vector);

    const FeatureMap rendered =
        render_field(scene, field, frame.camera, Head::Semantic, query_aux(field, aux_scale));
    fs::create_directories(out_dir);
    for (const auto &q : queries) {
        if (!labels.empty() && std::find(labels.begin(), labels.end(), q.label) == labels.end())
            continue;
        const RelevancyMap r = relevancy(rendered, q.vector, canonicals, q.label);
        const std::string stem = frame.id + "_" + q.label;
        write_png(Image8{r.width, r.height, 3, false_color(r)}, fs::path(out_dir) / (stem + ".png"));
        FeatureContainer c;
        c.map = FeatureMap(r.width, r.height, 1);
        for (std::size_t i = 0; i < r.values.size(); ++i)
            c.map.values(Eigen::Index(i), 0) = r.values[i];
        c.dim = 1;
        write_container(c, fs::path(out_dir) / (stem + ".fmfc"));
        const auto it = std::max_element(r.values.begin(), r.values.end());
        const std::size_t idx = std::size_t(it - r.values.begin());
        std::printf("%s\t%s\tpeak %.4f at (%zu, %zu)\n", frame.id.c_str(), q.label.c_str(), *it,
                    idx % std::size_t(r.width), idx / std::size_t(r.width));
    }
    return kOk;
}

int
cmd_eval(const SceneArgs &sa, const std::string &queries, const std::string &canonicals, const std::string &boxes,
         const std::string &masks, const std::string &legend, int erode, double aux_scale, const std::string &out) {
    const GaussianScene scene = load_scene(sa.scene, sa.selection);
    const FeatureField field = read_checkpoint(sa.checkpoint);
    EvalInputs in;
    in.poses = read_poses(sa.poses);
    in.queries = read_embeddings(queries);
    in.canonicals = read_embeddings(canonicals);
    if (!boxes.empty())
        in.boxes = read_boxes(boxes);
    if (!masks.empty()) {
        require(!legend.empty(), ErrorKind::Usage, "--masks needs --legend");
        in.mask_dir = masks;
        in.legend = read_legend(legend);
    }
    in.erode_px = erode;
    in.aux_scale = aux_scale;
    const EvalReport report = evaluate(scene, field, in);
    std::printf("views %d  queries %zu  detection %.4f  mIoU %.4f  interior mIoU %.4f  mAP %.4f  cosine %.4f  "
                "render %.1f fps\n",
                report.views, report.queries.size(), report.detection_accuracy, report.miou, report.interior_miou,
                report.map, report.mean_cosine, report.render_fps);
    if (!out.empty()) {
        ensure_parent(out);
        write_text(out, report.to_json() + "\n");
    }
    return kOk;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"featsplat: feature fields on Gaussian splatting scenes"};
    app.require_subcommand(1);

    SynthSpec spec;
    std::string synth_out;
    bool f16 = false;
    auto *synth = app.add_subcommand("synth", "Write a synthetic scene with supervision and annotations");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    synth->add_option("--width", spec.width, "Image width")->capture_default_str();
    synth->add_option("--height", spec.height, "Image height")->capture_default_str();
    synth->add_option("--clip-dim", spec.clip_dim, "Semantic embedding dimension")->capture_default_str();
    synth->add_option("--dino-dim", spec.dino_dim, "Regularizer embedding dimension")->capture_default_str();
    synth->add_option("--train-views", spec.train_views, "Training views")->capture_default_str();
    synth->add_option("--test-views", spec.test_views, "Held-out views")->capture_default_str();
    synth->add_option("--steps", spec.train_steps, "total_steps in the emitted config")->capture_default_str();
    synth->add_flag("--f16", f16, "Store feature containers as f16");

    std::string config_path, train_output;
    std::vector<std::string> overrides;
    int log_every = 100;
    auto *train = app.add_subcommand("train", "Distill supervision features into a field");
    train->add_option("--config", config_path, "Training config (.json, comments allowed)")->required();
    train->add_option("--set", overrides, "Override a config key, e.g. --set train.gamma=0");
    train->add_option("--output", train_output, "Output directory (overrides the config)");
    train->add_option("--log-every", log_every, "Print every N steps (0: quiet)")->capture_default_str();

    SceneArgs render_args, query_args, eval_args;
    std::string view, mode = "rgb", out;
    double aux_scale = 0.158;
    auto *render = app.add_subcommand("render", "Render RGB or a feature head for one view");
    render_args.add(render, false);
    render->add_option("--view", view, "View id in the pose file")->required();
    render->add_option("--mode", mode, "rgb | semantic | regularizer")->capture_default_str();
    render->add_option("--out", out, "Output (.png for rgb, .fmfc otherwise)")->required();
    render->add_option("--aux-scale", aux_scale, "Scale input for scale-conditioned fields")->capture_default_str();

    std::string queries, canonicals, out_dir;
    std::vector<std::string> labels;
    auto *query = app.add_subcommand("query", "Relevancy maps for text queries in one view");
    query_args.add(query, true);
    query->add_option("--view", view, "View id in the pose file")->required();
    query->add_option("--queries", queries, "Labeled query embeddings")->required();
    query->add_option("--canonicals", canonicals, "Canonical phrase embeddings")->required();
    query->add_option("--label", labels, "Only these labels (default: all)");
    query->add_option("--out-dir", out_dir, "Directory for <view>_<label>.png/.fmfc")->required();
    query->add_option("--aux-scale", aux_scale, "Scale input for scale-conditioned fields")->capture_default_str();

    std::string boxes, masks, legend, report;
    int erode = 3;
    auto *eval = app.add_subcommand("eval", "Detection, segmentation and timing metrics");
    eval_args.add(eval, true);
    eval->add_option("--queries", queries, "Labeled query embeddings")->required();
    eval->add_option("--canonicals", canonicals, "Canonical phrase embeddings")->required();
    eval->add_option("--boxes", boxes, "Box annotations");
    eval->add_option("--masks", masks, "Directory of <view>.png label masks");
    eval->add_option("--legend", legend, "Mask value to label legend");
    eval->add_option("--erode", erode, "Interior erosion radius in pixels")->capture_default_str();
    eval->add_option("--aux-scale", aux_scale, "Scale input for scale-conditioned fields")->capture_default_str();
    eval->add_option("--out", report, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) {
            spec.dtype = f16 ? DType::F16 : DType::F32;
            return cmd_synth(synth_out, spec);
        }
        if (*train)
            return cmd_train(config_path, overrides, train_output, log_every);
        if (*render)
            return cmd_render(render_args, view, mode, out, aux_scale);
        if (*query)
            return cmd_query(query_args, view, queries, canonicals, labels, out_dir, aux_scale);
        if (*eval)
            return cmd_eval(eval_args, queries, canonicals, boxes, masks, legend, erode, aux_scale, report);
    } catch (const Error &e) {
        std::fprintf(stderr, "featsplat: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error &e) {
        std::fprintf(stderr, "featsplat: io: %s\n", e.what());
        return kIoError;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "featsplat: %s\n", e.what());
        return kUnexpected;
    }
    return kUnexpected;
}
