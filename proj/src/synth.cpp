// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/synth.hpp"

#include "featsplat/random.hpp"
#include "featsplat/render.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace featsplat {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kShC0 = 0.28209479177387814;
constexpr double kBackdropHalf = 2.2;
constexpr double kBackdropSpacing = 0.2;
constexpr double kPanelSpacing = 0.08;
constexpr double kDetailFraction = 0.6;
// A patch counts object pixels this many times over backdrop pixels.
constexpr double kObjectSalience = 3.0;

float
logit(double p) {
    return float(std::log(p / (1.0 - p)));
}

void
set_color(Gaussian &g, const Vec3 &rgb) {
    for (int c = 0; c < 3; ++c)
        g.sh_coeff(c, 0) = float((rgb[c] - 0.5) / kShC0);
}

Gaussian
flat_gaussian(const Vec3 &pos, double sigma, double thickness, double angle, double opacity, const Vec3 &rgb) {
    Gaussian g;
    for (int i = 0; i < 3; ++i)
        g.mean[std::size_t(i)] = float(pos[i]);
    // Spin about the panel normal (z).
    g.rotation = {float(std::cos(0.5 * angle)), 0.f, 0.f, float(std::sin(0.5 * angle))};
    g.log_scale = {float(std::log(sigma)), float(std::log(sigma)), float(std::log(thickness))};
    g.opacity_logit = logit(opacity);
    set_color(g, rgb);
    return g;
}

/// Orthonormal columns from the QR factorization of a seeded Gaussian matrix.
Eigen::MatrixXd
orthonormal_columns(int rows, int cols, Rng &rng) {
    require(cols <= rows, ErrorKind::InvalidParameter, "embedding dimension too small for the region count");
    Eigen::MatrixXd a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i)
            a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    // Fix signs so the factorization convention does not leak into the output.
    for (int j = 0; j < cols; ++j)
        if (q.col(j).dot(a.col(j)) < 0.0)
            q.col(j) = -q.col(j);
    return q;
}

Camera
orbit_camera(const SynthSpec &spec, double yaw_deg, double pitch_deg) {
    const double yaw = yaw_deg * kPi / 180.0, pitch = pitch_deg * kPi / 180.0;
    const double r = 3.0;
    const Vec3 eye(r * std::sin(yaw) * std::cos(pitch), r * std::sin(pitch), -r * std::cos(yaw) * std::cos(pitch));
    return Camera::look_at(eye, Vec3::Zero(), Vec3(0.0, 1.0, 0.0), spec.focal, spec.width, spec.height);
}

std::string
view_name(const char *prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%02d", prefix, i);
    return buf;
}

} // namespace

std::vector<SynthRegion>
synth_regions() {
    return {
        {"wall", Vec3(0.0, 0.0, 0.0), kBackdropHalf, Vec3(0.62, 0.60, 0.56)},
        {"mug", Vec3(-0.62, -0.38, -0.5), 0.22, Vec3(0.85, 0.15, 0.12)},
        {"book", Vec3(0.58, -0.30, -0.5), 0.30, Vec3(0.15, 0.25, 0.80)},
        {"lamp", Vec3(-0.05, 0.52, -0.5), 0.18, Vec3(0.95, 0.85, 0.20)},
    };
}

std::vector<double>
synth_scales() {
    std::vector<double> s;
    for (int k = 0; k < 7; ++k)
        s.push_back(0.05 * std::pow(10.0, k / 6.0));
    return s;
}

SynthScene
make_synth_scene(const SynthSpec &spec) {
    Rng rng(spec.seed);
    const auto regions = synth_regions();
    SynthScene out;

    auto add = [&](const Gaussian &g, int region) {
        out.scene.gaussians.push_back(g);
        out.region.push_back(region);
    };

    // Structural layer: overlapping flat Gaussians on a regular grid per surface.
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const SynthRegion &reg = regions[r];
        const double spacing = r == 0 ? kBackdropSpacing : kPanelSpacing;
        const int n = int(std::ceil(2.0 * reg.half_size / spacing - 1e-9));
        const double step = 2.0 * reg.half_size / n;
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const Vec3 pos = reg.center + Vec3(-reg.half_size + (i + 0.5) * step, -reg.half_size + (j + 0.5) * step, 0.0);
                const Vec3 rgb = (reg.color.array() + rng.uniform(-0.03, 0.03)).matrix();
                add(flat_gaussian(pos, 0.6 * step, 0.004, rng.uniform(0.0, kPi), rng.uniform(0.85, 0.98), rgb), int(r));
            }
        }
    }
    out.structural = out.scene.size();

    // Detail layer: tiny splats scattered over the same surfaces, slightly in front.
    const std::size_t details =
        std::size_t(std::lround(double(out.structural) * kDetailFraction / (1.0 - kDetailFraction)));
    double total_area = 0.0;
    for (const auto &reg : regions)
        total_area += 4.0 * reg.half_size * reg.half_size;
    for (std::size_t k = 0; k < details; ++k) {
        double pick = rng.uniform(0.0, total_area);
        std::size_t r = 0;
        for (; r + 1 < regions.size(); ++r) {
            const double a = 4.0 * regions[r].half_size * regions[r].half_size;
            if (pick < a)
                break;
            pick -= a;
        }
        const SynthRegion &reg = regions[r];
        const Vec3 pos = reg.center + Vec3(rng.uniform(-reg.half_size, reg.half_size),
                                           rng.uniform(-reg.half_size, reg.half_size), -0.003);
        const Vec3 rgb = (reg.color.array() + rng.uniform(-0.08, 0.08)).matrix();
        add(flat_gaussian(pos, 0.006, 0.003, rng.uniform(0.0, kPi), rng.uniform(0.3, 0.99), rgb), int(r));
    }
    out.scene.select_all();
    return out;
}

std::vector<std::uint8_t>
synth_label_map(const SynthScene &s, const Camera &cam, int region_count) {
    RowMatrix onehot = RowMatrix::Zero(Eigen::Index(s.scene.size()), region_count);
    for (std::size_t i = 0; i < s.scene.size(); ++i)
        onehot(Eigen::Index(i), s.region[i]) = 1.0;
    GaussianScene all = s.scene;
    all.select_all();
    const FeatureMap m = render_features(rasterize(all, cam, {RasterMode::Tiled, false}), onehot);
    std::vector<std::uint8_t> labels(m.pixel_count(), 255);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const auto row = m.values.row(Eigen::Index(p));
        if (row.sum() < 0.5)
            continue;
        Eigen::Index best;
        row.maxCoeff(&best);
        labels[p] = std::uint8_t(best);
    }
    return labels;
}

std::vector<PyramidLevel>
synth_clip_pyramid(const std::vector<std::uint8_t> &labels, int width, int height, const std::vector<VecX> &emb) {
    const int dim = int(emb.front().size());
    const int regions = int(emb.size());
    std::vector<PyramidLevel> pyramid;
    for (double s : synth_scales()) {
        // Patches two cells wide at a one-cell stride, on a cell grid that divides
        // the image evenly so bilinear upsampling puts every cell back in place.
        const double patch = std::max(1.0, s * std::max(width, height));
        const int cw = std::max(1, int(std::lround(2.0 * width / patch)));
        const int ch = std::max(1, int(std::lround(2.0 * height / patch)));
        const double cell_w = double(width) / cw, cell_h = double(height) / ch;
        FeatureMap cells(cw, ch, dim);
        for (int py = 0; py < std::max(1, ch - 1); ++py) {
            for (int px = 0; px < std::max(1, cw - 1); ++px) {
                const int nx = std::min(2, cw - px), ny = std::min(2, ch - py);
                std::vector<double> score(std::size_t(regions), 0.0);
                for (int y = 0; y < height; ++y) {
                    const double cy = (y + 0.5) / cell_h;
                    if (cy < py || cy >= py + ny)
                        continue;
                    for (int x = 0; x < width; ++x) {
                        const double cx = (x + 0.5) / cell_w;
                        const std::uint8_t l = labels[std::size_t(y) * width + x];
                        if (cx >= px && cx < px + nx && l < regions)
                            score[l] += l == 0 ? 1.0 : kObjectSalience;
                    }
                }
                const int winner = int(std::max_element(score.begin(), score.end()) - score.begin());
                for (int cy = py; cy < py + ny; ++cy)
                    for (int cx = px; cx < px + nx; ++cx)
                        cells.pixel(cx, cy) += emb[std::size_t(winner)].transpose();
            }
        }
        pyramid.push_back({s, normalized_pixels(cells)});
    }
    return pyramid;
}

SynthFiles
write_synth_fixture(const SynthSpec &spec, const fs::path &dir) {
    require(spec.width > 0 && spec.height > 0 && spec.train_views > 0 && spec.test_views > 0,
            ErrorKind::InvalidParameter, "synthetic spec needs positive sizes and view counts");
    fs::create_directories(dir / "features");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");

    const auto regions = synth_regions();
    const int R = int(regions.size());
    SynthFiles files;
    files.dir = dir;
    const SynthScene s = make_synth_scene(spec);
    files.gaussians = s.scene.size();

    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    const Eigen::MatrixXd clip_basis = orthonormal_columns(spec.clip_dim, R + int(kCanonicalPhrases.size()), rng);
    const Eigen::MatrixXd dino_basis = orthonormal_columns(spec.dino_dim, R, rng);
    std::vector<VecX> region_clip;
    for (int r = 0; r < R; ++r)
        region_clip.push_back(clip_basis.col(r));

    files.scene = dir / "scene.ply";
    save_scene_ply(s.scene, files.scene);

    std::vector<LabeledEmbedding> queries, canonicals;
    for (int r = 0; r < R; ++r)
        queries.push_back({regions[std::size_t(r)].label, region_clip[std::size_t(r)]});
    for (std::size_t c = 0; c < kCanonicalPhrases.size(); ++c)
        canonicals.push_back({kCanonicalPhrases[c], clip_basis.col(R + int(c))});
    files.queries = dir / "queries.tsv";
    files.canonicals = dir / "canonicals.tsv";
    write_embeddings(queries, files.queries);
    write_embeddings(canonicals, files.canonicals);

    std::map<int, std::string> legend;
    for (int r = 0; r < R; ++r)
        legend[r] = regions[std::size_t(r)].label;
    files.legend = dir / "legend.tsv";
    write_legend(legend, files.legend);

    RowMatrix onehot = RowMatrix::Zero(Eigen::Index(s.scene.size()), R);
    for (std::size_t i = 0; i < s.scene.size(); ++i)
        onehot(Eigen::Index(i), s.region[i]) = 1.0;

    auto render_view = [&](const Camera &cam, const std::string &id, PoseFrame &frame) {
        frame.id = id;
        frame.camera = cam;
        frame.image = dir / "images" / (id + ".png");
        write_png(to_image(render_rgb(s.scene, cam)), frame.image);
        return synth_label_map(s, cam, R);
    };

    PoseSet train;
    const int cols = std::max(1, (spec.train_views + 2) / 3);
    for (int i = 0; i < spec.train_views; ++i) {
        const int row = i / cols, col = i % cols;
        const double yaw = cols > 1 ? -22.0 + 44.0 * col / (cols - 1) : 0.0;
        const double pitch = -10.0 + 10.0 * (row % 3);
        PoseFrame frame;
        const Camera cam = orbit_camera(spec, yaw, pitch);
        const auto labels = render_view(cam, view_name("train", i), frame);

        FeatureContainer clip;
        clip.dtype = spec.dtype;
        clip.dim = spec.clip_dim;
        clip.pyramid = synth_clip_pyramid(labels, spec.width, spec.height, region_clip);
        frame.clip = dir / "features" / (frame.id + "_clip.fmfc");
        write_container(clip, frame.clip);

        // Dino stand-in: region one-hots blended like any other feature, then embedded.
        const FeatureMap blend = render_features(rasterize(s.scene, cam, {RasterMode::Tiled, false}), onehot);
        FeatureContainer dino;
        dino.dtype = spec.dtype;
        dino.map = FeatureMap(spec.width, spec.height, spec.dino_dim);
        dino.map.values = blend.values * dino_basis.transpose();
        dino.dim = spec.dino_dim;
        frame.dino = dir / "features" / (frame.id + "_dino.fmfc");
        write_container(dino, frame.dino);
        train.frames.push_back(std::move(frame));
    }
    files.train_poses = dir / "poses_train.json";
    write_poses(train, files.train_poses);

    PoseSet test;
    std::vector<BoxAnnotation> boxes;
    files.masks = dir / "masks";
    for (int i = 0; i < spec.test_views; ++i) {
        const double yaw = rng.uniform(-18.0, 18.0), pitch = rng.uniform(-9.0, 9.0);
        PoseFrame frame;
        const Camera cam = orbit_camera(spec, yaw, pitch);
        const auto labels = render_view(cam, view_name("test", i), frame);
        write_png(Image8{spec.width, spec.height, 1, labels}, files.masks / (frame.id + ".png"));
        for (int r = 1; r < R; ++r) {
            Box b{spec.width, spec.height, -1, -1};
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x)
                    if (labels[std::size_t(y) * spec.width + x] == r)
                        b = {std::min(b.x0, x), std::min(b.y0, y), std::max(b.x1, x), std::max(b.y1, y)};
            if (b.x1 > b.x0 && b.y1 > b.y0)
                boxes.push_back({frame.id, regions[std::size_t(r)].label, b});
        }
        test.frames.push_back(std::move(frame));
    }
    files.test_poses = dir / "poses_test.json";
    write_poses(test, files.test_poses);
    files.boxes = dir / "boxes.tsv";
    write_boxes(boxes, files.boxes);
    files.box_count = boxes.size();

    files.config = dir / "train.json";
    std::ofstream cfg(files.config);
    require(bool(cfg), ErrorKind::Io, "cannot write " + files.config.string());
    cfg << format_run_config(synth_run_config(spec, files), dir);
    return files;
}

RunConfig
synth_run_config(const SynthSpec &spec, const SynthFiles &files) {
    RunConfig c;
    c.scene = files.scene;
    c.poses = files.train_poses;
    c.output = files.dir / "run";
    c.field.grid.levels = 8;
    c.field.grid.table_size = 1u << 14;
    c.field.grid.feat_dim = 4;
    c.field.grid.n_min = 16;
    c.field.grid.n_max = 128;
    c.field.head.hidden_layers = 3;
    c.field.head.width = 64;
    c.field.clip_dim = spec.clip_dim;
    c.field.dino_dim = spec.dino_dim;
    c.train.total_steps = spec.train_steps;
    // Same share of warm-up steps as the default 2500 of 4200.
    c.train.pixel_loss_start_step = int(std::lround(spec.train_steps * 2500.0 / 4200.0));
    c.train.seed = spec.seed;
    return c;
}

} // namespace featsplat
