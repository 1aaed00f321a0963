// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/distill.hpp"
#include "featsplat/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <iomanip>
#include <limits>

namespace featsplat {

namespace {

// Geometry is frozen, so blend weights of a view never change. Gaussians are
// renumbered densely over the ones that reach this view.
struct ViewContext {
    std::vector<std::uint32_t> ids; // local -> scene index
    RowMatrix positions;
    BlendCache cache;
};

ViewContext
build_view(const GaussianScene &scene, const Camera &cam) {
    const BlendCache full = rasterize(scene, cam, {RasterMode::Tiled, true});
    std::vector<std::uint32_t> local(scene.size(), std::numeric_limits<std::uint32_t>::max());
    ViewContext view;
    std::vector<std::vector<PixelContribution>> per_pixel(std::size_t(full.width()) * full.height());
    for (std::size_t p = 0; p < per_pixel.size(); ++p) {
        for (auto c : full.pixel(p)) {
            if (local[c.gaussian_index] == std::numeric_limits<std::uint32_t>::max()) {
                local[c.gaussian_index] = std::uint32_t(view.ids.size());
                view.ids.push_back(c.gaussian_index);
            }
            c.gaussian_index = local[c.gaussian_index];
            per_pixel[p].push_back(c);
        }
    }
    view.cache = BlendCache(full.width(), full.height(), view.ids.size());
    view.cache.assign(std::move(per_pixel));
    view.positions.resize(Eigen::Index(view.ids.size()), 3);
    for (std::size_t k = 0; k < view.ids.size(); ++k)
        view.positions.row(Eigen::Index(k)) = scene.gaussians[view.ids[k]].position().transpose();
    return view;
}

ObjectiveEvaluation
evaluate_view(const ViewContext &view, const FeatureField &field, const FeatureMap &clip_target,
              const FeatureMap &dino_target, const TrainConfig &config, int step, const RowMatrix &aux) {
    RowMatrix aux_rows;
    if (field.config().grid.aux_dim > 0) {
        require(aux.rows() == 1, ErrorKind::Configuration, "aux-conditioned field needs one aux row per step");
        aux_rows = aux.replicate(Eigen::Index(view.ids.size()), 1);
    }
    const FieldForward fwd = field.forward(view.positions, view.ids, aux_rows);
    const FeatureMap clip = render_features(view.cache, fwd.semantic);
    const FeatureMap dino = render_features(view.cache, fwd.regularizer);

    ObjectiveEvaluation eval;
    FeatureMap g_clip, g_dino, g_pixel;
    eval.components.clip = clip_loss(clip, clip_target, config.delta, &g_clip);
    eval.components.dino = dino_loss(dino, dino_target, &g_dino);
    const LossWeights weights = config.loss_weights();
    const double gamma = effective_gamma(step, weights);
    if (gamma > 0.0)
        eval.components.pixel = pixel_alignment_loss(clip, dino, config.kernel, &g_pixel);
    eval.total = total_loss(eval.components, step, weights);
    if (!std::isfinite(eval.total))
        fail(ErrorKind::Divergence, "non-finite loss at step " + std::to_string(step));

    FeatureMap d_clip = g_clip;
    d_clip.values *= config.lambda;
    if (gamma > 0.0)
        d_clip.values += gamma * g_pixel.values;
    FeatureMap d_dino = g_dino;
    d_dino.values *= 1.0 - config.lambda;

    const RowMatrix d_sem = backward_features(view.cache, d_clip);
    const RowMatrix d_reg = backward_features(view.cache, d_dino);
    eval.gradients = field.backward(fwd, d_sem, d_reg);
    return eval;
}

int
coarsest_level(const std::vector<PyramidLevel> &pyramid) {
    int best = 0;
    for (std::size_t i = 1; i < pyramid.size(); ++i)
        if (pyramid[i].scale > pyramid[std::size_t(best)].scale)
            best = int(i);
    return best;
}

} // namespace

void
TrainConfig::validate() const {
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::Configuration, "lambda must lie in [0, 1]");
    require(gamma >= 0.0, ErrorKind::Configuration, "gamma must be non-negative");
    require(delta > 0.0, ErrorKind::Configuration, "huber delta must be positive");
    require(kernel >= 3 && kernel % 2 == 1, ErrorKind::Configuration, "kernel must be odd and >= 3");
    require(total_steps >= 0, ErrorKind::Configuration, "total_steps must be non-negative");
    require(pixel_loss_start_step >= 0 && pixel_loss_start_step <= total_steps, ErrorKind::Configuration,
            "pixel_loss_start_step must lie in [0, total_steps]");
    require(lr_init > 0.0 && lr_final > 0.0, ErrorKind::Configuration, "learning rates must be positive");
    require(weight_decay >= 0.0, ErrorKind::Configuration, "weight decay must be non-negative");
}

double
learning_rate(const TrainConfig &config, int step) {
    if (config.total_steps <= 1 || step <= 0)
        return config.lr_init;
    if (step >= config.total_steps - 1)
        return config.lr_final;
    const double t = double(step) / double(config.total_steps - 1);
    return config.lr_init * std::pow(config.lr_final / config.lr_init, t);
}

void
SupervisionPair::validate() const {
    camera.validate();
    require(clip_target.width == dino_target.width && clip_target.height == dino_target.height, ErrorKind::Format,
            "clip and dino targets differ in resolution");
    require(clip_target.width == camera.width && clip_target.height == camera.height, ErrorKind::Format,
            "targets do not match the training camera resolution");
    for (std::size_t p = 0; p < clip_target.pixel_count(); ++p) {
        const double n = clip_target.values.row(Eigen::Index(p)).norm();
        require(std::abs(n - 1.0) <= 1e-3, ErrorKind::Format, "clip target pixels must be unit norm");
    }
}

SupervisionPair
make_supervision(const Camera &camera, std::vector<PyramidLevel> pyramid, const FeatureMap &dino,
                 const TrainConfig &config, int width, int height) {
    require(!pyramid.empty(), ErrorKind::Format, "supervision needs a clip pyramid");
    SupervisionPair pair;
    pair.camera = camera.rescaled(width, height);
    switch (config.clip_target) {
    case ClipTargetMode::Hybrid:
    case ClipTargetMode::ScaleConditioned:
        pair.clip_target = resample_bilinear(build_hybrid_clip(pyramid), width, height);
        break;
    case ClipTargetMode::SingleScale: {
        const int level = config.single_scale_level < 0 ? coarsest_level(pyramid) : config.single_scale_level;
        require(level < int(pyramid.size()), ErrorKind::Configuration, "single_scale_level out of range");
        pair.clip_target = resample_bilinear(pyramid[std::size_t(level)].map, width, height);
        break;
    }
    }
    pair.clip_target = normalized_pixels(pair.clip_target);
    pair.dino_target = resample_bilinear(dino, width, height);
    if (config.clip_target == ClipTargetMode::ScaleConditioned) {
        for (auto &level : pyramid)
            level.map = normalized_pixels(resample_bilinear(level.map, width, height));
        pair.clip_pyramid = std::move(pyramid);
    }
    return pair;
}

SelectionResult
select_gaussians(const GaussianScene &scene, std::span<const Camera> cameras, const SelectionPolicy &policy) {
    const std::size_t n = scene.size();
    SelectionResult result;
    result.mask.assign(n, false);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        for (const Camera &cam : cameras) {
            const auto p = project_gaussian(scene.gaussians[i], cam, std::uint32_t(i));
            if (p && p->radius > policy.min_radius_px) {
                candidates.push_back(i);
                break;
            }
        }
    }
    result.size_qualified = candidates.size();
    if (candidates.empty())
        fail(ErrorKind::Training, "gaussian selection is empty: none of " + std::to_string(n) +
                                      " gaussians project wider than " + std::to_string(policy.min_radius_px) +
                                      " px in any of " + std::to_string(cameras.size()) + " training views");

    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return scene.gaussians[a].opacity() > scene.gaussians[b].opacity();
    });

    // Each distinct opacity among candidates is a possible threshold; keeping every
    // candidate at or above it selects a prefix of the sorted list.
    const double mid = 0.5 * (policy.target_low + policy.target_high);
    std::size_t best_count = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const bool group_end = k + 1 == candidates.size() || scene.gaussians[candidates[k + 1]].opacity() <
                                                                   scene.gaussians[candidates[k]].opacity();
        if (!group_end)
            continue;
        const double f = double(k + 1) / double(n);
        const double outside = std::max({0.0, policy.target_low - f, f - policy.target_high});
        // Inside the band prefer the middle; outside it prefer the nearest edge.
        const double score = outside > 0.0 ? 1.0 + outside : std::abs(f - mid);
        if (score < best_score || (score == best_score && k + 1 > best_count)) {
            best_score = score;
            best_count = k + 1;
        }
    }
    for (std::size_t k = 0; k < best_count; ++k)
        result.mask[candidates[k]] = true;
    result.opacity_threshold = scene.gaussians[candidates[best_count - 1]].opacity();
    result.fraction = double(best_count) / double(n);
    std::ostringstream note;
    note << "selected " << best_count << " of " << n << " gaussians (" << std::fixed << std::setprecision(1)
         << 100.0 * result.fraction << "%), opacity >= " << std::setprecision(4) << result.opacity_threshold;
    if (result.fraction < policy.target_low || result.fraction > policy.target_high)
        note << "; target band " << 100.0 * policy.target_low << "-" << 100.0 * policy.target_high
             << "% not achievable, using nearest";
    result.note = note.str();
    return result;
}

RAdam::RAdam(std::span<const std::span<double>> params, double beta1, double beta2, double epsilon, double weight_decay)
    : mBeta1(beta1), mBeta2(beta2), mEps(epsilon), mWeightDecay(weight_decay) {
    for (const auto &p : params) {
        mM.push_back(VecX::Zero(Eigen::Index(p.size())));
        mV.push_back(VecX::Zero(Eigen::Index(p.size())));
    }
}

void
RAdam::step(std::span<const std::span<double>> params, const FieldGradients &grads, double lr) {
    require(params.size() == mM.size() && grads.blocks.size() == mM.size(), ErrorKind::Usage,
            "optimizer parameter layout changed");
    ++mStep;
    const double t = double(mStep);
    const double bc1 = 1.0 - std::pow(mBeta1, t);
    const double bc2 = 1.0 - std::pow(mBeta2, t);
    const double rho_inf = 2.0 / (1.0 - mBeta2) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * std::pow(mBeta2, t) / bc2;
    const bool rectified = rho_t > 5.0;
    const double rect = rectified ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                                              ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                                  : 0.0;
    const double sqrt_bc2 = std::sqrt(bc2);
    for (std::size_t b = 0; b < params.size(); ++b) {
        double *p = params[b].data();
        const double *g = grads.blocks[b].data();
        double *m = mM[b].data();
        double *v = mV[b].data();
        const std::size_t size = params[b].size();
        for (std::size_t i = 0; i < size; ++i) {
            const double grad = g[i] + mWeightDecay * p[i];
            m[i] = mBeta1 * m[i] + (1.0 - mBeta1) * grad;
            v[i] = mBeta2 * v[i] + (1.0 - mBeta2) * grad * grad;
            const double m_hat = m[i] / bc1;
            if (rectified)
                p[i] -= lr * m_hat * rect * sqrt_bc2 / (std::sqrt(v[i]) + mEps);
            else
                p[i] -= lr * m_hat;
        }
    }
}

std::string
to_json_line(const StepRecord &r) {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "{\"step\":" << r.step << ",\"view\":" << r.view << ",\"clip\":" << r.clip << ",\"dino\":" << r.dino
       << ",\"pixel\":" << r.pixel << ",\"total\":" << r.total << ",\"lr\":" << r.lr
       << ",\"wall_seconds\":" << r.wall_seconds << "}";
    return os.str();
}

ObjectiveEvaluation
evaluate_objective(const GaussianScene &scene, const FeatureField &field, const SupervisionPair &pair,
                   const TrainConfig &config, int step, const RowMatrix &aux, const FeatureMap *clip_target) {
    const ViewContext view = build_view(scene, pair.camera);
    return evaluate_view(view, field, clip_target ? *clip_target : pair.clip_target, pair.dino_target, config, step, aux);
}

TrainResult
train(const GaussianScene &scene, FeatureField &field, const std::vector<SupervisionPair> &data,
      const TrainConfig &config, const StepCallback &on_step) {
    config.validate();
    scene.validate();
    require(!data.empty(), ErrorKind::Training, "training dataset is empty");
    require(scene.selected_count() > 0, ErrorKind::Training, "no gaussians selected for semantic training");
    const bool conditioned = config.clip_target == ClipTargetMode::ScaleConditioned;
    if (conditioned)
        require(field.config().grid.aux_dim == 1, ErrorKind::Configuration,
                "scale-conditioned training needs a field with aux_dim = 1");
    for (const auto &pair : data) {
        pair.validate();
        require(pair.clip_target.dim() == field.config().clip_dim && pair.dino_target.dim() == field.config().dino_dim,
                ErrorKind::Configuration, "target dimensions do not match the field heads");
        if (conditioned)
            require(!pair.clip_pyramid.empty(), ErrorKind::Configuration, "scale-conditioned training needs pyramids");
    }

    std::vector<ViewContext> views;
    views.reserve(data.size());
    for (const auto &pair : data)
        views.push_back(build_view(scene, pair.camera));

    auto params = field.parameter_blocks();
    RAdam optimizer(params, config.beta1, config.beta2, config.epsilon, config.weight_decay);
    Rng rng(config.seed);
    TrainResult result;
    const int last = config.stop_after < 0 ? config.total_steps : std::min(config.stop_after, config.total_steps);
    const auto start = std::chrono::steady_clock::now();

    for (int step = 0; step < last; ++step) {
        const std::size_t v = std::size_t(rng.index(data.size()));
        const SupervisionPair &pair = data[v];
        const FeatureMap *target = &pair.clip_target;
        RowMatrix aux;
        if (conditioned) {
            const std::size_t level = std::size_t(rng.index(pair.clip_pyramid.size()));
            target = &pair.clip_pyramid[level].map;
            aux = RowMatrix::Constant(1, 1, pair.clip_pyramid[level].scale);
        }
        const double lr = learning_rate(config, step);
        ObjectiveEvaluation eval = evaluate_view(views[v], field, *target, pair.dino_target, config, step, aux);
        optimizer.step(params, eval.gradients, lr);

        StepRecord rec;
        rec.step = step;
        rec.view = int(v);
        rec.clip = eval.components.clip;
        rec.dino = eval.components.dino;
        rec.pixel = eval.components.pixel;
        rec.total = eval.total;
        rec.lr = lr;
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(rec);
        if (on_step)
            on_step(rec);
        result.steps_run = step + 1;
    }
    return result;
}

} // namespace featsplat
