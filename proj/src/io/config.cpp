// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace featsplat {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads typed keys from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json &doc, std::string name) : mName(std::move(name)) {
        if (doc.is_null())
            return;
        require(doc.is_object(), ErrorKind::Configuration, "'" + mName + "' must be an object");
        mDoc = &doc;
    }

    template <typename T>
    void read(const char *key, T &value) {
        mKnown.insert(key);
        if (!mDoc || !mDoc->contains(key))
            return;
        try {
            value = (*mDoc)[key].get<T>();
        } catch (const json::exception &) {
            fail(ErrorKind::Configuration, "bad value for '" + path(key) + "'");
        }
    }

    bool has(const char *key) const { return mDoc && mDoc->contains(key); }
    const json &child(const char *key) {
        mKnown.insert(key);
        static const json null;
        return has(key) ? (*mDoc)[key] : null;
    }
    std::string path(const char *key) const { return mName.empty() ? key : mName + "." + key; }

    void finish() const {
        if (!mDoc)
            return;
        for (auto it = mDoc->begin(); it != mDoc->end(); ++it)
            require(mKnown.count(it.key()) > 0, ErrorKind::Configuration, "unknown config key '" + path(it.key().c_str()) + "'");
    }

private:
    const json *mDoc = nullptr;
    std::string mName;
    std::set<std::string> mKnown;
};

Vec3
read_vec3(const json &j, const std::string &what) {
    require(j.is_array() && j.size() == 3, ErrorKind::Configuration, "'" + what + "' must be a 3-element array");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        require(j[i].is_number(), ErrorKind::Configuration, "'" + what + "' entries must be numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

ClipTargetMode
parse_clip_target(const std::string &s) {
    if (s == "hybrid")
        return ClipTargetMode::Hybrid;
    if (s == "single_scale")
        return ClipTargetMode::SingleScale;
    if (s == "scale_conditioned")
        return ClipTargetMode::ScaleConditioned;
    fail(ErrorKind::Configuration, "clip_target must be hybrid, single_scale or scale_conditioned, got '" + s + "'");
}

EncodingKind
parse_encoding(const std::string &s) {
    if (s == "hash_grid")
        return EncodingKind::HashGrid;
    if (s == "per_gaussian")
        return EncodingKind::PerGaussian;
    fail(ErrorKind::Configuration, "encoding must be hash_grid or per_gaussian, got '" + s + "'");
}

void
apply_override(json &doc, const std::string &assignment) {
    const std::size_t eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::Usage, "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception &) {
        value = text;
    }
    std::string pointer;
    std::istringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.'))
        pointer += "/" + part;
    doc[json::json_pointer(pointer)] = value;
}

fs::path
resolve(const fs::path &base, const std::string &p) {
    if (p.empty())
        return {};
    const fs::path path(p);
    return path.is_relative() ? base / path : path;
}

std::string
relative_string(const fs::path &p, const fs::path &base) {
    if (p.empty())
        return {};
    std::error_code ec;
    const fs::path rel = fs::relative(p, base, ec);
    return (ec || rel.empty()) ? p.generic_string() : rel.generic_string();
}

} // namespace

const char *
to_string(ClipTargetMode mode) {
    switch (mode) {
    case ClipTargetMode::Hybrid: return "hybrid";
    case ClipTargetMode::SingleScale: return "single_scale";
    case ClipTargetMode::ScaleConditioned: return "scale_conditioned";
    }
    return "?";
}

const char *
to_string(EncodingKind kind) {
    return kind == EncodingKind::HashGrid ? "hash_grid" : "per_gaussian";
}

RunConfig
parse_run_config(const std::string &text, const fs::path &base_dir, const std::vector<std::string> &key_overrides) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, true);
    } catch (const json::exception &e) {
        fail(ErrorKind::Configuration, std::string("config does not parse: ") + e.what());
    }
    require(doc.is_object(), ErrorKind::Configuration, "config must be a JSON object");
    for (const auto &o : key_overrides)
        apply_override(doc, o);

    RunConfig cfg;
    Section top(doc, "");
    std::string scene, poses, output;
    top.read("scene", scene);
    top.read("poses", poses);
    top.read("output", output);
    top.read("views", cfg.views);
    top.read("seed", cfg.train.seed);
    require(!scene.empty() && !poses.empty(), ErrorKind::Configuration, "config needs 'scene' and 'poses'");
    cfg.scene = resolve(base_dir, scene);
    cfg.poses = resolve(base_dir, poses);
    cfg.output = resolve(base_dir, output.empty() ? std::string("run") : output);

    Section render(top.child("render"), "render");
    render.read("width", cfg.render_width);
    render.read("height", cfg.render_height);
    render.read("scale", cfg.render_scale);
    render.finish();
    require(cfg.render_width >= 0 && cfg.render_height >= 0 && cfg.render_scale > 0.0, ErrorKind::Configuration,
            "render size must be positive");
    require((cfg.render_width == 0) == (cfg.render_height == 0), ErrorKind::Configuration,
            "render.width and render.height must be given together");

    Section sel(top.child("selection"), "selection");
    sel.read("enabled", cfg.select);
    sel.read("min_radius_px", cfg.selection.min_radius_px);
    sel.read("target_low", cfg.selection.target_low);
    sel.read("target_high", cfg.selection.target_high);
    sel.finish();
    require(cfg.selection.target_low <= cfg.selection.target_high, ErrorKind::Configuration,
            "selection band is empty");

    HashGridConfig &grid = cfg.field.grid;
    Section g(top.child("grid"), "grid");
    g.read("levels", grid.levels);
    g.read("table_size", grid.table_size);
    g.read("feat_dim", grid.feat_dim);
    g.read("n_min", grid.n_min);
    g.read("n_max", grid.n_max);
    bool aux_given = g.has("aux_dim");
    g.read("aux_dim", grid.aux_dim);
    const json &bounds = g.child("bounds");
    if (!bounds.is_null() && !(bounds.is_string() && bounds.get<std::string>() == "auto")) {
        Section b(bounds, "grid.bounds");
        const json &lo = b.child("min");
        const json &hi = b.child("max");
        b.finish();
        grid.bounds_min = read_vec3(lo, "grid.bounds.min");
        grid.bounds_max = read_vec3(hi, "grid.bounds.max");
        cfg.auto_bounds = false;
    }
    g.finish();

    Section h(top.child("head"), "head");
    h.read("hidden_layers", cfg.field.head.hidden_layers);
    h.read("width", cfg.field.head.width);
    h.finish();

    Section f(top.child("field"), "field");
    std::string encoding = to_string(cfg.field.encoding);
    f.read("encoding", encoding);
    f.read("clip_dim", cfg.field.clip_dim);
    f.read("dino_dim", cfg.field.dino_dim);
    f.finish();
    cfg.field.encoding = parse_encoding(encoding);

    TrainConfig &t = cfg.train;
    Section tr(top.child("train"), "train");
    tr.read("lambda", t.lambda);
    tr.read("gamma", t.gamma);
    tr.read("delta", t.delta);
    tr.read("kernel", t.kernel);
    tr.read("total_steps", t.total_steps);
    tr.read("pixel_loss_start_step", t.pixel_loss_start_step);
    tr.read("lr_init", t.lr_init);
    tr.read("lr_final", t.lr_final);
    tr.read("weight_decay", t.weight_decay);
    tr.read("beta1", t.beta1);
    tr.read("beta2", t.beta2);
    tr.read("epsilon", t.epsilon);
    std::string clip_target = to_string(t.clip_target);
    tr.read("clip_target", clip_target);
    tr.read("single_scale_level", t.single_scale_level);
    tr.read("stop_after", t.stop_after);
    tr.finish();
    top.finish();
    t.clip_target = parse_clip_target(clip_target);

    if (t.clip_target == ClipTargetMode::ScaleConditioned && !aux_given)
        grid.aux_dim = 1;
    t.validate();
    return cfg;
}

RunConfig
load_run_config(const fs::path &path, const std::vector<std::string> &key_overrides) {
    std::ifstream in(path);
    require(bool(in), ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.parent_path(), key_overrides);
}

std::string
format_run_config(const RunConfig &c, const fs::path &base_dir) {
    ordered_json doc;
    doc["scene"] = relative_string(c.scene, base_dir);
    doc["poses"] = relative_string(c.poses, base_dir);
    doc["output"] = relative_string(c.output, base_dir);
    if (!c.views.empty())
        doc["views"] = c.views;
    doc["seed"] = c.train.seed;
    doc["render"] = {{"width", c.render_width}, {"height", c.render_height}, {"scale", c.render_scale}};
    doc["selection"] = {{"enabled", c.select},
                        {"min_radius_px", c.selection.min_radius_px},
                        {"target_low", c.selection.target_low},
                        {"target_high", c.selection.target_high}};
    const HashGridConfig &g = c.field.grid;
    doc["grid"] = {{"levels", g.levels},   {"table_size", g.table_size}, {"feat_dim", g.feat_dim},
                   {"n_min", g.n_min},     {"n_max", g.n_max},           {"aux_dim", g.aux_dim}};
    if (c.auto_bounds)
        doc["grid"]["bounds"] = "auto";
    else
        doc["grid"]["bounds"] = {{"min", {g.bounds_min[0], g.bounds_min[1], g.bounds_min[2]}},
                                 {"max", {g.bounds_max[0], g.bounds_max[1], g.bounds_max[2]}}};
    doc["head"] = {{"hidden_layers", c.field.head.hidden_layers}, {"width", c.field.head.width}};
    doc["field"] = {{"encoding", to_string(c.field.encoding)},
                    {"clip_dim", c.field.clip_dim},
                    {"dino_dim", c.field.dino_dim}};
    const TrainConfig &t = c.train;
    doc["train"] = {{"lambda", t.lambda},
                    {"gamma", t.gamma},
                    {"delta", t.delta},
                    {"kernel", t.kernel},
                    {"total_steps", t.total_steps},
                    {"pixel_loss_start_step", t.pixel_loss_start_step},
                    {"lr_init", t.lr_init},
                    {"lr_final", t.lr_final},
                    {"weight_decay", t.weight_decay},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"epsilon", t.epsilon},
                    {"clip_target", to_string(t.clip_target)},
                    {"single_scale_level", t.single_scale_level},
                    {"stop_after", t.stop_after}};
    return "// featsplat training config. Paths are relative to this file.\n"
           "// render.width/height of 0 use the pose resolution times render.scale.\n" +
           doc.dump(2) + "\n";
}

} // namespace featsplat
