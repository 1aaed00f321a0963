// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/distill.hpp"
#include "featsplat/feature_field.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace featsplat {

/// Everything `featsplat train` needs. Loaded from a JSON file that may contain
/// comments; relative paths are resolved against the file's directory.
struct RunConfig {
    std::filesystem::path scene;
    std::filesystem::path poses;
    std::filesystem::path output;
    std::vector<std::string> views; // empty: every frame in the pose file

    // Feature render resolution. Zero means the camera resolution scaled by render_scale.
    int render_width = 0;
    int render_height = 0;
    double render_scale = 1.0;

    bool select = true;
    SelectionPolicy selection;

    FieldConfig field;
    bool auto_bounds = true; // grid bounds from the scene extent
    TrainConfig train;
};

/// Parses a config document. `key_overrides` are "section.key=value" strings
/// applied before parsing; the value is read as JSON and falls back to a string.
RunConfig parse_run_config(const std::string &text, const std::filesystem::path &base_dir,
                           const std::vector<std::string> &key_overrides = {});
RunConfig load_run_config(const std::filesystem::path &path, const std::vector<std::string> &key_overrides = {});

/// Writes a commented config that parse_run_config reads back to the same values.
std::string format_run_config(const RunConfig &config, const std::filesystem::path &base_dir);

const char *to_string(ClipTargetMode mode);
const char *to_string(EncodingKind kind);

} // namespace featsplat
