// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"
#include "featsplat/feature_field.hpp"
#include "featsplat/losses.hpp"
#include "featsplat/query.hpp"
#include "featsplat/scene.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace featsplat {

// ---------------------------------------------------------------------------
// Feature container ("FMFC")
//
//   char[4]  magic "FMFC"
//   u32      version (1)
//   u32      width, height, dim
//   u32      dtype (0 = f32, 1 = f16)
//   u32      pyramid block count
//   payload  width * height * dim values, pixel-major (row y, column x, channel)
//   blocks   f32 scale fraction, u32 width, u32 height, payload (same dim/dtype)
//
// All integers and floats little-endian. Blocks are stored by ascending scale.

enum class DType : std::uint32_t { F32 = 0, F16 = 1 };

struct FeatureContainer {
    FeatureMap map; // may be 0 x 0 when only the pyramid is present
    DType dtype = DType::F32;
    std::vector<PyramidLevel> pyramid;
    int dim = 0; // used when map is empty
};

std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t half);

void write_container(const FeatureContainer &container, const std::filesystem::path &path);
FeatureContainer read_container(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Field checkpoint ("FMGS"): header with the full field config, then the
// encoding parameters, then semantic and regularizer head layers (weight
// row-major out x in, then bias). Parameters are little-endian f32.

void write_checkpoint(const FeatureField &field, const std::filesystem::path &path);
FeatureField read_checkpoint(const std::filesystem::path &path);

/// Selection mask sidecar ("FMSL", u32 version, u64 count, one byte per Gaussian).
void write_selection(const std::vector<bool> &mask, const std::filesystem::path &path);
std::vector<bool> read_selection(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Poses: JSON with a convention flag and one entry per image. The internal
// convention is world-to-camera with the camera looking down +z, x right and
// y down. "opengl" poses (camera looks down -z, y up) and camera-to-world
// matrices are converted on load.

struct PoseFrame {
    std::string id;
    Camera camera;
    std::filesystem::path clip;  // feature container with the clip pyramid (optional)
    std::filesystem::path dino;  // feature container with the dino map (optional)
    std::filesystem::path image; // optional
};

struct PoseSet {
    std::vector<PoseFrame> frames;
    const PoseFrame &find(const std::string &id) const;
};

PoseSet read_poses(const std::filesystem::path &path);
void write_poses(const PoseSet &poses, const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Text formats. Lines starting with '#' and blank lines are ignored; fields are
// tab-separated so labels may contain spaces.
//
//   embeddings:  label \t v0 v1 ... vD-1
//   boxes:       view_id \t label \t x0 y0 x1 y1     (inclusive pixel bounds)
//   legend:      index \t label                     (mask PNG value -> class)

std::vector<LabeledEmbedding> read_embeddings(const std::filesystem::path &path);
void write_embeddings(const std::vector<LabeledEmbedding> &entries, const std::filesystem::path &path);

struct BoxAnnotation {
    std::string view_id;
    std::string label;
    Box box;
};

std::vector<BoxAnnotation> read_boxes(const std::filesystem::path &path);
void write_boxes(const std::vector<BoxAnnotation> &boxes, const std::filesystem::path &path);

std::map<int, std::string> read_legend(const std::filesystem::path &path);
void write_legend(const std::map<int, std::string> &legend, const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// PNG (8-bit).

struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> pixels;
};

void write_png(const Image8 &image, const std::filesystem::path &path);
Image8 read_png(const std::filesystem::path &path);

/// Clamps a 3-channel map to [0, 1] and quantizes.
Image8 to_image(const FeatureMap &rgb);

} // namespace featsplat
