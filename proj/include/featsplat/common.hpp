// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace featsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

/// Row-major dynamic matrix; one row per item (pixel, Gaussian, sample).
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
    InvalidParameter,
    DegenerateGaussian,
    Configuration,
    Format,
    Usage,
    Index,
    Annotation,
    Training,
    Divergence,
    Io,
};

const char *to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), mKind(kind) {}

    ErrorKind kind() const noexcept { return mKind; }

private:
    ErrorKind mKind;
};

[[noreturn]] inline void
fail(ErrorKind kind, const std::string &message) {
    throw Error(kind, message);
}

inline void
require(bool condition, ErrorKind kind, const std::string &message) {
    if (!condition)
        fail(kind, message);
}

/// Dense W x H x D map. Pixel (x, y) lives in row y * width + x.
struct FeatureMap {
    int width = 0;
    int height = 0;
    RowMatrix values;

    FeatureMap() = default;
    FeatureMap(int w, int h, int dim) : width(w), height(h), values(RowMatrix::Zero(std::size_t(w) * h, dim)) {}

    int dim() const { return int(values.cols()); }
    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
    std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }

    auto pixel(int x, int y) { return values.row(Eigen::Index(index(x, y))); }
    auto pixel(int x, int y) const { return values.row(Eigen::Index(index(x, y))); }

    bool same_shape(const FeatureMap &other) const {
        return width == other.width && height == other.height && dim() == other.dim();
    }
};

/// Per-pixel unit normalization; pixels with norm below 1e-12 become zero.
FeatureMap normalized_pixels(const FeatureMap &map);

/// Runs fn(begin, end) over [0, count) in contiguous chunks. Chunk boundaries depend
/// only on count and grain, never on the worker count, so per-chunk outputs are
/// reproducible.
void parallel_for(std::size_t count, std::size_t grain, const std::function<void(std::size_t, std::size_t)> &fn);

} // namespace featsplat
