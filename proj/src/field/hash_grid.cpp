// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/hash_grid.hpp"
#include "featsplat/random.hpp"

#include <algorithm>
#include <cmath>

namespace featsplat {

namespace {

constexpr std::uint32_t kPrimes[3] = {1u, 2654435761u, 805459861u};

std::uint64_t
dense_cells(int resolution) {
    const std::uint64_t side = std::uint64_t(resolution) + 1;
    return side * side * side;
}

std::uint32_t
corner_slot(int res, std::uint32_t table_size, const std::array<std::uint32_t, 3> &corner) {
    if (dense_cells(res) <= table_size) {
        const std::uint64_t side = std::uint64_t(res) + 1;
        return std::uint32_t(corner[0] + side * (corner[1] + side * corner[2]));
    }
    const std::uint32_t h = (corner[0] * kPrimes[0]) ^ (corner[1] * kPrimes[1]) ^ (corner[2] * kPrimes[2]);
    return h & (table_size - 1);
}

} // namespace

void
HashGridConfig::validate() const {
    require(levels >= 1, ErrorKind::Configuration, "hash grid needs at least one level");
    require(table_size >= 1 && (table_size & (table_size - 1)) == 0, ErrorKind::Configuration,
            "table size must be a power of two");
    require(feat_dim >= 1, ErrorKind::Configuration, "feature dimension must be positive");
    require(n_min >= 1 && n_min <= n_max, ErrorKind::Configuration, "need 1 <= n_min <= n_max");
    require(aux_dim >= 0, ErrorKind::Configuration, "aux_dim must be non-negative");
    require((bounds_max - bounds_min).minCoeff() > 0.0, ErrorKind::Configuration, "hash grid bounds are empty");
}

double
HashGridConfig::growth_factor() const {
    if (levels <= 1)
        return 1.0;
    return std::exp((std::log(double(n_max)) - std::log(double(n_min))) / double(levels - 1));
}

int
level_resolution(const HashGridConfig &config, int level) {
    require(level >= 0 && level < config.levels, ErrorKind::Index,
            "level " + std::to_string(level) + " outside [0, " + std::to_string(config.levels) + ")");
    if (config.levels == 1)
        return config.n_min;
    // b^l evaluated as exp(l * ln b); the 1e-9 slack keeps exact endpoints such as
    // 16 * 32 = 512 from rounding down to 511.
    const double log_b = (std::log(double(config.n_max)) - std::log(double(config.n_min))) / double(config.levels - 1);
    return int(std::floor(double(config.n_min) * std::exp(double(level) * log_b) + 1e-9));
}

std::uint32_t
hash_corner(const HashGridConfig &config, const std::array<std::uint32_t, 3> &corner, int level) {
    return corner_slot(level_resolution(config, level), config.table_size, corner);
}

HashEncoding::HashEncoding(const HashGridConfig &config) : mConfig(config) {
    config.validate();
    std::size_t offset = 0;
    for (int l = 0; l < config.levels; ++l) {
        mResolution.push_back(level_resolution(config, l));
        const std::size_t entries = std::size_t(std::min<std::uint64_t>(dense_cells(mResolution.back()), config.table_size));
        mEntries.push_back(entries);
        mOffset.push_back(offset);
        offset += entries * std::size_t(config.feat_dim);
    }
    mTable.assign(offset, 0.0);
}

bool
HashEncoding::is_dense(int level) const {
    return dense_cells(resolution(level)) <= mConfig.table_size;
}

std::span<double>
HashEncoding::level_table(int level) {
    return std::span<double>(mTable).subspan(mOffset.at(std::size_t(level)),
                                             mEntries[std::size_t(level)] * std::size_t(mConfig.feat_dim));
}

void
HashEncoding::initialize(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (double &v : mTable)
        v = rng.uniform(-scale, scale);
}

void
HashEncoding::locate(const Vec3 &x, int level, std::uint32_t *slots, double *weights) const {
    const int res = mResolution[std::size_t(level)];
    const Vec3 extent = mConfig.bounds_max - mConfig.bounds_min;
    std::array<std::uint32_t, 3> base{};
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double u = std::clamp((x[a] - mConfig.bounds_min[a]) / extent[a], 0.0, 1.0);
        const double pos = u * res;
        const int cell = std::min(int(std::floor(pos)), res - 1);
        base[a] = std::uint32_t(cell);
        frac[a] = pos - cell;
    }
    for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        std::array<std::uint32_t, 3> corner = base;
        for (int a = 0; a < 3; ++a) {
            const bool hi = (c >> a) & 1;
            corner[a] += hi ? 1u : 0u;
            w *= hi ? frac[a] : 1.0 - frac[a];
        }
        slots[c] = corner_slot(res, mConfig.table_size, corner);
        weights[c] = w;
    }
}

VecX
HashEncoding::encode(const Vec3 &x, std::span<const double> aux) const {
    require(x.allFinite(), ErrorKind::InvalidParameter, "non-finite encode position");
    require(int(aux.size()) == mConfig.aux_dim, ErrorKind::Configuration, "aux input size mismatch");
    const int d = mConfig.feat_dim;
    VecX q = VecX::Zero(mConfig.encoding_dim());
    std::uint32_t slots[8];
    double weights[8];
    for (int l = 0; l < mConfig.levels; ++l) {
        locate(x, l, slots, weights);
        const double *table = mTable.data() + mOffset[std::size_t(l)];
        for (int c = 0; c < 8; ++c)
            for (int k = 0; k < d; ++k)
                q[l * d + k] += weights[c] * table[std::size_t(slots[c]) * d + k];
    }
    for (int k = 0; k < mConfig.aux_dim; ++k)
        q[mConfig.levels * d + k] = aux[std::size_t(k)];
    return q;
}

RowMatrix
HashEncoding::encode(const RowMatrix &positions, const RowMatrix &aux, EncodingCache *cache) const {
    require(positions.cols() == 3, ErrorKind::Configuration, "positions must be N x 3");
    require(positions.allFinite(), ErrorKind::InvalidParameter, "non-finite encode position");
    const std::size_t n = std::size_t(positions.rows());
    if (mConfig.aux_dim > 0)
        require(aux.rows() == positions.rows() && aux.cols() == mConfig.aux_dim, ErrorKind::Configuration,
                "aux input must be N x aux_dim");
    const int d = mConfig.feat_dim;
    const int levels = mConfig.levels;
    RowMatrix q = RowMatrix::Zero(Eigen::Index(n), mConfig.encoding_dim());

    EncodingCache *out = cache;
    if (out) {
        out->samples = n;
        out->levels = levels;
        out->slots.assign(n * levels * 8, 0);
        out->weights.assign(n * levels * 8, 0.0);
    }
    parallel_for(n, 64, [&](std::size_t i0, std::size_t i1) {
        std::uint32_t slots[8];
        double weights[8];
        for (std::size_t i = i0; i < i1; ++i) {
            const Vec3 x = positions.row(Eigen::Index(i)).transpose();
            for (int l = 0; l < levels; ++l) {
                locate(x, l, slots, weights);
                const double *table = mTable.data() + mOffset[std::size_t(l)];
                for (int c = 0; c < 8; ++c)
                    for (int k = 0; k < d; ++k)
                        q(Eigen::Index(i), l * d + k) += weights[c] * table[std::size_t(slots[c]) * d + k];
                if (out) {
                    std::copy(slots, slots + 8, out->slots.begin() + std::ptrdiff_t((i * levels + l) * 8));
                    std::copy(weights, weights + 8, out->weights.begin() + std::ptrdiff_t((i * levels + l) * 8));
                }
            }
            for (int k = 0; k < mConfig.aux_dim; ++k)
                q(Eigen::Index(i), levels * d + k) = aux(Eigen::Index(i), k);
        }
    });
    return q;
}

void
HashEncoding::backward(const EncodingCache &cache, const RowMatrix &d_encoding, std::span<double> table_grad) const {
    require(cache.valid() && cache.levels == mConfig.levels, ErrorKind::Usage,
            "hash encoding backward needs the forward interpolation cache");
    require(std::size_t(d_encoding.rows()) == cache.samples && d_encoding.cols() >= mConfig.levels * mConfig.feat_dim,
            ErrorKind::Configuration, "encoding gradient shape mismatch");
    require(table_grad.size() == mTable.size(), ErrorKind::Configuration, "table gradient size mismatch");
    const int d = mConfig.feat_dim;
    for (std::size_t i = 0; i < cache.samples; ++i) {
        for (int l = 0; l < mConfig.levels; ++l) {
            const std::size_t base = (i * cache.levels + l) * 8;
            double *grad = table_grad.data() + mOffset[std::size_t(l)];
            for (int c = 0; c < 8; ++c) {
                const double w = cache.weights[base + c];
                if (w == 0.0)
                    continue;
                double *entry = grad + std::size_t(cache.slots[base + c]) * d;
                for (int k = 0; k < d; ++k)
                    entry[k] += w * d_encoding(Eigen::Index(i), l * d + k);
            }
        }
    }
}

} // namespace featsplat
