// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "featsplat/common.hpp"

#include <array>
#include <span>
#include <vector>

namespace featsplat {

struct HashGridConfig {
    int levels = 24;
    std::uint32_t table_size = 1u << 20; // entries per level, power of two
    int feat_dim = 8;
    int n_min = 16;
    int n_max = 512;
    int aux_dim = 0;
    Vec3 bounds_min = Vec3::Zero();
    Vec3 bounds_max = Vec3::Ones();

    void validate() const;
    double growth_factor() const;
    int encoding_dim() const { return levels * feat_dim + aux_dim; }
};

/// floor(n_min * b^l).
int level_resolution(const HashGridConfig &config, int level);

/// Table slot of an integer grid corner: dense row-major while (N + 1)^3 fits in
/// the table, otherwise the XOR-of-primes spatial hash modulo the table size.
std::uint32_t hash_corner(const HashGridConfig &config, const std::array<std::uint32_t, 3> &corner, int level);

/// Interpolation record of one query: 8 slots and trilinear weights per level.
struct EncodingCache {
    std::size_t samples = 0;
    int levels = 0;
    std::vector<std::uint32_t> slots;
    std::vector<double> weights;

    bool valid() const { return samples > 0 && slots.size() == samples * std::size_t(levels) * 8; }
};

class HashEncoding {
public:
    HashEncoding() = default;
    explicit HashEncoding(const HashGridConfig &config);

    const HashGridConfig &config() const { return mConfig; }
    int resolution(int level) const { return mResolution.at(std::size_t(level)); }
    std::size_t level_entries(int level) const { return mEntries.at(std::size_t(level)); }
    bool is_dense(int level) const;

    std::span<double> table() { return mTable; }
    std::span<const double> table() const { return mTable; }
    std::span<double> level_table(int level);

    /// Uniform init in [-scale, scale].
    void initialize(std::uint64_t seed, double scale = 1e-4);

    /// Encodes one point; aux values (if any) are appended after the levels.
    VecX encode(const Vec3 &x, std::span<const double> aux = {}) const;

    /// Batch encode. positions is N x 3, aux is N x aux_dim (may be empty when aux_dim == 0).
    RowMatrix encode(const RowMatrix &positions, const RowMatrix &aux, EncodingCache *cache) const;

    /// Adds d(loss)/d(table) into table_grad given d(loss)/d(encoding) for the cached batch.
    void backward(const EncodingCache &cache, const RowMatrix &d_encoding, std::span<double> table_grad) const;

private:
    void locate(const Vec3 &x, int level, std::uint32_t *slots, double *weights) const;

    HashGridConfig mConfig;
    std::vector<int> mResolution;
    std::vector<std::size_t> mEntries;
    std::vector<std::size_t> mOffset;
    std::vector<double> mTable;
};

} // namespace featsplat
