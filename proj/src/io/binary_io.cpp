// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace featsplat {

namespace {

constexpr std::uint32_t kContainerVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kSelectionVersion = 1;

class Writer {
public:
    void bytes(const char *p, std::size_t n) { mBuf.append(p, n); }
    void magic(const char (&m)[5]) { bytes(m, 4); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i)
            mBuf.push_back(char((v >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            mBuf.push_back(char((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i)
            mBuf.push_back(char((v >> (8 * i)) & 0xff));
    }
    void f32(float f) {
        std::uint32_t b;
        std::memcpy(&b, &f, 4);
        u32(b);
    }
    void f64(double d) {
        std::uint64_t b;
        std::memcpy(&b, &d, 8);
        u64(b);
    }
    void save(const std::filesystem::path &path) const {
        std::ofstream out(path, std::ios::binary);
        require(bool(out), ErrorKind::Io, "cannot write " + path.string());
        out.write(mBuf.data(), std::streamsize(mBuf.size()));
        require(bool(out), ErrorKind::Io, "failed writing " + path.string());
    }

private:
    std::string mBuf;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path &path) : mPath(path.string()) {
        std::ifstream in(path, std::ios::binary);
        require(bool(in), ErrorKind::Io, "cannot open " + mPath);
        mBuf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    void need(std::size_t n) const {
        require(mPos + n <= mBuf.size(), ErrorKind::Format, "truncated file " + mPath);
    }
    void expect_magic(const char (&m)[5]) {
        need(4);
        require(std::memcmp(mBuf.data() + mPos, m, 4) == 0, ErrorKind::Format,
                mPath + " does not start with magic '" + std::string(m) + "'");
        mPos += 4;
    }
    std::uint64_t uint(int bytes) {
        need(std::size_t(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i)
            v |= std::uint64_t(std::uint8_t(mBuf[mPos + std::size_t(i)])) << (8 * i);
        mPos += std::size_t(bytes);
        return v;
    }
    std::uint16_t u16() { return std::uint16_t(uint(2)); }
    std::uint32_t u32() { return std::uint32_t(uint(4)); }
    std::uint64_t u64() { return uint(8); }
    float f32() {
        const std::uint32_t b = u32();
        float f;
        std::memcpy(&f, &b, 4);
        return f;
    }
    double f64() {
        const std::uint64_t b = u64();
        double d;
        std::memcpy(&d, &b, 8);
        return d;
    }
    void expect_end() const { require(mPos == mBuf.size(), ErrorKind::Format, "trailing bytes in " + mPath); }
    const std::string &path() const { return mPath; }

private:
    std::string mPath;
    std::string mBuf;
    std::size_t mPos = 0;
};

void
write_payload(Writer &w, const FeatureMap &map, DType dtype) {
    const double *p = map.values.data();
    for (Eigen::Index i = 0; i < map.values.size(); ++i) {
        if (dtype == DType::F32)
            w.f32(float(p[i]));
        else
            w.u16(float_to_half(float(p[i])));
    }
}

FeatureMap
read_payload(Reader &r, int width, int height, int dim, DType dtype) {
    const std::size_t count = std::size_t(width) * std::size_t(height) * std::size_t(dim);
    r.need(count * (dtype == DType::F32 ? 4 : 2));
    FeatureMap map(width, height, dim);
    double *p = map.values.data();
    for (std::size_t i = 0; i < count; ++i)
        p[i] = dtype == DType::F32 ? double(r.f32()) : double(half_to_float(r.u16()));
    return map;
}

void
write_mlp(Writer &w, const Mlp &mlp) {
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        const auto &W = mlp.weight(l);
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j)
                w.f32(float(W(i, j)));
        for (Eigen::Index i = 0; i < mlp.bias(l).size(); ++i)
            w.f32(float(mlp.bias(l)[i]));
    }
}

void
read_mlp(Reader &r, Mlp &mlp) {
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        auto &W = mlp.weight(l);
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j)
                W(i, j) = r.f32();
        for (Eigen::Index i = 0; i < mlp.bias(l).size(); ++i)
            mlp.bias(l)[i] = r.f32();
    }
}

} // namespace

std::uint16_t
float_to_half(float value) {
    std::uint32_t b;
    std::memcpy(&b, &value, 4);
    const std::uint16_t sign = std::uint16_t((b >> 16) & 0x8000u);
    const int exp = int((b >> 23) & 0xffu);
    std::uint32_t mant = b & 0x7fffffu;
    if (exp == 255)
        return std::uint16_t(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));
    const int e = exp - 127 + 15;
    if (e >= 31)
        return std::uint16_t(sign | 0x7c00u);
    if (e <= 0) {
        if (e < -10)
            return sign;
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t half = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u)))
            ++half;
        return std::uint16_t(sign | half);
    }
    std::uint32_t half = std::uint32_t(sign) | (std::uint32_t(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u)))
        ++half; // may carry into the exponent, which rounds up correctly
    return std::uint16_t(half);
}

float
half_to_float(std::uint16_t h) {
    const std::uint32_t sign = std::uint32_t(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while (!(mant & 0x400u));
            bits = sign | (std::uint32_t(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void
write_container(const FeatureContainer &c, const std::filesystem::path &path) {
    const int dim = c.map.pixel_count() > 0 ? c.map.dim() : (c.pyramid.empty() ? c.dim : c.pyramid.front().map.dim());
    for (std::size_t i = 0; i < c.pyramid.size(); ++i) {
        require(c.pyramid[i].map.dim() == dim, ErrorKind::Format, "pyramid level dimension differs from container");
        if (i > 0)
            require(c.pyramid[i].scale > c.pyramid[i - 1].scale, ErrorKind::Format,
                    "pyramid blocks must be in ascending scale order");
    }
    Writer w;
    w.magic("FMFC");
    w.u32(kContainerVersion);
    w.u32(std::uint32_t(c.map.width));
    w.u32(std::uint32_t(c.map.height));
    w.u32(std::uint32_t(dim));
    w.u32(std::uint32_t(c.dtype));
    w.u32(std::uint32_t(c.pyramid.size()));
    write_payload(w, c.map, c.dtype);
    for (const auto &level : c.pyramid) {
        w.f32(float(level.scale));
        w.u32(std::uint32_t(level.map.width));
        w.u32(std::uint32_t(level.map.height));
        write_payload(w, level.map, c.dtype);
    }
    w.save(path);
}

FeatureContainer
read_container(const std::filesystem::path &path) {
    Reader r(path);
    r.expect_magic("FMFC");
    const std::uint32_t version = r.u32();
    require(version == kContainerVersion, ErrorKind::Format, "unsupported container version " + std::to_string(version));
    FeatureContainer c;
    const int width = int(r.u32());
    const int height = int(r.u32());
    c.dim = int(r.u32());
    const std::uint32_t dtype = r.u32();
    require(dtype <= 1, ErrorKind::Format, "unknown container dtype " + std::to_string(dtype));
    c.dtype = DType(dtype);
    const std::uint32_t blocks = r.u32();
    c.map = read_payload(r, width, height, c.dim, c.dtype);
    for (std::uint32_t b = 0; b < blocks; ++b) {
        PyramidLevel level;
        level.scale = r.f32();
        const int w = int(r.u32());
        const int h = int(r.u32());
        level.map = read_payload(r, w, h, c.dim, c.dtype);
        if (!c.pyramid.empty())
            require(level.scale > c.pyramid.back().scale, ErrorKind::Format, "pyramid blocks out of scale order");
        c.pyramid.push_back(std::move(level));
    }
    r.expect_end();
    return c;
}

void
write_checkpoint(const FeatureField &field, const std::filesystem::path &path) {
    const FieldConfig &cfg = field.config();
    Writer w;
    w.magic("FMGS");
    w.u32(kCheckpointVersion);
    w.u32(std::uint32_t(cfg.encoding));
    w.u32(std::uint32_t(cfg.grid.levels));
    w.u32(cfg.grid.table_size);
    w.u32(std::uint32_t(cfg.grid.feat_dim));
    w.u32(std::uint32_t(cfg.grid.n_min));
    w.u32(std::uint32_t(cfg.grid.n_max));
    w.u32(std::uint32_t(cfg.grid.aux_dim));
    for (int i = 0; i < 3; ++i)
        w.f64(cfg.grid.bounds_min[i]);
    for (int i = 0; i < 3; ++i)
        w.f64(cfg.grid.bounds_max[i]);
    w.u32(std::uint32_t(cfg.head.hidden_layers));
    w.u32(std::uint32_t(cfg.head.width));
    w.u32(std::uint32_t(cfg.clip_dim));
    w.u32(std::uint32_t(cfg.dino_dim));
    w.u64(cfg.gaussian_count);
    const auto blocks = field.parameter_blocks();
    for (double v : blocks.front())
        w.f32(float(v));
    write_mlp(w, field.semantic_head());
    write_mlp(w, field.regularizer_head());
    w.save(path);
}

FeatureField
read_checkpoint(const std::filesystem::path &path) {
    Reader r(path);
    r.expect_magic("FMGS");
    const std::uint32_t version = r.u32();
    require(version == kCheckpointVersion, ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
    FieldConfig cfg;
    const std::uint32_t kind = r.u32();
    require(kind <= 1, ErrorKind::Format, "unknown encoding kind in checkpoint");
    cfg.encoding = EncodingKind(kind);
    cfg.grid.levels = int(r.u32());
    cfg.grid.table_size = r.u32();
    cfg.grid.feat_dim = int(r.u32());
    cfg.grid.n_min = int(r.u32());
    cfg.grid.n_max = int(r.u32());
    cfg.grid.aux_dim = int(r.u32());
    for (int i = 0; i < 3; ++i)
        cfg.grid.bounds_min[i] = r.f64();
    for (int i = 0; i < 3; ++i)
        cfg.grid.bounds_max[i] = r.f64();
    cfg.head.hidden_layers = int(r.u32());
    cfg.head.width = int(r.u32());
    cfg.clip_dim = int(r.u32());
    cfg.dino_dim = int(r.u32());
    cfg.gaussian_count = std::size_t(r.u64());
    try {
        cfg.validate();
    } catch (const Error &e) {
        fail(ErrorKind::Format, std::string("invalid checkpoint config: ") + e.what());
    }

    FeatureField field(cfg, 0);
    auto blocks = field.parameter_blocks();
    r.need(blocks.front().size() * 4);
    for (double &v : blocks.front())
        v = r.f32();
    read_mlp(r, field.semantic_head());
    read_mlp(r, field.regularizer_head());
    r.expect_end();
    return field;
}

void
write_selection(const std::vector<bool> &mask, const std::filesystem::path &path) {
    Writer w;
    w.magic("FMSL");
    w.u32(kSelectionVersion);
    w.u64(mask.size());
    for (bool b : mask) {
        const char c = b ? 1 : 0;
        w.bytes(&c, 1);
    }
    w.save(path);
}

std::vector<bool>
read_selection(const std::filesystem::path &path) {
    Reader r(path);
    r.expect_magic("FMSL");
    require(r.u32() == kSelectionVersion, ErrorKind::Format, "unsupported selection version");
    const std::uint64_t n = r.u64();
    r.need(std::size_t(n));
    std::vector<bool> mask(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i)
        mask[std::size_t(i)] = r.uint(1) != 0;
    r.expect_end();
    return mask;
}

} // namespace featsplat
