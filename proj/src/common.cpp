// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace featsplat {

const char *
to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid parameter";
    case ErrorKind::DegenerateGaussian: return "degenerate gaussian";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Annotation: return "annotation error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Divergence: return "numerical divergence";
    case ErrorKind::Io: return "io error";
    }
    return "error";
}

FeatureMap
normalized_pixels(const FeatureMap &map) {
    FeatureMap out = map;
    for (Eigen::Index p = 0; p < out.values.rows(); ++p) {
        const double n = out.values.row(p).norm();
        if (n < 1e-12)
            out.values.row(p).setZero();
        else
            out.values.row(p) /= n;
    }
    return out;
}

void
parallel_for(std::size_t count, std::size_t grain, const std::function<void(std::size_t, std::size_t)> &fn) {
    if (count == 0)
        return;
    grain = std::max<std::size_t>(grain, 1);
    const std::size_t chunks = (count + grain - 1) / grain;
    const std::size_t workers = std::min<std::size_t>(chunks, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c)
            fn(c * grain, std::min(count, (c + 1) * grain));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < chunks; c = next++)
                fn(c * grain, std::min(count, (c + 1) * grain));
        });
    }
    for (auto &t : pool)
        t.join();
}

} // namespace featsplat
