// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Per-pixel brute-force evaluation of the blend sum, written independently of
// the tile renderer: every pixel scans the whole splat list, recomputes the
// footprint from the explicit covariance, and keeps transmittance as a
// running product of (1 - alpha) terms.

#include "splatopt/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace splatopt::oracle {

struct ReferencePixel {
    std::vector<double> color;
    double T = 1.0;
    std::uint32_t contributors = 0;
};

inline double footprint_radius(const Splat &s) {
    const double a = s.conic[0], b = s.conic[1], c = s.conic[2];
    const double det = a * c - b * b;
    if (det <= 0.0) return INFINITY;
    // Covariance is the inverse of the conic matrix.
    const double sxx = c / det, sxy = -b / det, syy = a / det;
    const double tr = sxx + syy;
    const double disc = std::sqrt(std::max(0.0, (sxx - syy) * (sxx - syy) / 4.0 + sxy * sxy));
    return 3.0 * std::sqrt(tr / 2.0 + disc);
}

inline ReferencePixel reference_pixel(const Scene &scene, std::uint32_t px, std::uint32_t py) {
    const std::uint32_t tx = px / scene.tile[0], ty = py / scene.tile[1];
    const double x0 = double(tx) * scene.tile[0];
    const double x1 = std::min<double>(double(tx + 1) * scene.tile[0], scene.width) - 1.0;
    const double y0 = double(ty) * scene.tile[1];
    const double y1 = std::min<double>(double(ty + 1) * scene.tile[1], scene.height) - 1.0;

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < scene.splats.size(); ++i) {
        const Splat &s = scene.splats[i];
        const double r = footprint_radius(s);
        if (s.xy[0] + r < x0 || s.xy[0] - r > x1 || s.xy[1] + r < y0 || s.xy[1] - r > y1) continue;
        members.push_back(i);
    }
    std::sort(members.begin(), members.end(), [&](std::size_t l, std::size_t r) {
        const Splat &a = scene.splats[l], &b = scene.splats[r];
        return a.depth != b.depth ? a.depth < b.depth : a.id < b.id;
    });

    ReferencePixel out;
    out.color.assign(scene.channels, 0.0);
    std::vector<double> kept_alpha;
    for (std::size_t i : members) {
        const Splat &s = scene.splats[i];
        const double dx = s.xy[0] - px, dy = s.xy[1] - py;
        const double q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
        if (q < 0.0) continue;
        const double alpha = std::min(0.99, s.opacity * std::exp(-0.5 * q));
        if (alpha < 1.0 / 255.0) continue;
        const double T_before = std::accumulate(kept_alpha.begin(), kept_alpha.end(), 1.0,
                                                [](double t, double a) { return t * (1.0 - a); });
        if (T_before * (1.0 - alpha) < 1e-4) break;
        for (std::uint32_t ch = 0; ch < scene.channels; ++ch) out.color[ch] += s.color[ch] * alpha * T_before;
        kept_alpha.push_back(alpha);
    }
    out.T = std::accumulate(kept_alpha.begin(), kept_alpha.end(), 1.0,
                            [](double t, double a) { return t * (1.0 - a); });
    out.contributors = static_cast<std::uint32_t>(kept_alpha.size());
    for (std::uint32_t ch = 0; ch < scene.channels; ++ch) out.color[ch] += out.T * scene.background[ch];
    return out;
}

// Largest absolute difference between the tile render and the reference.
inline double max_reference_error(const Scene &scene, const RenderOutput &out) {
    double worst = 0.0;
    for (std::uint32_t y = 0; y < scene.height; ++y) {
        for (std::uint32_t x = 0; x < scene.width; ++x) {
            const auto ref = reference_pixel(scene, x, y);
            const std::size_t p = std::size_t{y} * scene.width + x;
            for (std::uint32_t ch = 0; ch < scene.channels; ++ch)
                worst = std::max(worst, std::abs(ref.color[ch] - out.image[p * scene.channels + ch]));
            worst = std::max(worst, std::abs(ref.T - out.final_T[p]));
            if (ref.contributors != out.n_contrib[p]) worst = std::max(worst, 1.0);
        }
    }
    return worst;
}

} // namespace splatopt::oracle
