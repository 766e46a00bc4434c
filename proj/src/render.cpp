// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/render.hpp"

#include "splatopt/digest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace splatopt {

void validate(const Scene &scene) {
    if (scene.width < 1 || scene.height < 1) throw InvalidScene("image dimensions must be >= 1");
    if (scene.tile[0] < 1 || scene.tile[1] < 1) throw InvalidScene("tile dimensions must be >= 1");
    if (scene.channels < 1) throw InvalidScene("channels must be >= 1");
    if (scene.background.size() != scene.channels) {
        throw InvalidScene("background has " + std::to_string(scene.background.size()) +
                           " entries, expected " + std::to_string(scene.channels));
    }
    for (const Splat &s : scene.splats) {
        const std::string who = "splat " + std::to_string(s.id);
        if (s.color.size() != scene.channels) throw InvalidScene(who + ": wrong color size");
        if (!(s.opacity >= 0.0 && s.opacity <= 1.0)) throw InvalidScene(who + ": opacity outside [0,1]");
        if (!(s.depth > 0.0)) throw InvalidScene(who + ": depth must be > 0");
        const auto [a, b, c] = s.conic;
        // PSD for a symmetric 2x2: non-negative diagonal and determinant.
        if (!(a >= 0.0 && c >= 0.0 && a * c - b * b >= 0.0)) {
            throw InvalidScene(who + ": conic is not positive semidefinite");
        }
        if (!std::isfinite(s.xy[0]) || !std::isfinite(s.xy[1])) throw InvalidScene(who + ": bad position");
    }
}

double splat_radius(const Splat &s) {
    const auto [a, b, c] = s.conic;
    const double mid = 0.5 * (a + c);
    const double half_gap = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    const double lambda_min = mid - half_gap;
    if (!(lambda_min > 0.0)) return std::numeric_limits<double>::infinity();
    return 3.0 * std::sqrt(1.0 / lambda_min);
}

std::vector<std::vector<std::uint32_t>> assign_splats(const Scene &scene) {
    const std::uint32_t tx_n = scene.tiles_x();
    const std::uint32_t ty_n = scene.tiles_y();
    std::vector<std::vector<std::uint32_t>> lists(scene.tile_count());

    auto tile_span = [](double lo, double hi, std::uint32_t tile, std::uint32_t count) {
        const double last = static_cast<double>(count - 1);
        const double first_t = std::clamp(std::floor(lo / tile), 0.0, last);
        const double last_t = std::clamp(std::floor(hi / tile), 0.0, last);
        return std::pair{static_cast<std::uint32_t>(first_t), static_cast<std::uint32_t>(last_t)};
    };

    for (std::uint32_t i = 0; i < scene.splats.size(); ++i) {
        const Splat &s = scene.splats[i];
        const double r = splat_radius(s);
        const double x_lo = s.xy[0] - r, x_hi = s.xy[0] + r;
        const double y_lo = s.xy[1] - r, y_hi = s.xy[1] + r;
        const auto [tx0, tx1] = tile_span(x_lo, x_hi, scene.tile[0], tx_n);
        const auto [ty0, ty1] = tile_span(y_lo, y_hi, scene.tile[1], ty_n);
        for (std::uint32_t ty = ty0; ty <= ty1; ++ty) {
            const double py0 = double(ty) * scene.tile[1];
            const double py1 = std::min<double>(py0 + scene.tile[1], scene.height) - 1.0;
            if (y_hi < py0 || y_lo > py1) continue;
            for (std::uint32_t tx = tx0; tx <= tx1; ++tx) {
                const double px0 = double(tx) * scene.tile[0];
                const double px1 = std::min<double>(px0 + scene.tile[0], scene.width) - 1.0;
                if (x_hi < px0 || x_lo > px1) continue;
                lists[std::size_t{ty} * tx_n + tx].push_back(i);
            }
        }
    }
    for (auto &list : lists) {
        std::stable_sort(list.begin(), list.end(), [&](std::uint32_t l, std::uint32_t r) {
            const Splat &a = scene.splats[l];
            const Splat &b = scene.splats[r];
            if (a.depth != b.depth) return a.depth < b.depth;
            return a.id < b.id;
        });
    }
    return lists;
}

namespace {

void render_tile(const Scene &scene, const std::vector<std::uint32_t> &list, std::uint32_t tile_index,
                 const RenderOptions &options, RenderOutput &out) {
    const std::uint32_t tx_n = scene.tiles_x();
    const std::uint32_t x0 = (tile_index % tx_n) * scene.tile[0];
    const std::uint32_t y0 = (tile_index / tx_n) * scene.tile[1];
    const std::uint32_t x1 = std::min(x0 + scene.tile[0], scene.width);
    const std::uint32_t y1 = std::min(y0 + scene.tile[1], scene.height);
    const std::size_t batch = std::size_t{scene.tile[0]} * scene.tile[1];
    const std::uint32_t ch_n = scene.channels;

    std::vector<double> C(ch_n);
    for (std::uint32_t py = y0; py < y1; ++py) {
        for (std::uint32_t px = x0; px < x1; ++px) {
            const std::size_t pix = std::size_t{py} * scene.width + px;
            std::fill(C.begin(), C.end(), 0.0);
            double T = 1.0;
            std::uint32_t contributors = 0;
            std::uint32_t computed = 0;

            for (std::size_t k = 0; k < list.size(); ++k) {
                if (options.max_per_batch != 0 && k % batch >= options.max_per_batch) continue;
                const Splat &s = scene.splats[list[k]];
                ++computed;
                const double dx = s.xy[0] - double(px);
                const double dy = s.xy[1] - double(py);
                const auto [a, b, c] = s.conic;
                const double power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
                if (power > 0.0) continue;
                const double alpha = std::min(kAlphaMax, s.opacity * std::exp(power));
                if (alpha < kAlphaMin) continue;
                const double test_T = T * (1.0 - alpha);
                if (test_T < kTransmittanceCutoff) break;
                for (std::uint32_t ch = 0; ch < ch_n; ++ch) C[ch] += s.color[ch] * alpha * T;
                T = test_T;
                ++contributors;
            }

            for (std::uint32_t ch = 0; ch < ch_n; ++ch) {
                out.image[pix * ch_n + ch] = C[ch] + T * scene.background[ch];
            }
            out.final_T[pix] = T;
            out.n_contrib[pix] = contributors;
            out.per_pixel_computed[pix] = computed;
            out.pixel_tile[pix] = tile_index;
        }
    }
}

} // namespace

RenderOutput render(const Scene &scene, const RenderOptions &options) {
    const auto lists = assign_splats(scene);
    const std::size_t pixels = std::size_t{scene.width} * scene.height;

    RenderOutput out;
    out.width = scene.width;
    out.height = scene.height;
    out.channels = scene.channels;
    out.image.assign(pixels * scene.channels, 0.0);
    out.final_T.assign(pixels, 1.0);
    out.n_contrib.assign(pixels, 0);
    out.per_pixel_computed.assign(pixels, 0);
    out.pixel_tile.assign(pixels, 0);
    out.per_tile_assigned.resize(lists.size());
    for (std::size_t t = 0; t < lists.size(); ++t) {
        out.per_tile_assigned[t] = static_cast<std::uint32_t>(lists[t].size());
    }

    const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, lists.size()));
    if (workers == 1) {
        for (std::uint32_t t = 0; t < lists.size(); ++t) render_tile(scene, lists[t], t, options, out);
        return out;
    }
    // Tiles own disjoint pixels, so workers never write the same element.
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::uint32_t t = w; t < lists.size(); t += workers) {
                render_tile(scene, lists[t], t, options, out);
            }
        });
    }
    pool.clear();
    return out;
}

WorkloadStats workload_stats(const RenderOutput &out) {
    const auto &tiles = out.per_tile_assigned;
    if (tiles.empty() || std::all_of(tiles.begin(), tiles.end(), [](auto n) { return n == 0; })) {
        throw DegenerateWorkload("every tile is empty");
    }
    WorkloadStats st;
    double sum = 0.0;
    for (auto n : tiles) sum += n;
    st.mean_per_tile = sum / double(tiles.size());
    double sq = 0.0;
    for (auto n : tiles) sq += (n - st.mean_per_tile) * (n - st.mean_per_tile);
    st.var_per_tile = sq / double(tiles.size());

    std::vector<double> fractions;
    fractions.reserve(out.per_pixel_computed.size());
    for (std::size_t p = 0; p < out.per_pixel_computed.size(); ++p) {
        const auto assigned = tiles[out.pixel_tile[p]];
        if (assigned == 0) continue;
        fractions.push_back(double(out.per_pixel_computed[p]) / double(assigned));
    }
    double fsum = 0.0;
    for (double f : fractions) fsum += f;
    st.mean_computed_fraction = fsum / double(fractions.size());
    double fsq = 0.0;
    for (double f : fractions) fsq += (f - st.mean_computed_fraction) * (f - st.mean_computed_fraction);
    st.var_computed_fraction = fsq / double(fractions.size());
    return st;
}

double mean_abs_error(const std::vector<double> &a, const std::vector<double> &b) {
    if (a.size() != b.size()) {
        throw Error("image size mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return sum / double(a.size());
}

Scene generate_scene(const SceneGenParams &p) {
    auto check = [](const Range &r, const char *name) {
        if (!(r.lo <= r.hi)) throw InvalidRange(std::string(name) + " range is empty");
    };
    check(p.opacity, "opacity");
    check(p.radius, "radius");
    check(p.depth, "depth");
    if (!(p.radius.lo > 0.0)) throw InvalidRange("radii must be positive");
    if (p.opacity.lo < 0.0 || p.opacity.hi > 1.0) throw InvalidRange("opacity must lie in [0,1]");
    if (!(p.depth.lo > 0.0)) throw InvalidRange("depths must be positive");
    if (p.width < 1 || p.height < 1) throw InvalidRange("image dimensions must be >= 1");

    Scene scene;
    scene.width = p.width;
    scene.height = p.height;
    scene.tile = p.tile;
    scene.channels = p.channels;
    scene.background.assign(p.channels, 0.0);

    Rng rng(p.seed);
    scene.splats.reserve(p.count);
    for (std::size_t i = 0; i < p.count; ++i) {
        Splat s;
        s.id = static_cast<std::uint32_t>(i);
        s.xy = {rng.uniform(0.0, p.width), rng.uniform(0.0, p.height)};
        const double sigma_major = rng.uniform(p.radius.lo, p.radius.hi) / 3.0;
        const double sigma_minor = sigma_major * rng.uniform(0.3, 1.0);
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double cs = std::cos(theta), sn = std::sin(theta);
        const double inv1 = 1.0 / (sigma_major * sigma_major);
        const double inv2 = 1.0 / (sigma_minor * sigma_minor);
        s.conic = {cs * cs * inv1 + sn * sn * inv2, cs * sn * (inv1 - inv2), sn * sn * inv1 + cs * cs * inv2};
        s.opacity = rng.uniform(p.opacity.lo, p.opacity.hi);
        s.color.resize(p.channels);
        for (double &v : s.color) v = rng.uniform();
        s.depth = rng.uniform(p.depth.lo, p.depth.hi);
        scene.splats.push_back(std::move(s));
    }
    return scene;
}

} // namespace splatopt
