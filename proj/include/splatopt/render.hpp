// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/error.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace splatopt {

class DegenerateWorkload : public Error {
  public:
    using Error::Error;
};

class InvalidRange : public Error {
  public:
    using Error::Error;
};

class InvalidScene : public InputError {
  public:
    using InputError::InputError;
};

// Blending constants of the reference rasterizer.
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;

// A projected 2D Gaussian. conic = (a, b, c) is the inverse covariance
// [[a, b], [b, c]] in 1/pixel^2.
struct Splat {
    std::uint32_t id = 0;
    std::array<double, 2> xy{};
    std::array<double, 3> conic{};
    double opacity = 0.0;
    std::vector<double> color;
    double depth = 1.0;
};

struct Scene {
    std::vector<Splat> splats;
    std::uint32_t width = 1;
    std::uint32_t height = 1;
    std::array<std::uint32_t, 2> tile{16, 16};
    std::vector<double> background{0.0, 0.0, 0.0};
    std::uint32_t channels = 3;

    std::uint32_t tiles_x() const { return (width + tile[0] - 1) / tile[0]; }
    std::uint32_t tiles_y() const { return (height + tile[1] - 1) / tile[1]; }
    std::size_t tile_count() const { return std::size_t{tiles_x()} * tiles_y(); }
};

/// Throws InvalidScene when an invariant of Scene or Splat is broken.
void validate(const Scene &scene);

// Per-pixel results. Images are interleaved: image[(y * width + x) * channels + ch].
struct RenderOutput {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;
    std::vector<double> image;
    std::vector<double> final_T;
    std::vector<std::uint32_t> n_contrib;
    std::vector<std::uint32_t> per_tile_assigned;
    std::vector<std::uint32_t> per_pixel_computed;
    // Tile index of every pixel, so the counters above can be related.
    std::vector<std::uint32_t> pixel_tile;
};

struct WorkloadStats {
    double mean_per_tile = 0.0;
    double var_per_tile = 0.0;
    double mean_computed_fraction = 0.0;
    double var_computed_fraction = 0.0;
};

struct RenderOptions {
    // Worker threads over tiles; output is identical for any value.
    unsigned threads = 1;
    // Models a kernel that drops its inner loop: only the first
    // `max_per_batch` splats of every shared-memory batch (tile.x * tile.y
    // splats) are blended. 0 disables the defect.
    std::size_t max_per_batch = 0;
};

/// 3-sigma radius of the splat footprint, from the largest covariance
/// eigenvalue. Infinite when the conic is singular.
double splat_radius(const Splat &s);

/// Per-tile (row-major) splat indices, nearest first, ties by id.
std::vector<std::vector<std::uint32_t>> assign_splats(const Scene &scene);

RenderOutput render(const Scene &scene, const RenderOptions &options = {});

/// Throws DegenerateWorkload when no tile has any splat assigned.
WorkloadStats workload_stats(const RenderOutput &out);

/// Mean absolute per-pixel per-channel difference. Images must match in size.
double mean_abs_error(const std::vector<double> &a, const std::vector<double> &b);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SceneGenParams {
    std::uint64_t seed = 1;
    std::size_t count = 0;
    std::uint32_t width = 64;
    std::uint32_t height = 64;
    Range opacity{0.1, 0.9};
    // 3-sigma footprint radius in pixels along the major axis.
    Range radius{2.0, 12.0};
    Range depth{1.0, 10.0};
    std::array<std::uint32_t, 2> tile{16, 16};
    std::uint32_t channels = 3;
};

/// Reproducible random scene. Throws InvalidRange for empty ranges,
/// non-positive radii or opacities outside [0, 1].
Scene generate_scene(const SceneGenParams &params);

} // namespace splatopt
