// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/render.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace splatopt {

// Scene JSON:
// {width, height, tile:[x,y], channels, background:[...],
//  splats:[{id, xy:[x,y], conic:[a,b,c], opacity, color:[...], depth}, ...]}
nlohmann::json scene_to_json(const Scene &scene);
/// Throws InvalidScene on missing fields, wrong types or broken invariants.
Scene scene_from_json(const nlohmann::json &j);

Scene load_scene(const std::filesystem::path &path);
void save_scene(const Scene &scene, const std::filesystem::path &path);

// Portable float map, little-endian float32, rows stored bottom to top.
// Only 1 ("Pf") and 3 ("PF") channel images exist in the format.
struct FloatImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;
    std::vector<double> data; // interleaved, top row first
};

std::string encode_pfm(const FloatImage &img);
FloatImage decode_pfm(const std::string &bytes);
void write_pfm(const FloatImage &img, const std::filesystem::path &path);
FloatImage read_pfm(const std::filesystem::path &path);

FloatImage image_of(const RenderOutput &out);

/// Flat JSON array of the interleaved image plus its shape.
nlohmann::json image_to_json(const FloatImage &img);

} // namespace splatopt
