// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/scene_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splatopt {

using nlohmann::json;

json scene_to_json(const Scene &scene) {
    json splats = json::array();
    for (const Splat &s : scene.splats) {
        splats.push_back({{"id", s.id},
                          {"xy", {s.xy[0], s.xy[1]}},
                          {"conic", {s.conic[0], s.conic[1], s.conic[2]}},
                          {"opacity", s.opacity},
                          {"color", s.color},
                          {"depth", s.depth}});
    }
    return {{"width", scene.width},
            {"height", scene.height},
            {"tile", {scene.tile[0], scene.tile[1]}},
            {"channels", scene.channels},
            {"background", scene.background},
            {"splats", std::move(splats)}};
}

Scene scene_from_json(const json &j) {
    Scene scene;
    try {
        scene.width = j.at("width").get<std::uint32_t>();
        scene.height = j.at("height").get<std::uint32_t>();
        scene.channels = j.value("channels", 3u);
        if (j.contains("tile")) scene.tile = j.at("tile").get<std::array<std::uint32_t, 2>>();
        scene.background = j.contains("background") ? j.at("background").get<std::vector<double>>()
                                                    : std::vector<double>(scene.channels, 0.0);
        for (const json &js : j.at("splats")) {
            Splat s;
            s.id = js.at("id").get<std::uint32_t>();
            s.xy = js.at("xy").get<std::array<double, 2>>();
            s.conic = js.at("conic").get<std::array<double, 3>>();
            s.opacity = js.at("opacity").get<double>();
            s.color = js.at("color").get<std::vector<double>>();
            s.depth = js.at("depth").get<double>();
            scene.splats.push_back(std::move(s));
        }
    } catch (const json::exception &e) {
        throw InvalidScene(std::string("malformed scene: ") + e.what());
    }
    validate(scene);
    return scene;
}

Scene load_scene(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw InvalidScene("cannot read scene file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw InvalidScene(path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

void save_scene(const Scene &scene, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << scene_to_json(scene).dump(1) << '\n';
}

FloatImage image_of(const RenderOutput &out) {
    return FloatImage{out.width, out.height, out.channels, out.image};
}

namespace {

void put_le32(std::string &buf, float v) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_le32(const char *p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    return std::bit_cast<float>(bits);
}

} // namespace

std::string encode_pfm(const FloatImage &img) {
    if (img.channels != 1 && img.channels != 3) {
        throw Error("PFM holds 1 or 3 channels, image has " + std::to_string(img.channels));
    }
    std::string buf = img.channels == 3 ? "PF\n" : "Pf\n";
    buf += std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    for (std::uint32_t row = img.height; row-- > 0;) {
        const std::size_t base = std::size_t{row} * img.width * img.channels;
        for (std::size_t i = 0; i < std::size_t{img.width} * img.channels; ++i) {
            put_le32(buf, static_cast<float>(img.data[base + i]));
        }
    }
    return buf;
}

FloatImage decode_pfm(const std::string &bytes) {
    std::istringstream in(bytes);
    std::string magic;
    double scale = 0.0;
    FloatImage img;
    in >> magic >> img.width >> img.height >> scale;
    if (!in || (magic != "PF" && magic != "Pf")) throw InputError("not a PFM image");
    in.get(); // single whitespace byte before the raster
    img.channels = magic == "PF" ? 3 : 1;
    const std::size_t count = std::size_t{img.width} * img.height * img.channels;
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() < offset + count * 4) throw InputError("truncated PFM raster");
    if (scale > 0.0) throw InputError("big-endian PFM is not supported");
    img.data.resize(count);
    const std::size_t row_len = std::size_t{img.width} * img.channels;
    for (std::uint32_t r = 0; r < img.height; ++r) {
        const std::size_t dst_row = img.height - 1 - r;
        for (std::size_t i = 0; i < row_len; ++i) {
            img.data[dst_row * row_len + i] = get_le32(bytes.data() + offset + (r * row_len + i) * 4);
        }
    }
    return img;
}

void write_pfm(const FloatImage &img, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << encode_pfm(img);
}

FloatImage read_pfm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_pfm(ss.str());
}

json image_to_json(const FloatImage &img) {
    return {{"width", img.width}, {"height", img.height}, {"channels", img.channels}, {"data", img.data}};
}

} // namespace splatopt
