#pragma once

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ameval/attribution.hpp"
#include "ameval/image.hpp"
#include "ameval/image_io.hpp"

namespace ameval {

// Attribution map files: magic "AMAP", u32 height, u32 width (little-endian),
// then height*width float32 values row-major.

inline void save_map(const AttributionMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("map: cannot write " + path);
    out.write("AMAP", 4);
    auto put = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    put(static_cast<uint32_t>(map.height));
    put(static_cast<uint32_t>(map.width));
    for (double d : map.values) {
        float f = static_cast<float>(d);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put(bits);
    }
}

inline AttributionMap load_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("map: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "AMAP", 4) != 0)
        throw std::runtime_error("map: bad magic in " + path);
    auto get = [&]() -> uint32_t {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw std::runtime_error("map: truncated file");
        return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
    };
    const int h = static_cast<int>(get());
    const int w = static_cast<int>(get());
    AttributionMap map(h, w);
    for (double& d : map.values) {
        uint32_t bits = get();
        float f;
        std::memcpy(&f, &bits, 4);
        d = static_cast<double>(f);
    }
    return map;
}

// Quantized preview for quick visual inspection.
inline void save_map_preview(const AttributionMap& map, const std::string& path) {
    const AttributionMap norm = normalize_map(map);
    Image8 img(map.height, map.width, 1);
    for (size_t i = 0; i < norm.values.size(); ++i)
        img.pixels[i] = static_cast<uint8_t>(std::lround(norm.values[i] * 255.0));
    write_pnm(img, path);
}

}  // namespace ameval
