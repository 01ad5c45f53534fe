#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ameval/image.hpp"

namespace ameval {

// Binary PGM (P5, 1 channel) and PPM (P6, 3 channels), maxval 255.

namespace detail {

inline int pnm_read_int(std::istream& in) {
    // skips whitespace and '#' comments per the PNM grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("pnm: malformed header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

}  // namespace detail

inline Image8 read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    char p, kind;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw std::runtime_error("pnm: unsupported magic in " + path);
    const int channels = kind == '5' ? 1 : 3;
    const int w = detail::pnm_read_int(in);
    const int h = detail::pnm_read_int(in);
    const int maxval = detail::pnm_read_int(in);
    if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 supported");
    // header ends with a single whitespace byte, already consumed by pnm_read_int
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("pnm: truncated pixel data in " + path);
    Image8 img(h, w, channels);
    // PNM is interleaved HWC; storage is planar CHW
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * channels + c];
    return img;
}

inline void write_pnm(const Image8& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("pnm: only 1- or 3-channel images");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                raw[(static_cast<size_t>(y) * img.width + x) * img.channels + c] = img.at(c, y, x);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace ameval
