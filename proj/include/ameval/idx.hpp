#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/image.hpp"

namespace ameval {

// IDX (MNIST-style) readers. Big-endian magic: 0x00000803 for u8 image cubes,
// 0x00000801 for u8 label vectors.

namespace detail {

inline uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace detail

inline std::vector<Image8> read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    const uint32_t magic = detail::read_be32(in);
    if (magic != 0x00000803u) throw std::runtime_error("idx: bad image magic in " + path);
    const uint32_t count = detail::read_be32(in);
    const uint32_t rows = detail::read_be32(in);
    const uint32_t cols = detail::read_be32(in);
    if (rows == 0 || cols == 0) throw std::runtime_error("idx: zero image dimensions");
    std::vector<Image8> images;
    images.reserve(count);
    std::vector<uint8_t> buf(static_cast<size_t>(rows) * cols);
    for (uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw std::runtime_error("idx: truncated image data in " + path);
        Image8 img(static_cast<int>(rows), static_cast<int>(cols), 1);
        img.pixels = buf;
        images.push_back(std::move(img));
    }
    return images;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    const uint32_t magic = detail::read_be32(in);
    if (magic != 0x00000801u) throw std::runtime_error("idx: bad label magic in " + path);
    const uint32_t count = detail::read_be32(in);
    std::vector<int> labels(count);
    for (uint32_t i = 0; i < count; ++i) {
        int c = in.get();
        if (c == EOF) throw std::runtime_error("idx: truncated label data in " + path);
        labels[i] = c;
    }
    return labels;
}

inline void write_idx_images(const std::vector<Image8>& images, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    auto be32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    const int rows = images.empty() ? 0 : images[0].height;
    const int cols = images.empty() ? 0 : images[0].width;
    be32(0x00000803u);
    be32(static_cast<uint32_t>(images.size()));
    be32(static_cast<uint32_t>(rows));
    be32(static_cast<uint32_t>(cols));
    for (const auto& img : images) {
        if (img.channels != 1 || img.height != rows || img.width != cols)
            throw std::invalid_argument("idx: images must be uniform single-channel");
        out.write(reinterpret_cast<const char*>(img.pixels.data()),
                  static_cast<std::streamsize>(img.pixels.size()));
    }
}

inline void write_idx_labels(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    auto be32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    be32(0x00000801u);
    be32(static_cast<uint32_t>(labels.size()));
    for (int l : labels) out.put(static_cast<char>(l));
}

}  // namespace ameval
