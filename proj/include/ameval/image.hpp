#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ameval/tensor.hpp"

namespace ameval {

// Discrete 8-bit image, planar CHW storage. This is the domain the attacks
// and curve metrics operate in; conversion to Tensor divides by 255 exactly.
struct Image8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;  // [c][y][x]

    Image8() = default;

    Image8(int h, int w, int c, uint8_t fill = 0)
        : height(h), width(w), channels(c) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("image8: non-positive dimension");
        pixels.assign(static_cast<size_t>(h) * w * c, fill);
    }

    size_t size() const { return pixels.size(); }

    uint8_t& at(int c, int y, int x) { return pixels[idx(c, y, x)]; }
    uint8_t at(int c, int y, int x) const { return pixels[idx(c, y, x)]; }

    size_t idx(int c, int y, int x) const {
        return (static_cast<size_t>(c) * height + y) * width + x;
    }

    bool same_shape(const Image8& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

inline Tensor to_tensor(const Image8& img) {
    Tensor t({img.channels, img.height, img.width});
    for (size_t i = 0; i < img.pixels.size(); ++i)
        t.data[i] = static_cast<double>(img.pixels[i]) / 255.0;
    return t;
}

// Inverse of to_tensor; values outside [0,1] are clamped.
inline Image8 to_image8(const Tensor& t) {
    if (t.shape.size() != 3)
        throw std::invalid_argument("to_image8: expected CHW tensor");
    Image8 img(t.shape[1], t.shape[2], t.shape[0]);
    for (size_t i = 0; i < t.data.size(); ++i) {
        double v = std::round(t.data[i] * 255.0);
        if (v < 0.0) v = 0.0;
        if (v > 255.0) v = 255.0;
        img.pixels[i] = static_cast<uint8_t>(v);
    }
    return img;
}

}  // namespace ameval
