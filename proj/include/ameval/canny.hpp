#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ameval/gaussian.hpp"
#include "ameval/tensor.hpp"

namespace ameval {

// Canny edge detection on a single-channel plane: Gaussian smoothing, Sobel
// gradients, non-maximum suppression with 4-way direction quantization, and
// double-threshold hysteresis (thresholds given as fractions of the maximum
// gradient magnitude). Output is binary {0,1}.

struct CannyParams {
    double sigma = 1.0;
    double low = 0.1;
    double high = 0.2;
};

inline std::vector<double> canny_plane(const std::vector<double>& plane, int h, int w,
                                       const CannyParams& p) {
    if (!(p.low >= 0.0 && p.low < p.high))
        throw std::invalid_argument("canny: need 0 <= low < high");
    std::vector<double> smooth(plane.size());
    gaussian_blur_plane(plane.data(), smooth.data(), h, w, p.sigma);

    auto at = [&](int y, int x) {
        return smooth[static_cast<size_t>(detail::reflect_index(y, h)) * w +
                      detail::reflect_index(x, w)];
    };

    std::vector<double> mag(plane.size(), 0.0);
    std::vector<int> dir(plane.size(), 0);  // 0: E-W, 1: NE-SW, 2: N-S, 3: NW-SE
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
            const double m = std::hypot(gx, gy);
            mag[static_cast<size_t>(y) * w + x] = m;
            max_mag = std::max(max_mag, m);
            double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
            if (angle < 0.0) angle += 180.0;
            int d;
            if (angle < 22.5 || angle >= 157.5) d = 0;
            else if (angle < 67.5) d = 1;
            else if (angle < 112.5) d = 2;
            else d = 3;
            dir[static_cast<size_t>(y) * w + x] = d;
        }
    }
    if (max_mag == 0.0) return std::vector<double>(plane.size(), 0.0);

    static const int offs[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};  // (dy,dx) along gradient
    auto mag_at = [&](int y, int x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return mag[static_cast<size_t>(y) * w + x];
    };

    std::vector<double> nms(plane.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const int dy = offs[dir[i]][0], dx = offs[dir[i]][1];
            const double m = mag[i];
            if (m >= mag_at(y + dy, x + dx) && m >= mag_at(y - dy, x - dx)) nms[i] = m;
        }

    const double high_t = p.high * max_mag;
    const double low_t = p.low * max_mag;
    std::vector<double> out(plane.size(), 0.0);
    std::vector<size_t> stack;
    for (size_t i = 0; i < nms.size(); ++i)
        if (nms[i] >= high_t) {
            out[i] = 1.0;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const size_t i = stack.back();
        stack.pop_back();
        const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const size_t j = static_cast<size_t>(yy) * w + xx;
                if (out[j] == 0.0 && nms[j] >= low_t) {
                    out[j] = 1.0;
                    stack.push_back(j);
                }
            }
    }
    return out;
}

}  // namespace ameval
