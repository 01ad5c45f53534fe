#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ameval/tensor.hpp"

namespace ameval {

// Separable Gaussian filtering with symmetric reflection at the borders.
// Kernel radius is ceil(3*sigma); sigma = 0 is the identity.

inline std::vector<double> gaussian_kernel(double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian: sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace detail {

// symmetric reflection: -1 -> 0, n -> n-1; folds until in range
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

inline void convolve_rows(const double* in, double* out, int h, int w,
                          const std::vector<double>& k) {
    const int radius = static_cast<int>(k.size() / 2);
    for (int y = 0; y < h; ++y) {
        const double* row = in + static_cast<size_t>(y) * w;
        double* orow = out + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += k[t + radius] * row[reflect_index(x + t, w)];
            orow[x] = acc;
        }
    }
}

inline void convolve_cols(const double* in, double* out, int h, int w,
                          const std::vector<double>& k) {
    const int radius = static_cast<int>(k.size() / 2);
    for (int y = 0; y < h; ++y) {
        double* orow = out + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += k[t + radius] * in[static_cast<size_t>(reflect_index(y + t, h)) * w + x];
            orow[x] = acc;
        }
    }
}

}  // namespace detail

inline void gaussian_blur_plane(const double* in, double* out, int h, int w, double sigma) {
    const auto k = gaussian_kernel(sigma);
    if (k.size() == 1) {
        std::copy(in, in + static_cast<size_t>(h) * w, out);
        return;
    }
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    detail::convolve_rows(in, tmp.data(), h, w, k);
    detail::convolve_cols(tmp.data(), out, h, w, k);
}

inline Tensor gaussian_blur(const Tensor& chw, double sigma) {
    if (chw.shape.size() != 3) throw std::invalid_argument("gaussian_blur: expected CHW tensor");
    Tensor out(chw.shape);
    const int c = chw.shape[0], h = chw.shape[1], w = chw.shape[2];
    for (int ch = 0; ch < c; ++ch)
        gaussian_blur_plane(&chw.data[static_cast<size_t>(ch) * h * w],
                            &out.data[static_cast<size_t>(ch) * h * w], h, w, sigma);
    return out;
}

}  // namespace ameval
