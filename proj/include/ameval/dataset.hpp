#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/idx.hpp"
#include "ameval/image.hpp"
#include "ameval/rng.hpp"

namespace ameval {

struct LabeledImage {
    Image8 image;
    int label = 0;
};

struct Dataset {
    std::vector<LabeledImage> items;
    int num_classes = 0;

    size_t size() const { return items.size(); }
};

// Desk-scale stand-in for the paper-scale datasets: grayscale canvases with a
// filled axis-aligned square (class 0) or disc (class 1) at random position
// and scale, plus Gaussian pixel noise. Class balance is exact for even
// counts; sample i is generated from its own derived stream so the dataset
// does not depend on generation order.
struct ShapesParams {
    int count = 100;
    int size = 16;
    double noise = 0.08;  // stddev as a fraction of the value range
    uint64_t seed = 1;
    double min_radius_frac = 0.16;
    double max_radius_frac = 0.30;
    double min_intensity = 0.55;
    double max_intensity = 0.90;
    double background = 0.15;
    // per-image background level drawn from background +- jitter; forces
    // models to key on the shape rather than the absolute background
    double background_jitter = 0.0;
};

inline Dataset generate_shapes(const ShapesParams& p) {
    if (p.count < 2) throw std::invalid_argument("generate_shapes: count must be >= 2");
    if (p.size < 8) throw std::invalid_argument("generate_shapes: size must be >= 8");
    Dataset ds;
    ds.num_classes = 2;
    ds.items.reserve(p.count);
    const double rmin = p.min_radius_frac * p.size;
    const double rmax = p.max_radius_frac * p.size;
    for (int i = 0; i < p.count; ++i) {
        Rng rng(derive_seed(p.seed, static_cast<uint64_t>(i)));
        const int label = i % 2;  // 0 = square, 1 = disc
        const double r = rng.uniform(rmin, rmax);
        const double cx = rng.uniform(r + 1.0, p.size - 2.0 - r);
        const double cy = rng.uniform(r + 1.0, p.size - 2.0 - r);
        const double intensity = rng.uniform(p.min_intensity, p.max_intensity);
        const double bg = p.background_jitter > 0.0
                              ? rng.uniform(p.background - p.background_jitter,
                                            p.background + p.background_jitter)
                              : p.background;
        Image8 img(p.size, p.size, 1);
        for (int y = 0; y < p.size; ++y) {
            for (int x = 0; x < p.size; ++x) {
                const double dx = x - cx, dy = y - cy;
                bool inside;
                if (label == 0)
                    inside = std::max(std::abs(dx), std::abs(dy)) <= r;
                else
                    inside = dx * dx + dy * dy <= r * r;
                double v = (inside ? intensity : bg) + p.noise * rng.gaussian();
                v = std::clamp(v, 0.0, 1.0);
                img.at(0, y, x) = static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
        ds.items.push_back({std::move(img), label});
    }
    return ds;
}

inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    Dataset ds;
    auto images = read_idx_images(images_path);
    auto labels = read_idx_labels(labels_path);
    if (images.size() != labels.size())
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(images.size()) +
                                 " vs " + std::to_string(labels.size()) + ")");
    int max_label = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        max_label = std::max(max_label, labels[i]);
        ds.items.push_back({std::move(images[i]), labels[i]});
    }
    ds.num_classes = max_label + 1;
    return ds;
}

}  // namespace ameval
