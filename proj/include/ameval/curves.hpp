#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ameval/attack.hpp"
#include "ameval/attribution.hpp"
#include "ameval/gaussian.hpp"
#include "ameval/image.hpp"
#include "ameval/model.hpp"
#include "ameval/stats.hpp"

namespace ameval {

// Pixel-modification schedules and the four probability curves (Deletion,
// Insertion, Insertion-Blur, Perturbation). Pixels are ordered by descending
// attribution value with row-major tie-break and modified jointly across
// channels; curves record the target-class probability after each chunk.

struct PixelSchedule {
    int height = 0, width = 0;
    std::vector<int> order;        // spatial indices y*width+x, highest AM first
    std::vector<int> chunk_sizes;  // length = steps; near-equal, first chunks larger
};

inline PixelSchedule pixel_schedule(const AttributionMap& map, int steps) {
    const int total = map.height * map.width;
    if (total == 0) throw std::invalid_argument("pixel_schedule: empty map");
    if (steps < 1 || steps > total)
        throw std::invalid_argument("pixel_schedule: steps must be in [1, pixel count]");
    PixelSchedule s;
    s.height = map.height;
    s.width = map.width;
    s.order.resize(total);
    std::iota(s.order.begin(), s.order.end(), 0);
    std::sort(s.order.begin(), s.order.end(), [&](int a, int b) {
        if (map.values[a] != map.values[b]) return map.values[a] > map.values[b];
        return a < b;
    });
    const int base = total / steps, rem = total % steps;
    s.chunk_sizes.resize(steps);
    for (int i = 0; i < steps; ++i) s.chunk_sizes[i] = base + (i < rem ? 1 : 0);
    return s;
}

struct ProbabilityCurve {
    std::vector<double> x;  // fraction of pixels changed, x0 = 0, xn = 1
    std::vector<double> y;  // target class probability
};

namespace detail {

// Walks the schedule over `start`, replacing each chunk's pixels (all
// channels) with the values from `target_pixels`.
inline ProbabilityCurve run_curve(const Model& m, Image8 start, const Image8& target_pixels,
                                  const PixelSchedule& sched, int klass) {
    if (klass < 0 || klass >= m.num_classes())
        throw std::invalid_argument("curve: class id out of range");
    const int total = sched.height * sched.width;
    ProbabilityCurve curve;
    curve.x.reserve(sched.chunk_sizes.size() + 1);
    curve.y.reserve(sched.chunk_sizes.size() + 1);
    curve.x.push_back(0.0);
    curve.y.push_back(forward(m, to_tensor(start)).probabilities().data[klass]);
    size_t pos = 0;
    int changed = 0;
    for (int chunk : sched.chunk_sizes) {
        for (int i = 0; i < chunk; ++i, ++pos) {
            const int p = sched.order[pos];
            const int py = p / sched.width, px = p % sched.width;
            for (int c = 0; c < start.channels; ++c) start.at(c, py, px) = target_pixels.at(c, py, px);
        }
        changed += chunk;
        curve.x.push_back(static_cast<double>(changed) / total);
        curve.y.push_back(forward(m, to_tensor(start)).probabilities().data[klass]);
    }
    return curve;
}

inline void check_dims(const Image8& img, const AttributionMap& map) {
    if (img.height != map.height || img.width != map.width)
        throw std::invalid_argument("curve: map/image dimension mismatch");
}

}  // namespace detail

// Original image, most important pixels zeroed first.
inline ProbabilityCurve deletion_curve(const Model& m, const Image8& image, const AttributionMap& map,
                                       int steps, int klass) {
    detail::check_dims(image, map);
    const Image8 zeros(image.height, image.width, image.channels, 0);
    return detail::run_curve(m, image, zeros, pixel_schedule(map, steps), klass);
}

// Black start, most important pixels restored first.
inline ProbabilityCurve insertion_curve(const Model& m, const Image8& image, const AttributionMap& map,
                                        int steps, int klass) {
    detail::check_dims(image, map);
    Image8 black(image.height, image.width, image.channels, 0);
    return detail::run_curve(m, black, image, pixel_schedule(map, steps), klass);
}

// Blurred start (quantized back to 8 bits, keeping the curve in the discrete
// image domain), original pixels restored in schedule order.
inline ProbabilityCurve insertion_blur_curve(const Model& m, const Image8& image,
                                             const AttributionMap& map, int steps, int klass,
                                             double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("insertion_blur_curve: sigma must be > 0");
    detail::check_dims(image, map);
    Image8 blurred = to_image8(gaussian_blur(to_tensor(image), sigma));
    return detail::run_curve(m, std::move(blurred), image, pixel_schedule(map, steps), klass);
}

// Adversarial start; the perturbation is undone chunk by chunk, highest
// attribution first. Requires a successful attack (failed images are skipped
// upstream).
inline ProbabilityCurve perturbation_curve(const Model& m, const Image8& image,
                                           const AttackResult& attack, const AttributionMap& map,
                                           int steps, int klass) {
    if (!attack.success) throw std::invalid_argument("perturbation_curve: attack did not succeed");
    if (!attack.adversarial.same_shape(image))
        throw std::invalid_argument("perturbation_curve: adversarial/original shape mismatch");
    detail::check_dims(image, map);
    return detail::run_curve(m, attack.adversarial, image, pixel_schedule(map, steps), klass);
}

struct MetricScore {
    double auc = 0.0;
    Direction direction = Direction::HigherBetter;
};

// Trapezoidal area under the curve over x in [0,1].
inline double auc(const ProbabilityCurve& curve) {
    if (curve.x.size() != curve.y.size()) throw std::invalid_argument("auc: x/y length mismatch");
    if (curve.x.size() < 2) throw std::invalid_argument("auc: need at least 2 points");
    double area = 0.0;
    for (size_t i = 0; i + 1 < curve.x.size(); ++i) {
        const double dx = curve.x[i + 1] - curve.x[i];
        if (dx <= 0.0) throw std::invalid_argument("auc: x must be strictly increasing");
        area += dx * 0.5 * (curve.y[i] + curve.y[i + 1]);
    }
    return area;
}

// Fixed direction registry for the curve metrics (Table-1 style arrows).
inline Direction metric_direction(const std::string& metric) {
    if (metric == "del") return Direction::LowerBetter;
    if (metric == "ins" || metric == "insblur" || metric == "perturb")
        return Direction::HigherBetter;
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

inline const std::vector<std::string>& curve_metric_names() {
    static const std::vector<std::string> names = {"del", "ins", "insblur", "perturb"};
    return names;
}

}  // namespace ameval
