#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/canny.hpp"
#include "ameval/gaussian.hpp"
#include "ameval/model.hpp"
#include "ameval/rng.hpp"

namespace ameval {

// Attribution maps: per-pixel importance fields at input resolution. All
// methods are pure functions of (model, image, class, params, seed).

struct AttributionMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    AttributionMap() = default;
    AttributionMap(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("attribution map: non-positive dims");
    }

    double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
};

// How multi-channel gradients collapse to a single spatial map. The usual
// convention is the max of absolute values (identity on single channels).
enum class ChannelReduce { MaxAbs, SumAbs, L2 };

inline ChannelReduce channel_reduce_from_string(const std::string& s) {
    if (s == "maxabs") return ChannelReduce::MaxAbs;
    if (s == "sumabs") return ChannelReduce::SumAbs;
    if (s == "l2") return ChannelReduce::L2;
    throw std::invalid_argument("unknown channel reduction '" + s + "'");
}

inline AttributionMap reduce_channels(const Tensor& grad, ChannelReduce mode) {
    const int c = grad.shape[0], h = grad.shape[1], w = grad.shape[2];
    AttributionMap map(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double g = grad.at(ch, y, x);
                switch (mode) {
                    case ChannelReduce::MaxAbs: acc = std::max(acc, std::abs(g)); break;
                    case ChannelReduce::SumAbs: acc += std::abs(g); break;
                    case ChannelReduce::L2: acc += g * g; break;
                }
            }
            map.at(y, x) = mode == ChannelReduce::L2 ? std::sqrt(acc) : acc;
        }
    return map;
}

// Min-max rescale to [0,1]; constant maps collapse to all-zeros so that a
// normalized map never pretends uniform importance it does not have.
inline AttributionMap normalize_map(const AttributionMap& map) {
    double lo = map.values[0], hi = map.values[0];
    for (double v : map.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("normalize_map: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    AttributionMap out(map.height, map.width);
    if (hi == lo) return out;
    const double span = hi - lo;
    for (size_t i = 0; i < map.values.size(); ++i) out.values[i] = (map.values[i] - lo) / span;
    return out;
}

inline AttributionMap gradients_map(const Model& m, const Tensor& image, int klass,
                                    ChannelReduce reduce = ChannelReduce::MaxAbs) {
    const auto pass = forward(m, image);
    const auto bwd = backward_probability(m, pass, klass);
    return reduce_channels(bwd.input_grad, reduce);
}

struct SmoothGradParams {
    int samples = 8;
    double sigma = 0.1;  // noise stddev as a fraction of the value range
    uint64_t seed = 0;
};

inline AttributionMap smoothgrad(const Model& m, const Tensor& image, int klass,
                                 const SmoothGradParams& p,
                                 ChannelReduce reduce = ChannelReduce::MaxAbs) {
    if (p.samples < 1) throw std::invalid_argument("smoothgrad: need samples >= 1");
    if (p.sigma < 0.0) throw std::invalid_argument("smoothgrad: sigma must be >= 0");
    Rng rng(p.seed);
    Tensor mean_grad(image.shape);
    Tensor noisy = image;
    for (int s = 0; s < p.samples; ++s) {
        for (size_t i = 0; i < image.data.size(); ++i)
            noisy.data[i] = image.data[i] + p.sigma * rng.gaussian();
        const auto pass = forward(m, noisy);
        const auto bwd = backward_probability(m, pass, klass);
        for (size_t i = 0; i < mean_grad.data.size(); ++i)
            mean_grad.data[i] += bwd.input_grad.data[i];
    }
    for (double& v : mean_grad.data) v /= p.samples;
    return reduce_channels(mean_grad, reduce);
}

struct IGParams {
    int steps = 32;
    double blur_sigma_max = 5.0;  // blur-baseline variant only
};

// Straight-line path from the black image, midpoint Riemann sum. The map is
// the per-pixel channel sum, preserving the completeness identity
// sum(IG) = f(X) - f(black).
inline AttributionMap integrated_gradients(const Model& m, const Tensor& image, int klass,
                                           const IGParams& p) {
    if (p.steps < 1) throw std::invalid_argument("integrated_gradients: need steps >= 1");
    Tensor avg_grad(image.shape);
    Tensor point(image.shape);
    for (int j = 1; j <= p.steps; ++j) {
        const double alpha = (j - 0.5) / p.steps;
        for (size_t i = 0; i < image.data.size(); ++i) point.data[i] = alpha * image.data[i];
        const auto pass = forward(m, point);
        const auto bwd = backward_probability(m, pass, klass);
        for (size_t i = 0; i < avg_grad.data.size(); ++i) avg_grad.data[i] += bwd.input_grad.data[i];
    }
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    AttributionMap map(h, w);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                map.at(y, x) += avg_grad.at(ch, y, x) / p.steps * image.at(ch, y, x);
    return map;
}

// Discrete path from the blurred image to the original, with the blur scale
// decreasing linearly: sigma_j = sigma_max * (1 - j/m). Gradients are taken
// at segment midpoints and multiplied by the difference quotient between
// consecutive blurred images.
inline AttributionMap blur_integrated_gradients(const Model& m, const Tensor& image, int klass,
                                                const IGParams& p) {
    if (p.steps < 1) throw std::invalid_argument("blur_integrated_gradients: need steps >= 1");
    if (p.blur_sigma_max <= 0.0)
        throw std::invalid_argument("blur_integrated_gradients: sigma_max must be > 0");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    AttributionMap map(h, w);
    Tensor prev = gaussian_blur(image, p.blur_sigma_max);
    Tensor mid(image.shape);
    for (int j = 1; j <= p.steps; ++j) {
        const double sigma = p.blur_sigma_max * (1.0 - static_cast<double>(j) / p.steps);
        Tensor cur = j == p.steps ? image : gaussian_blur(image, sigma);
        for (size_t i = 0; i < mid.data.size(); ++i) mid.data[i] = 0.5 * (prev.data[i] + cur.data[i]);
        const auto pass = forward(m, mid);
        const auto bwd = backward_probability(m, pass, klass);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    map.at(y, x) += bwd.input_grad.at(ch, y, x) *
                                    (cur.at(ch, y, x) - prev.at(ch, y, x));
        prev = std::move(cur);
    }
    return map;
}

// Align-corners bilinear interpolation; target must not be smaller than the
// source in either dimension.
inline AttributionMap upsample_bilinear(const AttributionMap& map, int target_h, int target_w) {
    if (target_h <= 0 || target_w <= 0) throw std::invalid_argument("upsample: zero-sized target");
    if (target_h < map.height || target_w < map.width)
        throw std::invalid_argument("upsample: target smaller than source");
    AttributionMap out(target_h, target_w);
    const double sy = target_h > 1 ? static_cast<double>(map.height - 1) / (target_h - 1) : 0.0;
    const double sx = target_w > 1 ? static_cast<double>(map.width - 1) / (target_w - 1) : 0.0;
    for (int y = 0; y < target_h; ++y) {
        const double fy = y * sy;
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, map.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target_w; ++x) {
            const double fx = x * sx;
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, map.width - 1);
            const double wx = fx - x0;
            out.at(y, x) = (1 - wy) * ((1 - wx) * map.at(y0, x0) + wx * map.at(y0, x1)) +
                           wy * ((1 - wx) * map.at(y1, x0) + wx * map.at(y1, x1));
        }
    }
    return out;
}

inline AttributionMap gradcam(const Model& m, const Tensor& image, int klass,
                              const std::string& layer_name) {
    const int li = m.find_layer(layer_name);
    if (m.layers[li].output_shape.size() != 3)
        throw std::invalid_argument("gradcam: layer '" + layer_name + "' has no spatial extent");
    const auto pass = forward(m, image);
    const auto bwd = backward_probability(m, pass, klass);
    const auto cap = layer_capture(m, pass, bwd, layer_name);
    const int k = cap.activations.shape[0];
    const int h = cap.activations.shape[1], w = cap.activations.shape[2];
    AttributionMap cam(h, w);
    for (int ch = 0; ch < k; ++ch) {
        double weight = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) weight += cap.gradients.at(ch, y, x);
        weight /= static_cast<double>(h) * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) cam.at(y, x) += weight * cap.activations.at(ch, y, x);
    }
    for (double& v : cam.values) v = v > 0.0 ? v : 0.0;  // ReLU
    return upsample_bilinear(cam, image.shape[1], image.shape[2]);
}

inline AttributionMap uniform_baseline(int h, int w, uint64_t seed) {
    AttributionMap map(h, w);
    Rng rng(seed);
    for (double& v : map.values) v = rng.uniform01();
    return map;
}

inline AttributionMap canny_baseline(const Tensor& image, const CannyParams& p = {}) {
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    std::vector<double> plane(static_cast<size_t>(h) * w, 0.0);
    for (int ch = 0; ch < c; ++ch)
        for (size_t i = 0; i < plane.size(); ++i)
            plane[i] += image.data[static_cast<size_t>(ch) * h * w + i] / c;
    AttributionMap map(h, w);
    map.values = canny_plane(plane, h, w, p);
    return map;
}

// ---------------------------------------------------------------------------
// Registry: attribution methods addressed by name. Methods needing randomness
// draw from a stream derived from (seed, image id, method name) so that the
// evaluation order of a batch never matters.

struct MethodParams {
    ChannelReduce reduce = ChannelReduce::MaxAbs;
    int smoothgrad_samples = 8;
    double smoothgrad_sigma = 0.1;
    int ig_steps = 32;
    int blur_ig_steps = 16;
    double blur_ig_sigma_max = 5.0;
    std::string gradcam_layer;  // empty: deepest spatial layer
    CannyParams canny;
};

struct MethodRequest {
    const Model* model = nullptr;
    const Tensor* image = nullptr;
    int klass = 0;
    uint64_t seed = 0;
    uint64_t image_id = 0;
};

using MethodFn = std::function<AttributionMap(const MethodRequest&)>;

class MethodRegistry {
public:
    void add(const std::string& name, MethodFn fn) { fns_[name] = std::move(fn); }

    const MethodFn& get(const std::string& name) const {
        auto it = fns_.find(name);
        if (it == fns_.end()) throw std::invalid_argument("unknown attribution method '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return fns_.count(name) != 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : fns_) out.push_back(k);
        return out;
    }

    AttributionMap run(const std::string& name, const MethodRequest& req) const {
        return get(name)(req);
    }

    static MethodRegistry standard(const MethodParams& p = {}) {
        MethodRegistry reg;
        reg.add("gradients", [p](const MethodRequest& r) {
            return gradients_map(*r.model, *r.image, r.klass, p.reduce);
        });
        reg.add("smoothgrad", [p](const MethodRequest& r) {
            SmoothGradParams sp;
            sp.samples = p.smoothgrad_samples;
            sp.sigma = p.smoothgrad_sigma;
            sp.seed = derive_seed(r.seed, r.image_id, hash_string("smoothgrad"));
            return smoothgrad(*r.model, *r.image, r.klass, sp, p.reduce);
        });
        // Path attributions are signed (the channel sum carries the
        // completeness identity); what drives pixel ordering and explanation
        // masks is importance, so the registry exposes their magnitudes.
        reg.add("intgrad", [p](const MethodRequest& r) {
            IGParams ip;
            ip.steps = p.ig_steps;
            AttributionMap map = integrated_gradients(*r.model, *r.image, r.klass, ip);
            for (double& v : map.values) v = std::abs(v);
            return map;
        });
        reg.add("blurig", [p](const MethodRequest& r) {
            IGParams ip;
            ip.steps = p.blur_ig_steps;
            ip.blur_sigma_max = p.blur_ig_sigma_max;
            AttributionMap map = blur_integrated_gradients(*r.model, *r.image, r.klass, ip);
            for (double& v : map.values) v = std::abs(v);
            return map;
        });
        reg.add("gradcam", [p](const MethodRequest& r) {
            const std::string layer =
                p.gradcam_layer.empty() ? r.model->last_spatial_layer() : p.gradcam_layer;
            return gradcam(*r.model, *r.image, r.klass, layer);
        });
        reg.add("uniform", [](const MethodRequest& r) {
            return uniform_baseline(r.image->shape[1], r.image->shape[2],
                                    derive_seed(r.seed, r.image_id, hash_string("uniform")));
        });
        reg.add("canny", [p](const MethodRequest& r) { return canny_baseline(*r.image, p.canny); });
        return reg;
    }

private:
    std::map<std::string, MethodFn> fns_;
};

}  // namespace ameval
