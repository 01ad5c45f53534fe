#pragma once

#include <functional>
#include <stdexcept>

#include "ameval/attribution.hpp"
#include "ameval/model.hpp"
#include "ameval/stats.hpp"

namespace ameval {

// Single-evaluation scores: Average Drop, Increase in Confidence, Complexity,
// Coherency and their harmonic combination ADCC.

// Element-wise product of image and map, map broadcast over channels. The map
// must already be normalized to [0,1].
inline Tensor explanation_map(const Tensor& image, const AttributionMap& map) {
    if (image.shape.size() != 3 || image.shape[1] != map.height || image.shape[2] != map.width)
        throw std::invalid_argument("explanation_map: image/map dimension mismatch");
    for (double v : map.values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("explanation_map: map is not normalized to [0,1]");
    Tensor out(image.shape);
    const int c = image.shape[0];
    const size_t hw = map.values.size();
    for (int ch = 0; ch < c; ++ch)
        for (size_t i = 0; i < hw; ++i)
            out.data[ch * hw + i] = image.data[ch * hw + i] * map.values[i];
    return out;
}

// max(f(X) - f(X o h(X)), 0)
inline double average_drop(const Model& m, const Tensor& image, const AttributionMap& map, int klass) {
    const AttributionMap norm = normalize_map(map);
    const double fx = forward(m, image).probabilities().data[klass];
    const double fe = forward(m, explanation_map(image, norm)).probabilities().data[klass];
    return std::max(fx - fe, 0.0);
}

// 1[f(X) < f(X o h(X))]
inline int increase_in_confidence(const Model& m, const Tensor& image, const AttributionMap& map,
                                  int klass) {
    const AttributionMap norm = normalize_map(map);
    const double fx = forward(m, image).probabilities().data[klass];
    const double fe = forward(m, explanation_map(image, norm)).probabilities().data[klass];
    return fx < fe ? 1 : 0;
}

// L1 norm of the normalized map divided by pixel count, so CP lies in [0,1]
// as the ADCC 1-CP denominator requires.
inline double complexity(const AttributionMap& map) {
    for (double v : map.values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("complexity: map is not normalized to [0,1]");
    double sum = 0.0;
    for (double v : map.values) sum += v;
    return sum / static_cast<double>(map.values.size());
}

// Pearson correlation between h(X) and h(X o h(X)), affinely mapped from
// [-1,1] to [0,1] for the ADCC denominator. Zero-variance maps score 0: a
// constant attribution carries no coherent signal. The method callable is
// expected to carry its model binding.
inline double coherency(const Tensor& image, const AttributionMap& map,
                        const std::function<AttributionMap(const Tensor&)>& method) {
    const AttributionMap norm = normalize_map(map);
    const Tensor expl = explanation_map(image, norm);
    const AttributionMap remap = method(expl);
    if (remap.height != map.height || remap.width != map.width)
        throw std::invalid_argument("coherency: method returned mismatched map");
    const auto r = pearson(map.values, remap.values);
    if (!r) return 0.0;
    return (*r + 1.0) / 2.0;
}

// 3 / (1/CH + 1/(1-CP) + 1/(1-AD))
inline double adcc(double ad, double cp, double ch) {
    if (ch <= 0.0 || cp >= 1.0 || ad >= 1.0)
        throw std::domain_error("adcc: undefined (a denominator is zero or negative)");
    return 3.0 / (1.0 / ch + 1.0 / (1.0 - cp) + 1.0 / (1.0 - ad));
}

}  // namespace ameval
