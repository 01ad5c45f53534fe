#pragma once

#include <stdexcept>

#include "ameval/model.hpp"

namespace ameval {

// Central finite differences, the verification oracle for the analytic
// backward passes. Kept independent of the backward implementation: only
// forward evaluations are used.

template <typename ScalarFn>
Tensor finite_difference(ScalarFn&& f, const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference: h must be > 0");
    Tensor grad(x.shape);
    Tensor probe = x;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        grad.data[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

inline Tensor finite_difference_gradient(const Model& m, const Tensor& image, int klass, double h) {
    if (klass < 0 || klass >= m.num_classes())
        throw std::invalid_argument("finite_difference_gradient: class id out of range");
    return finite_difference(
        [&](const Tensor& x) { return forward(m, x).probabilities().data[klass]; }, image, h);
}

inline Tensor finite_difference_loss_gradient(const Model& m, const Tensor& image, int target, double h) {
    if (target < 0 || target >= m.num_classes())
        throw std::invalid_argument("finite_difference_loss_gradient: class id out of range");
    return finite_difference(
        [&](const Tensor& x) { return cross_entropy(forward(m, x).probabilities(), target); }, image, h);
}

// Finite differences on an intermediate activation, via forward_tail.
inline Tensor finite_difference_activation_gradient(const Model& m, int layer_index,
                                                    const Tensor& activation, int klass, double h) {
    return finite_difference(
        [&](const Tensor& a) { return forward_tail(m, layer_index, a).data[klass]; }, activation, h);
}

}  // namespace ameval
