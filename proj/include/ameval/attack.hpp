#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ameval/image.hpp"
#include "ameval/model.hpp"

namespace ameval {

// Discrete l-infinity attacks in the 8-bit image domain. Gradient signs are
// computed in float space; all pixel arithmetic stays integer so adversarial
// images remain valid byte-valued images.

struct AttackBudget {
    int eps_steps = 1;    // k: perturbation bound is k/255
    int iterations = 1;   // 1 = FGSM
    ClassProbe target;    // class for the loss
};

struct AttackResult {
    Image8 adversarial;
    std::vector<int8_t> delta_sign;  // per channel value, in {-1, 0, +1}
    bool success = false;
    double probability_drop = 0.0;
};

inline bool attack_success(const Model& m, const Image8& original, const Image8& adversarial) {
    if (!original.same_shape(adversarial))
        throw std::invalid_argument("attack_success: shape mismatch");
    const int a = argmax_class(forward(m, to_tensor(original)).probabilities());
    const int b = argmax_class(forward(m, to_tensor(adversarial)).probabilities());
    return a != b;
}

namespace detail {

inline void validate_budget(const AttackBudget& b, const Model& m) {
    if (b.eps_steps < 1 || b.eps_steps > 255)
        throw std::invalid_argument("attack: eps_steps must be in {1,...,255}");
    if (b.iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
    if (b.target.klass < 0 || b.target.klass >= m.num_classes())
        throw std::invalid_argument("attack: target class out of range");
}

// Shared iteration core. step_size is the per-iteration move in 8-bit units;
// every move is projected back into the k-ball around the original and the
// valid [0,255] range. sign(0) leaves the pixel untouched.
inline AttackResult attack_core(const Model& m, const Image8& image, const AttackBudget& budget,
                                int step_size) {
    validate_budget(budget, m);
    const int k = budget.eps_steps;
    const auto clean_pass = forward(m, to_tensor(image));
    const int clean_class = argmax_class(clean_pass.probabilities());
    const double clean_prob = clean_pass.probabilities().data[budget.target.klass];

    Image8 cur = image;
    bool success = false;
    double adv_prob = clean_prob;
    for (int it = 0; it < budget.iterations; ++it) {
        const auto pass = it == 0 ? clean_pass : forward(m, to_tensor(cur));
        if (it > 0) {
            adv_prob = pass.probabilities().data[budget.target.klass];
            if (argmax_class(pass.probabilities()) != clean_class) {
                success = true;
                break;
            }
        }
        const auto bwd = backward_loss(m, pass, budget.target.klass);
        for (size_t i = 0; i < cur.pixels.size(); ++i) {
            const double g = bwd.input_grad.data[i];
            if (g == 0.0) continue;
            int v = static_cast<int>(cur.pixels[i]) + (g > 0.0 ? step_size : -step_size);
            const int lo = std::max(0, static_cast<int>(image.pixels[i]) - k);
            const int hi = std::min(255, static_cast<int>(image.pixels[i]) + k);
            v = std::clamp(v, lo, hi);
            cur.pixels[i] = static_cast<uint8_t>(v);
        }
    }
    if (!success) {
        const auto pass = forward(m, to_tensor(cur));
        adv_prob = pass.probabilities().data[budget.target.klass];
        success = argmax_class(pass.probabilities()) != clean_class;
    }

    AttackResult res;
    res.adversarial = std::move(cur);
    res.delta_sign.resize(image.pixels.size());
    for (size_t i = 0; i < image.pixels.size(); ++i) {
        const int d = static_cast<int>(res.adversarial.pixels[i]) - static_cast<int>(image.pixels[i]);
        res.delta_sign[i] = d > 0 ? 1 : (d < 0 ? -1 : 0);
    }
    res.success = success;
    res.probability_drop = clean_prob - adv_prob;
    return res;
}

}  // namespace detail

// Single sign step of size k, then clipping to [0,255].
inline AttackResult fgsm(const Model& m, const Image8& image, const AttackBudget& budget) {
    if (budget.iterations != 1) throw std::invalid_argument("fgsm: iterations must be 1");
    return detail::attack_core(m, image, budget, budget.eps_steps);
}

// Iterated unit sign steps projected into the k-ball, no random start, early
// stop once the predicted class flips. With iterations = 1 and k = 1 this
// degenerates to fgsm.
inline AttackResult pgd(const Model& m, const Image8& image, const AttackBudget& budget) {
    return detail::attack_core(m, image, budget, 1);
}

}  // namespace ameval
