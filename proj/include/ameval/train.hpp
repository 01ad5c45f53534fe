#pragma once

#include <numeric>
#include <stdexcept>
#include <vector>

#include "ameval/dataset.hpp"
#include "ameval/model.hpp"

namespace ameval {

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 5;
    int batch_size = 4;
    uint64_t seed = 1;
    double init_scale = 1.0;
    // Caps learned logit margins; keeps desk-scale models in the regime where
    // a +-1 step attack is meaningful. 0 disables.
    double label_smoothing = 0.1;
};

struct TrainReport {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double final_loss = 0.0;
    int epochs = 0;
};

inline double accuracy(const Model& m, const Dataset& ds) {
    if (ds.items.empty()) return 0.0;
    int correct = 0;
    for (const auto& item : ds.items) {
        const auto pass = forward(m, to_tensor(item.image));
        correct += argmax_class(pass.probabilities()) == item.label;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.items.size());
}

// Plain minibatch SGD on cross-entropy. Initializes parameters from the
// config seed, so the result is a pure function of (architecture, dataset,
// config). Parameters are snapped to their float32 representation at the end;
// the in-memory model and its serialized form then behave identically.
inline TrainReport train(Model& model, const Dataset& train_set, const Dataset& test_set,
                         const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train: learning rate must be > 0");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (train_set.items.empty()) throw std::invalid_argument("train: empty dataset");
    const int classes = model.num_classes();
    for (const auto& item : train_set.items)
        if (item.label < 0 || item.label >= classes)
            throw std::invalid_argument("train: label out of range for model output arity");

    model.init_params(cfg.seed, cfg.init_scale);

    std::vector<size_t> order(train_set.items.size());
    std::iota(order.begin(), order.end(), 0);

    double last_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5fu, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t batch_end = std::min(pos + static_cast<size_t>(cfg.batch_size), order.size());
            ParamGrads grads = ParamGrads::zeros(model);
            for (size_t b = pos; b < batch_end; ++b) {
                const auto& item = train_set.items[order[b]];
                const auto pass = forward(model, to_tensor(item.image));
                epoch_loss += cross_entropy(pass.probabilities(), item.label);
                backward_loss(model, pass, item.label, &grads, cfg.label_smoothing);
            }
            const double step = cfg.learning_rate / static_cast<double>(batch_end - pos);
            for (size_t li = 0; li < model.layers.size(); ++li) {
                Layer& l = model.layers[li];
                for (size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= step * grads.weights[li][i];
                for (size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= step * grads.bias[li][i];
            }
            pos = batch_end;
        }
        last_loss = epoch_loss / static_cast<double>(order.size());
    }

    model.snap_to_float32();

    TrainReport report;
    report.train_accuracy = accuracy(model, train_set);
    report.test_accuracy = test_set.items.empty() ? 0.0 : accuracy(model, test_set);
    report.final_loss = last_loss;
    report.epochs = cfg.epochs;
    return report;
}

}  // namespace ameval
