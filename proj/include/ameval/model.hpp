#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/rng.hpp"
#include "ameval/tensor.hpp"

namespace ameval {

// Minimal differentiable CNN: conv2d (stride 1, zero padding), ReLU, 2x2 max
// pool, global average pool, dense, softmax. Models are immutable after
// construction/training; forward and backward keep all state in per-call
// pass objects so concurrent evaluation is safe.

enum class LayerKind { Conv2D, ReLU, MaxPool2, GlobalAvgPool, Dense, Softmax };

struct Layer {
    LayerKind kind = LayerKind::ReLU;
    std::string name;

    // conv
    int out_ch = 0, in_ch = 0, ksize = 0;
    bool same_pad = true;
    // dense
    int out_dim = 0, in_dim = 0;

    std::vector<double> weights;  // conv: [out][in][ky][kx], dense: [out][in]
    std::vector<double> bias;

    std::vector<int> output_shape;
};

struct ClassProbe {
    int klass = 0;
    double probability = 0.0;
};

class Model {
public:
    std::vector<int> input_shape;  // CHW
    std::vector<Layer> layers;

    Model() = default;
    explicit Model(std::vector<int> in_shape) : input_shape(std::move(in_shape)) {
        if (input_shape.size() != 3)
            throw std::invalid_argument("model: input shape must be CHW");
        Tensor::checked_numel(input_shape);
    }

    Model& add_conv(int out_ch, int ksize = 3, bool same_pad = true) {
        Layer l;
        l.kind = LayerKind::Conv2D;
        l.out_ch = out_ch;
        l.ksize = ksize;
        l.same_pad = same_pad;
        l.name = "conv" + std::to_string(1 + count(LayerKind::Conv2D));
        layers.push_back(std::move(l));
        return *this;
    }
    Model& add_relu() { return add_plain(LayerKind::ReLU, "relu" + std::to_string(1 + count(LayerKind::ReLU))); }
    Model& add_maxpool() { return add_plain(LayerKind::MaxPool2, "pool" + std::to_string(1 + count(LayerKind::MaxPool2))); }
    Model& add_gap() { return add_plain(LayerKind::GlobalAvgPool, "gap"); }
    Model& add_dense(int out_dim) {
        Layer l;
        l.kind = LayerKind::Dense;
        l.out_dim = out_dim;
        l.name = "dense" + std::to_string(1 + count(LayerKind::Dense));
        layers.push_back(std::move(l));
        return *this;
    }
    Model& add_softmax() { return add_plain(LayerKind::Softmax, "softmax"); }

    // Resolves shapes, validates the chain and allocates parameters.
    void finalize() {
        if (layers.empty()) throw std::invalid_argument("model: no layers");
        std::vector<int> cur = input_shape;
        for (size_t li = 0; li < layers.size(); ++li) {
            Layer& l = layers[li];
            switch (l.kind) {
                case LayerKind::Conv2D: {
                    if (cur.size() != 3) throw std::invalid_argument(l.name + ": needs CHW input");
                    l.in_ch = cur[0];
                    int h = cur[1], w = cur[2];
                    if (!l.same_pad) {
                        h = h - l.ksize + 1;
                        w = w - l.ksize + 1;
                        if (h <= 0 || w <= 0)
                            throw std::invalid_argument(l.name + ": kernel larger than input");
                    }
                    l.output_shape = {l.out_ch, h, w};
                    l.weights.assign(static_cast<size_t>(l.out_ch) * l.in_ch * l.ksize * l.ksize, 0.0);
                    l.bias.assign(l.out_ch, 0.0);
                    break;
                }
                case LayerKind::ReLU:
                    l.output_shape = cur;
                    break;
                case LayerKind::MaxPool2: {
                    if (cur.size() != 3) throw std::invalid_argument(l.name + ": needs CHW input");
                    if (cur[1] % 2 != 0 || cur[2] % 2 != 0)
                        throw std::invalid_argument(l.name + ": spatial dims must be even");
                    l.output_shape = {cur[0], cur[1] / 2, cur[2] / 2};
                    break;
                }
                case LayerKind::GlobalAvgPool: {
                    if (cur.size() != 3) throw std::invalid_argument("gap: needs CHW input");
                    l.output_shape = {cur[0]};
                    break;
                }
                case LayerKind::Dense: {
                    l.in_dim = static_cast<int>(Tensor::checked_numel(cur));
                    l.output_shape = {l.out_dim};
                    l.weights.assign(static_cast<size_t>(l.out_dim) * l.in_dim, 0.0);
                    l.bias.assign(l.out_dim, 0.0);
                    break;
                }
                case LayerKind::Softmax: {
                    if (cur.size() != 1) throw std::invalid_argument("softmax: needs a flat logit vector");
                    if (li + 1 != layers.size()) throw std::invalid_argument("softmax: must be the last layer");
                    l.output_shape = cur;
                    break;
                }
            }
            cur = l.output_shape;
        }
        if (layers.back().kind != LayerKind::Softmax)
            throw std::invalid_argument("model: last layer must be softmax");
        finalized_ = true;
    }

    // Uniform init scaled by 1/sqrt(fan-in) per layer (a flat global range
    // fails to train once layer sizes diverge), one derived stream per
    // parameterized layer. Biases start at zero.
    void init_params(uint64_t seed, double scale) {
        require_finalized();
        for (size_t li = 0; li < layers.size(); ++li) {
            Layer& l = layers[li];
            if (l.weights.empty()) continue;
            const int fan_in = l.kind == LayerKind::Conv2D ? l.in_ch * l.ksize * l.ksize : l.in_dim;
            const double s = scale / std::sqrt(static_cast<double>(fan_in));
            Rng rng(derive_seed(seed, li));
            for (double& w : l.weights) w = rng.uniform(-s, s);
            for (double& b : l.bias) b = 0.0;
        }
    }

    int num_classes() const {
        require_finalized();
        return layers.back().output_shape[0];
    }

    int find_layer(const std::string& name) const {
        for (size_t i = 0; i < layers.size(); ++i)
            if (layers[i].name == name) return static_cast<int>(i);
        throw std::invalid_argument("model: unknown layer '" + name + "'");
    }

    // Deepest conv/ReLU layer with spatial extent, the usual GradCAM target
    // (pool outputs only as a fallback; they halve the map resolution).
    std::string last_spatial_layer() const {
        for (size_t i = layers.size(); i-- > 0;)
            if (layers[i].output_shape.size() == 3 &&
                (layers[i].kind == LayerKind::Conv2D || layers[i].kind == LayerKind::ReLU))
                return layers[i].name;
        for (size_t i = layers.size(); i-- > 0;)
            if (layers[i].output_shape.size() == 3) return layers[i].name;
        throw std::invalid_argument("model: no spatial layer");
    }

    bool finalized() const { return finalized_; }

    // Parameters rounded to their float32 representation; models behave
    // identically whether used in-memory or reloaded from disk.
    void snap_to_float32() {
        for (Layer& l : layers) {
            for (double& w : l.weights) w = static_cast<double>(static_cast<float>(w));
            for (double& b : l.bias) b = static_cast<double>(static_cast<float>(b));
        }
    }

private:
    bool finalized_ = false;

    void require_finalized() const {
        if (!finalized_) throw std::logic_error("model: finalize() not called");
    }

    int count(LayerKind k) const {
        int n = 0;
        for (const auto& l : layers) n += (l.kind == k);
        return n;
    }

    Model& add_plain(LayerKind kind, std::string name) {
        Layer l;
        l.kind = kind;
        l.name = std::move(name);
        layers.push_back(std::move(l));
        return *this;
    }
};

struct ForwardPass {
    Tensor input;
    std::vector<Tensor> outputs;  // one per layer

    bool valid() const { return !outputs.empty(); }
    const Tensor& probabilities() const {
        if (!valid()) throw std::logic_error("forward pass: no forward performed");
        return outputs.back();
    }
};

struct BackwardPass {
    Tensor input_grad;
    std::vector<Tensor> output_grads;  // gradient wrt each layer output

    bool valid() const { return !output_grads.empty(); }
};

// Parameter gradients, same layout as Layer::weights / Layer::bias.
struct ParamGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    static ParamGrads zeros(const Model& m) {
        ParamGrads g;
        g.weights.resize(m.layers.size());
        g.bias.resize(m.layers.size());
        for (size_t i = 0; i < m.layers.size(); ++i) {
            g.weights[i].assign(m.layers[i].weights.size(), 0.0);
            g.bias[i].assign(m.layers[i].bias.size(), 0.0);
        }
        return g;
    }
};

namespace detail {

inline void conv_forward(const Layer& l, const Tensor& in, Tensor& out) {
    const int ih = in.shape[1], iw = in.shape[2];
    const int oh = l.output_shape[1], ow = l.output_shape[2];
    const int k = l.ksize;
    const int pad = l.same_pad ? k / 2 : 0;
    for (int o = 0; o < l.out_ch; ++o) {
        const double* wbase = &l.weights[static_cast<size_t>(o) * l.in_ch * k * k];
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = l.bias[o];
                for (int i = 0; i < l.in_ch; ++i) {
                    const double* wrow = wbase + static_cast<size_t>(i) * k * k;
                    const double* irow = &in.data[static_cast<size_t>(i) * ih * iw];
                    for (int ky = 0; ky < k; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= ih) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= iw) continue;
                            acc += wrow[ky * k + kx] * irow[yy * iw + xx];
                        }
                    }
                }
                out.data[(static_cast<size_t>(o) * oh + y) * ow + x] = acc;
            }
        }
    }
}

inline void conv_backward(const Layer& l, const Tensor& in, const Tensor& gout, Tensor& gin,
                          std::vector<double>* gw, std::vector<double>* gb) {
    const int ih = in.shape[1], iw = in.shape[2];
    const int oh = l.output_shape[1], ow = l.output_shape[2];
    const int k = l.ksize;
    const int pad = l.same_pad ? k / 2 : 0;
    for (int o = 0; o < l.out_ch; ++o) {
        const double* wbase = &l.weights[static_cast<size_t>(o) * l.in_ch * k * k];
        double* gwbase = gw ? &(*gw)[static_cast<size_t>(o) * l.in_ch * k * k] : nullptr;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const double g = gout.data[(static_cast<size_t>(o) * oh + y) * ow + x];
                if (g == 0.0) continue;
                if (gb) (*gb)[o] += g;
                for (int i = 0; i < l.in_ch; ++i) {
                    const double* wrow = wbase + static_cast<size_t>(i) * k * k;
                    double* gwrow = gwbase ? gwbase + static_cast<size_t>(i) * k * k : nullptr;
                    const double* irow = &in.data[static_cast<size_t>(i) * ih * iw];
                    double* girow = &gin.data[static_cast<size_t>(i) * ih * iw];
                    for (int ky = 0; ky < k; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= ih) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= iw) continue;
                            girow[yy * iw + xx] += wrow[ky * k + kx] * g;
                            if (gwrow) gwrow[ky * k + kx] += irow[yy * iw + xx] * g;
                        }
                    }
                }
            }
        }
    }
}

inline void layer_forward(const Layer& l, const Tensor& in, Tensor& out) {
    switch (l.kind) {
        case LayerKind::Conv2D:
            conv_forward(l, in, out);
            break;
        case LayerKind::ReLU:
            for (size_t i = 0; i < in.data.size(); ++i)
                out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
            break;
        case LayerKind::MaxPool2: {
            const int c = l.output_shape[0], oh = l.output_shape[1], ow = l.output_shape[2];
            const int ih = oh * 2, iw = ow * 2;
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x) {
                        const double* base = &in.data[(static_cast<size_t>(ch) * ih + 2 * y) * iw + 2 * x];
                        double m = base[0];
                        if (base[1] > m) m = base[1];
                        if (base[iw] > m) m = base[iw];
                        if (base[iw + 1] > m) m = base[iw + 1];
                        out.data[(static_cast<size_t>(ch) * oh + y) * ow + x] = m;
                    }
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const int c = in.shape[0];
            const size_t hw = static_cast<size_t>(in.shape[1]) * in.shape[2];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                const double* base = &in.data[ch * hw];
                for (size_t i = 0; i < hw; ++i) acc += base[i];
                out.data[ch] = acc / static_cast<double>(hw);
            }
            break;
        }
        case LayerKind::Dense: {
            for (int o = 0; o < l.out_dim; ++o) {
                const double* wrow = &l.weights[static_cast<size_t>(o) * l.in_dim];
                double acc = l.bias[o];
                for (int i = 0; i < l.in_dim; ++i) acc += wrow[i] * in.data[i];
                out.data[o] = acc;
            }
            break;
        }
        case LayerKind::Softmax: {
            double mx = in.data[0];
            for (double v : in.data) mx = std::max(mx, v);
            double sum = 0.0;
            for (size_t i = 0; i < in.data.size(); ++i) {
                out.data[i] = std::exp(in.data[i] - mx);
                sum += out.data[i];
            }
            for (double& v : out.data) v /= sum;
            break;
        }
    }
}

inline void layer_backward(const Layer& l, const Tensor& in, const Tensor& out, const Tensor& gout,
                           Tensor& gin, std::vector<double>* gw, std::vector<double>* gb) {
    switch (l.kind) {
        case LayerKind::Conv2D:
            conv_backward(l, in, gout, gin, gw, gb);
            break;
        case LayerKind::ReLU:
            for (size_t i = 0; i < in.data.size(); ++i)
                gin.data[i] = in.data[i] > 0.0 ? gout.data[i] : 0.0;
            break;
        case LayerKind::MaxPool2: {
            // ties broken toward the first element in row-major window order
            const int c = l.output_shape[0], oh = l.output_shape[1], ow = l.output_shape[2];
            const int iw = ow * 2;
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x) {
                        const double g = gout.data[(static_cast<size_t>(ch) * oh + y) * ow + x];
                        const size_t b = (static_cast<size_t>(ch) * oh * 2 + 2 * y) * iw + 2 * x;
                        const size_t offs[4] = {b, b + 1, b + iw, b + iw + 1};
                        size_t best = offs[0];
                        for (int t = 1; t < 4; ++t)
                            if (in.data[offs[t]] > in.data[best]) best = offs[t];
                        gin.data[best] += g;
                    }
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const int c = in.shape[0];
            const size_t hw = static_cast<size_t>(in.shape[1]) * in.shape[2];
            for (int ch = 0; ch < c; ++ch) {
                const double g = gout.data[ch] / static_cast<double>(hw);
                double* base = &gin.data[ch * hw];
                for (size_t i = 0; i < hw; ++i) base[i] += g;
            }
            break;
        }
        case LayerKind::Dense: {
            for (int o = 0; o < l.out_dim; ++o) {
                const double g = gout.data[o];
                if (gb) (*gb)[o] += g;
                const double* wrow = &l.weights[static_cast<size_t>(o) * l.in_dim];
                double* gwrow = gw ? &(*gw)[static_cast<size_t>(o) * l.in_dim] : nullptr;
                for (int i = 0; i < l.in_dim; ++i) {
                    gin.data[i] += wrow[i] * g;
                    if (gwrow) gwrow[i] += in.data[i] * g;
                }
            }
            break;
        }
        case LayerKind::Softmax: {
            // g_z = p * (g_p - <g_p, p>)
            double dot = 0.0;
            for (size_t i = 0; i < out.data.size(); ++i) dot += gout.data[i] * out.data[i];
            for (size_t i = 0; i < out.data.size(); ++i)
                gin.data[i] = out.data[i] * (gout.data[i] - dot);
            break;
        }
    }
    (void)out;
}

}  // namespace detail

inline ForwardPass forward(const Model& m, const Tensor& x) {
    if (!m.finalized()) throw std::logic_error("model: finalize() not called");
    if (x.shape != m.input_shape)
        throw std::invalid_argument("forward: input shape " + shape_string(x.shape) +
                                    " does not match model input " + shape_string(m.input_shape));
    ForwardPass pass;
    pass.input = x;
    pass.outputs.reserve(m.layers.size());
    const Tensor* cur = &pass.input;
    for (const Layer& l : m.layers) {
        Tensor out(l.output_shape);
        detail::layer_forward(l, *cur, out);
        pass.outputs.push_back(std::move(out));
        cur = &pass.outputs.back();
    }
    return pass;
}

// Runs the layers after `layer_index` on a replacement activation.
inline Tensor forward_tail(const Model& m, int layer_index, const Tensor& activation) {
    if (layer_index < 0 || layer_index >= static_cast<int>(m.layers.size()))
        throw std::invalid_argument("forward_tail: layer index out of range");
    if (activation.shape != m.layers[layer_index].output_shape)
        throw std::invalid_argument("forward_tail: activation shape mismatch");
    Tensor cur = activation;
    for (size_t li = layer_index + 1; li < m.layers.size(); ++li) {
        Tensor out(m.layers[li].output_shape);
        detail::layer_forward(m.layers[li], cur, out);
        cur = std::move(out);
    }
    return cur;
}

inline int argmax_class(const Tensor& probs) {
    int best = 0;
    for (size_t i = 1; i < probs.data.size(); ++i)
        if (probs.data[i] > probs.data[best]) best = static_cast<int>(i);
    return best;
}

namespace detail {

// Common backward sweep. The seed is the gradient at the logits (input of the
// final softmax); the softmax entry of output_grads is filled with the
// gradient at the probabilities for completeness.
inline BackwardPass backward_sweep(const Model& m, const ForwardPass& pass, Tensor logits_grad,
                                   Tensor probs_grad, ParamGrads* params) {
    if (!pass.valid()) throw std::logic_error("backward: no forward performed");
    if (pass.outputs.size() != m.layers.size())
        throw std::logic_error("backward: pass does not match model");
    const int n = static_cast<int>(m.layers.size());
    BackwardPass bwd;
    bwd.output_grads.resize(n);
    bwd.output_grads[n - 1] = std::move(probs_grad);
    if (n >= 2) bwd.output_grads[n - 2] = std::move(logits_grad);
    for (int l = n - 2; l >= 0; --l) {
        const Tensor& in = l == 0 ? pass.input : pass.outputs[l - 1];
        Tensor gin(in.shape);
        std::vector<double>* gw = params ? &params->weights[l] : nullptr;
        std::vector<double>* gb = params ? &params->bias[l] : nullptr;
        detail::layer_backward(m.layers[l], in, pass.outputs[l], bwd.output_grads[l], gin, gw, gb);
        if (l == 0)
            bwd.input_grad = std::move(gin);
        else
            bwd.output_grads[l - 1] = std::move(gin);
    }
    if (n == 1) bwd.input_grad = Tensor(m.input_shape);  // lone softmax, no input path
    return bwd;
}

}  // namespace detail

// Gradient of the softmax probability of `klass` wrt input and activations.
inline BackwardPass backward_probability(const Model& m, const ForwardPass& pass, int klass) {
    const Tensor& p = pass.probabilities();
    if (klass < 0 || klass >= static_cast<int>(p.data.size()))
        throw std::invalid_argument("backward: class id out of range");
    Tensor gz(p.shape);
    const double pc = p.data[klass];
    for (size_t j = 0; j < p.data.size(); ++j)
        gz.data[j] = pc * ((static_cast<int>(j) == klass ? 1.0 : 0.0) - p.data[j]);
    Tensor gp(p.shape);
    gp.data[klass] = 1.0;
    return detail::backward_sweep(m, pass, std::move(gz), std::move(gp), nullptr);
}

// Gradient of the cross-entropy loss against `target` wrt input; optionally
// accumulates parameter gradients for training. `label_smoothing` mixes the
// one-hot target with the uniform distribution (training-only regularizer;
// attacks always use the plain loss).
inline BackwardPass backward_loss(const Model& m, const ForwardPass& pass, int target,
                                  ParamGrads* params = nullptr, double label_smoothing = 0.0) {
    const Tensor& p = pass.probabilities();
    if (target < 0 || target >= static_cast<int>(p.data.size()))
        throw std::invalid_argument("backward: class id out of range");
    const double c = static_cast<double>(p.data.size());
    Tensor gz(p.shape);
    Tensor gp(p.shape);
    for (size_t j = 0; j < p.data.size(); ++j) {
        const double y = (static_cast<int>(j) == target ? 1.0 - label_smoothing : 0.0) +
                         label_smoothing / c;
        gz.data[j] = p.data[j] - y;
        gp.data[j] = -y / std::max(p.data[j], 1e-300);
    }
    return detail::backward_sweep(m, pass, std::move(gz), std::move(gp), params);
}

struct LayerCapture {
    Tensor activations;
    Tensor gradients;
};

// Channel-major activation and gradient maps of a named layer, taken from the
// per-call pass objects.
inline LayerCapture layer_capture(const Model& m, const ForwardPass& pass, const BackwardPass& bwd,
                                  const std::string& layer_name) {
    const int li = m.find_layer(layer_name);
    if (!pass.valid() || !bwd.valid())
        throw std::logic_error("layer_capture: no forward/backward performed");
    return {pass.outputs[li], bwd.output_grads[li]};
}

inline double cross_entropy(const Tensor& probs, int target) {
    return -std::log(std::max(probs.data[target], 1e-300));
}

}  // namespace ameval
