#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ameval/model.hpp"

namespace ameval {

// Flat binary model format, little-endian:
//   magic "AMDL", u32 version, u32 input C/H/W, u32 layer count,
//   then per layer: u32 kind, u32 name length + bytes, kind-specific
//   descriptor fields, u32 weight count + f32 block, u32 bias count + f32
//   block. Parameters are stored as float32.

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

inline uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("model: truncated file");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline void put_f32_block(std::ostream& out, const std::vector<double>& v) {
    put_u32(out, static_cast<uint32_t>(v.size()));
    for (double d : v) {
        float f = static_cast<float>(d);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

inline std::vector<double> get_f32_block(std::istream& in) {
    const uint32_t n = get_u32(in);
    std::vector<double> v(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        v[i] = static_cast<double>(f);
    }
    return v;
}

}  // namespace detail

inline void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("model: cannot write " + path);
    out.write("AMDL", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<uint32_t>(m.input_shape[0]));
    detail::put_u32(out, static_cast<uint32_t>(m.input_shape[1]));
    detail::put_u32(out, static_cast<uint32_t>(m.input_shape[2]));
    detail::put_u32(out, static_cast<uint32_t>(m.layers.size()));
    for (const Layer& l : m.layers) {
        detail::put_u32(out, static_cast<uint32_t>(l.kind));
        detail::put_u32(out, static_cast<uint32_t>(l.name.size()));
        out.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
        if (l.kind == LayerKind::Conv2D) {
            detail::put_u32(out, static_cast<uint32_t>(l.out_ch));
            detail::put_u32(out, static_cast<uint32_t>(l.ksize));
            detail::put_u32(out, l.same_pad ? 1u : 0u);
        } else if (l.kind == LayerKind::Dense) {
            detail::put_u32(out, static_cast<uint32_t>(l.out_dim));
        }
        detail::put_f32_block(out, l.weights);
        detail::put_f32_block(out, l.bias);
    }
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("model: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "AMDL", 4) != 0)
        throw std::runtime_error("model: bad magic in " + path);
    const uint32_t version = detail::get_u32(in);
    if (version != 1) throw std::runtime_error("model: unsupported version");
    const int c = static_cast<int>(detail::get_u32(in));
    const int h = static_cast<int>(detail::get_u32(in));
    const int w = static_cast<int>(detail::get_u32(in));
    Model m({c, h, w});
    const uint32_t layer_count = detail::get_u32(in);
    std::vector<std::vector<double>> weights(layer_count), biases(layer_count);
    for (uint32_t i = 0; i < layer_count; ++i) {
        const auto kind = static_cast<LayerKind>(detail::get_u32(in));
        const uint32_t nlen = detail::get_u32(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (!in) throw std::runtime_error("model: truncated file");
        switch (kind) {
            case LayerKind::Conv2D: {
                const int out_ch = static_cast<int>(detail::get_u32(in));
                const int ksize = static_cast<int>(detail::get_u32(in));
                const bool pad = detail::get_u32(in) != 0;
                m.add_conv(out_ch, ksize, pad);
                break;
            }
            case LayerKind::Dense:
                m.add_dense(static_cast<int>(detail::get_u32(in)));
                break;
            case LayerKind::ReLU: m.add_relu(); break;
            case LayerKind::MaxPool2: m.add_maxpool(); break;
            case LayerKind::GlobalAvgPool: m.add_gap(); break;
            case LayerKind::Softmax: m.add_softmax(); break;
            default: throw std::runtime_error("model: unknown layer kind");
        }
        m.layers.back().name = name;
        weights[i] = detail::get_f32_block(in);
        biases[i] = detail::get_f32_block(in);
    }
    m.finalize();
    for (uint32_t i = 0; i < layer_count; ++i) {
        if (weights[i].size() != m.layers[i].weights.size() ||
            biases[i].size() != m.layers[i].bias.size())
            throw std::runtime_error("model: parameter block size mismatch");
        m.layers[i].weights = std::move(weights[i]);
        m.layers[i].bias = std::move(biases[i]);
    }
    return m;
}

}  // namespace ameval
