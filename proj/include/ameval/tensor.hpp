#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ameval {

// Dense row-major tensor of doubles. Images and activations use CHW layout.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(checked_numel(shape), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != checked_numel(shape))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    size_t numel() const { return data.size(); }

    // CHW accessors
    double& at(int c, int y, int x) { return data[idx3(c, y, x)]; }
    double at(int c, int y, int x) const { return data[idx3(c, y, x)]; }

    int channels() const { return shape.size() == 3 ? shape[0] : 1; }
    int height() const { return shape.size() == 3 ? shape[1] : (shape.size() == 2 ? shape[0] : 1); }
    int width() const { return shape.size() == 3 ? shape[2] : (shape.size() == 2 ? shape[1] : static_cast<int>(numel())); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static size_t checked_numel(const std::vector<int>& s) {
        if (s.empty()) return 0;
        size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw std::invalid_argument("tensor: non-positive extent");
            n *= static_cast<size_t>(e);
        }
        return n;
    }

private:
    size_t idx3(int c, int y, int x) const {
        return (static_cast<size_t>(c) * shape[1] + y) * shape[2] + x;
    }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline std::string shape_string(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace ameval
