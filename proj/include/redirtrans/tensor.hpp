#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdt {

// Dense row-major tensor of 32-bit floats. Shapes are small (rank <= 4 in
// practice) and every entry is expected to stay finite; the graph layer
// enforces that after each op.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (static_cast<size_t>(numel_of(shape)) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static int numel_of(const std::vector<int>& s) {
        int n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dim");
            n *= d;
        }
        return n;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    static Tensor zeros(std::vector<int> s) {
        int n = numel_of(s);
        return Tensor(std::move(s), std::vector<float>(n, 0.0f));
    }
    static Tensor full(std::vector<int> s, float v) {
        int n = numel_of(s);
        return Tensor(std::move(s), std::vector<float>(n, v));
    }
    static Tensor scalar(float v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<float> v) {
        int n = static_cast<int>(v.size());
        return Tensor({n}, std::move(v));
    }

    float& at(int i) { return data[i]; }
    float at(int i) const { return data[i]; }
    // 2-D access; caller guarantees rank 2.
    float& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    float at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const std::vector<int>& s);

}  // namespace rdt
