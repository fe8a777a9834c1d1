#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace semo {

// Dense row-major tensor. Most of the math in this project is 2D
// (sequence-of-tokens matrices), so shapes are kept as a small vector
// and 2D accessors are the common path.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != count(shape))
            throw std::invalid_argument("tensor: data size does not match shape");
    }

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    int rows() const { assert(shape.size() == 2); return shape[0]; }
    int cols() const { assert(shape.size() == 2); return shape[1]; }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    T* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols(); }
    const T* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        t.fill(v);
        return t;
    }
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    T m = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        T d = std::abs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

}  // namespace semo
