#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "cflow/error.hpp"
#include "cflow/rng.hpp"

namespace cflow {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
        if (e <= 0) throw ShapeError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor. Mostly used as a 2D matrix (rows = sequence
// positions, cols = features) or a 1D vector.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        const int64_t n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<size_t>(n), T(0)));
    }

    static Tensor full(Shape s, T v) {
        const int64_t n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<size_t>(n), v));
    }

    static Tensor gaussian(Shape s, Rng& rng, T stddev) {
        Tensor t = zeros(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.gaussian()) * stddev;
        return t;
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        const int64_t r = static_cast<int64_t>(rows.size());
        const int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
        std::vector<T> d;
        d.reserve(static_cast<size_t>(r * c));
        for (const auto& row : rows) {
            if (static_cast<int64_t>(row.size()) != c) throw ShapeError("ragged matrix literal");
            d.insert(d.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(d));
    }

    static Tensor vec(std::initializer_list<T> vals) {
        return Tensor({static_cast<int64_t>(vals.size())}, std::vector<T>(vals));
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    int64_t rows() const {
        if (shape.size() != 2) throw ShapeError("rows() requires a 2D tensor, got " + shape_str(shape));
        return shape[0];
    }

    int64_t cols() const {
        if (shape.size() != 2) throw ShapeError("cols() requires a 2D tensor, got " + shape_str(shape));
        return shape[1];
    }

    T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
    const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

struct BoolMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<uint8_t> v;

    BoolMatrix() = default;
    BoolMatrix(int64_t r, int64_t c, uint8_t fill = 0)
        : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {
        if (r < 0 || c < 0) throw ShapeError("negative BoolMatrix extents");
    }

    uint8_t at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols + j)]; }
    void set(int64_t i, int64_t j, bool b) { v[static_cast<size_t>(i * cols + j)] = b ? 1 : 0; }

    int64_t count_ones() const {
        int64_t n = 0;
        for (uint8_t b : v) n += b ? 1 : 0;
        return n;
    }
};

} // namespace cflow
