#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pdvmrnn/errors.hpp"

namespace pdvmrnn {

// Dense row-major tensor. Rank is dynamic; per-op shape contracts are checked
// at call sites. Image-like tensors are H x W x C (channel last).
template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;

    explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
        data.assign(numel_of(shape), S(0));
    }

    TensorT(std::vector<int> shp, std::vector<S> values)
        : shape(std::move(shp)), data(std::move(values)) {
        if (data.size() != numel_of(shape)) {
            throw ShapeError("tensor init: " + shape_str(shape) + " needs " +
                             std::to_string(numel_of(shape)) + " values, got " +
                             std::to_string(data.size()));
        }
    }

    static size_t numel_of(const std::vector<int>& shp) {
        size_t n = 1;
        for (int d : shp) {
            if (d <= 0) throw ShapeError("tensor shape has non-positive dim: " + shape_str(shp));
            n *= size_t(d);
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    int rank() const { return int(shape.size()); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    // 3-d accessors for H x W x C tensors.
    S& at(int h, int w, int c) { return data[(size_t(h) * shape[1] + w) * shape[2] + c]; }
    const S& at(int h, int w, int c) const { return data[(size_t(h) * shape[1] + w) * shape[2] + c]; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    void zero() { fill(S(0)); }

    // Same storage viewed under a different shape; element count must match.
    TensorT reshaped(std::vector<int> shp) const {
        if (numel_of(shp) != data.size()) {
            throw ShapeError("reshape: " + shape_str(shape) + " -> " + shape_str(shp) +
                             " changes element count");
        }
        TensorT out;
        out.shape = std::move(shp);
        out.data = data;
        return out;
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    static std::string shape_str(const std::vector<int>& shp) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shp.size(); ++i) {
            if (i) os << "x";
            os << shp[i];
        }
        os << "]";
        return os.str();
    }

    std::string shape_str() const { return shape_str(shape); }

    template <typename T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename S>
inline void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

// a += b
template <typename S>
inline void accumulate(TensorT<S>& a, const TensorT<S>& b) {
    check_same_shape(a, b, "accumulate");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

} // namespace pdvmrnn
