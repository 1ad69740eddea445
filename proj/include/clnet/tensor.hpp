#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "clnet/errors.hpp"

namespace clnet {

// Dense H x W x C grid, HWC layout (channel fastest). Used for images,
// feature grids and neural maps.
template <typename T>
struct Tensor3 {
    int h = 0, w = 0, c = 0;
    std::vector<T> v;

    Tensor3() = default;
    Tensor3(int h_, int w_, int c_, T fill = T(0))
        : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {}

    T& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    const T& at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }

    std::string shape_str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Tensor3<U> cast() const {
        Tensor3<U> out(h, w, c);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

// Row-major matrix, used for embeddings and perceptron weights.
template <typename T>
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<T> v;

    Matrix() = default;
    Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows, cols);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <typename T>
T l2_norm(const std::vector<T>& v) {
    double acc = 0.0;
    for (const T& x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return static_cast<T>(std::sqrt(acc));
}

enum class View { ground, satellite };

inline const char* view_name(View v) { return v == View::ground ? "ground" : "satellite"; }

inline View view_from_string(const std::string& s) {
    if (s == "ground") return View::ground;
    if (s == "satellite") return View::satellite;
    throw ValidationError("unknown view '" + s + "' (expected ground|satellite)");
}

} // namespace clnet
