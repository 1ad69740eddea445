#pragma once

// Serial reference kernels: the plainest possible loop nests, one output
// element at a time, written independently of the OpenMP versions. Kept for
// the parity tests and the kernel benchmark. Per-element accumulation order
// matches kernels.hpp (bias first, then ky/kx/ci ascending, etc.) so the
// comparison can be bitwise.

#include <algorithm>
#include <cmath>
#include <vector>

#include "clnet/tensor.hpp"

namespace clnet::kernels::ref {

template <typename T>
void conv2d_forward(const Tensor3<T>& in, const std::vector<T>& w, const std::vector<T>& b,
                    int k, int stride, int pad, Tensor3<T>& out) {
    for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox)
            for (int o = 0; o < out.c; ++o) {
                T s = b[o];
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int y = oy * stride + ky - pad;
                        const int x = ox * stride + kx - pad;
                        if (y < 0 || y >= in.h || x < 0 || x >= in.w) continue;
                        for (int c = 0; c < in.c; ++c)
                            s += in.at(y, x, c) *
                                 w[((static_cast<size_t>(ky) * k + kx) * in.c + c) * out.c + o];
                    }
                out.at(oy, ox, o) = s;
            }
}

template <typename T>
void conv2d_backward_input(const Tensor3<T>& gout, const std::vector<T>& w, int k, int stride,
                           int pad, Tensor3<T>& gin) {
    for (int y = 0; y < gin.h; ++y)
        for (int x = 0; x < gin.w; ++x)
            for (int c = 0; c < gin.c; ++c) {
                T acc = T(0);
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int ny = y + pad - ky;
                        const int nx = x + pad - kx;
                        if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0) continue;
                        const int oy = ny / stride, ox = nx / stride;
                        if (oy >= gout.h || ox >= gout.w) continue;
                        T s = T(0);
                        for (int o = 0; o < gout.c; ++o)
                            s += gout.at(oy, ox, o) *
                                 w[((static_cast<size_t>(ky) * k + kx) * gin.c + c) * gout.c + o];
                        acc += s;
                    }
                gin.at(y, x, c) = acc;
            }
}

template <typename T>
void conv2d_backward_params(const Tensor3<T>& gout, const Tensor3<T>& in, int k, int stride,
                            int pad, std::vector<T>& gw, std::vector<T>& gb) {
    for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
            for (int c = 0; c < in.c; ++c)
                for (int o = 0; o < gout.c; ++o) {
                    T s = T(0);
                    for (int oy = 0; oy < gout.h; ++oy)
                        for (int ox = 0; ox < gout.w; ++ox) {
                            const int y = oy * stride + ky - pad;
                            const int x = ox * stride + kx - pad;
                            if (y < 0 || y >= in.h || x < 0 || x >= in.w) continue;
                            s += in.at(y, x, c) * gout.at(oy, ox, o);
                        }
                    gw[((static_cast<size_t>(ky) * k + kx) * in.c + c) * gout.c + o] = s;
                }
    for (int o = 0; o < gout.c; ++o) {
        T s = T(0);
        for (int oy = 0; oy < gout.h; ++oy)
            for (int ox = 0; ox < gout.w; ++ox) s += gout.at(oy, ox, o);
        gb[o] = s;
    }
}

template <typename T>
void gelu_forward(const std::vector<T>& in, std::vector<T>& out) {
    for (size_t i = 0; i < in.size(); ++i) out[i] = kernels::gelu(in[i]);
}

template <typename T>
void gelu_backward(const std::vector<T>& pre, const std::vector<T>& gout, std::vector<T>& gin) {
    for (size_t i = 0; i < pre.size(); ++i) gin[i] = gout[i] * kernels::gelu_grad(pre[i]);
}

template <typename T>
void affine_forward(const Matrix<T>& in, const Matrix<T>& w, const std::vector<T>& b,
                    Matrix<T>& out) {
    for (int r = 0; r < in.rows; ++r)
        for (int o = 0; o < out.cols; ++o) {
            T s = b[o];
            for (int i = 0; i < in.cols; ++i) s += in.at(r, i) * w.at(o, i);
            out.at(r, o) = s;
        }
}

template <typename T>
void affine_backward_input(const Matrix<T>& gout, const Matrix<T>& w, Matrix<T>& gin) {
    for (int r = 0; r < gout.rows; ++r)
        for (int i = 0; i < gin.cols; ++i) {
            T s = T(0);
            for (int o = 0; o < gout.cols; ++o) s += gout.at(r, o) * w.at(o, i);
            gin.at(r, i) = s;
        }
}

template <typename T>
void affine_backward_params(const Matrix<T>& gout, const Matrix<T>& in, Matrix<T>& gw,
                            std::vector<T>& gb) {
    for (int o = 0; o < gout.cols; ++o)
        for (int i = 0; i < in.cols; ++i) {
            T s = T(0);
            for (int r = 0; r < gout.rows; ++r) s += gout.at(r, o) * in.at(r, i);
            gw.at(o, i) = s;
        }
    for (int o = 0; o < gout.cols; ++o) {
        T s = T(0);
        for (int r = 0; r < gout.rows; ++r) s += gout.at(r, o);
        gb[o] = s;
    }
}

template <typename T>
void similarity(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& m) {
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            T s = T(0);
            for (int d = 0; d < a.cols; ++d) s += a.at(i, d) * b.at(j, d);
            m.at(i, j) = s;
        }
}

template <typename T>
void channel_l2_softmax(const Tensor3<T>& in, bool apply_l2, Tensor3<T>& out,
                        std::vector<T>& scales) {
    const int hw = in.h * in.w;
    for (int ch = 0; ch < in.c; ++ch) {
        T scale = T(1);
        if (apply_l2) {
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) {
                const double x = static_cast<double>(in.v[static_cast<size_t>(p) * in.c + ch]);
                acc += x * x;
            }
            const T n = static_cast<T>(std::sqrt(acc));
            scale = (n < T(1e-12)) ? T(1) : T(1) / n;
        }
        scales[ch] = scale;
        T mx = in.v[ch] * scale;
        for (int p = 1; p < hw; ++p)
            mx = std::max(mx, in.v[static_cast<size_t>(p) * in.c + ch] * scale);
        T z = T(0);
        for (int p = 0; p < hw; ++p) {
            const T e = std::exp(in.v[static_cast<size_t>(p) * in.c + ch] * scale - mx);
            out.v[static_cast<size_t>(p) * in.c + ch] = e;
            z += e;
        }
        const T inv = T(1) / z; // multiply, not divide: parity with kernels.hpp
        for (int p = 0; p < hw; ++p) out.v[static_cast<size_t>(p) * in.c + ch] *= inv;
    }
}

template <typename T>
void global_avg_pool(const Tensor3<T>& in, std::vector<T>& out) {
    const int hw = in.h * in.w;
    for (int ch = 0; ch < in.c; ++ch) {
        T s = T(0);
        for (int p = 0; p < hw; ++p) s += in.v[static_cast<size_t>(p) * in.c + ch];
        out[ch] = s / T(hw);
    }
}

} // namespace clnet::kernels::ref
