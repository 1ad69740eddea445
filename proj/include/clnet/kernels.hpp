#pragma once

// Data-parallel kernels behind the encoder, the view-map machinery and the
// loss. clnet::kernels holds the OpenMP versions used everywhere;
// clnet::kernels::ref (kernels_ref.hpp) holds independently written serial
// loop nests used as the reference in tests and in the kernel benchmark.
//
// Every kernel is deterministic for any thread count: each output element
// is owned by exactly one iteration and accumulated in a fixed order
// (bias, then ky/kx/ci ascending for conv; input index ascending for
// affine). The reference versions follow the same per-element order, so
// tests/test_kernels_parity.cpp can assert bitwise equality.
//
// Conv weight layout: [ky][kx][ci][co] flattened, bias [co].
// Affine weight layout: [out][in] row-major.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "clnet/tensor.hpp"

namespace clnet::kernels {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
inline T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
inline T gelu_grad(T x) {
    const T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779399460599343819);
    return T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2))) + x * phi;
}

template <typename T>
void conv2d_forward(const Tensor3<T>& in, const std::vector<T>& w, const std::vector<T>& b,
                    int k, int stride, int pad, Tensor3<T>& out) {
    const int ih = in.h, iw = in.w, ci = in.c, co = out.c;
    const int oh = out.h, ow = out.w;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* acc = &out.at(oy, ox, 0);
            for (int o = 0; o < co; ++o) acc[o] = b[o];
            for (int ky = 0; ky < k; ++ky) {
                const int y = oy * stride + ky - pad;
                if (y < 0 || y >= ih) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int x = ox * stride + kx - pad;
                    if (x < 0 || x >= iw) continue;
                    const T* src = &in.at(y, x, 0);
                    const T* wp = &w[(static_cast<size_t>(ky) * k + kx) * ci * co];
                    for (int c = 0; c < ci; ++c) {
                        const T sv = src[c];
                        const T* wrow = wp + static_cast<size_t>(c) * co;
                        for (int o = 0; o < co; ++o) acc[o] += sv * wrow[o];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Tensor3<T>& gout, const std::vector<T>& w, int k, int stride,
                           int pad, Tensor3<T>& gin) {
    const int ih = gin.h, iw = gin.w, ci = gin.c, co = gout.c;
    const int oh = gout.h, ow = gout.w;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int y = 0; y < ih; ++y) {
        for (int x = 0; x < iw; ++x) {
            T* acc = &gin.at(y, x, 0);
            for (int c = 0; c < ci; ++c) acc[c] = T(0);
            for (int ky = 0; ky < k; ++ky) {
                const int ny = y + pad - ky;
                if (ny < 0 || ny % stride != 0) continue;
                const int oy = ny / stride;
                if (oy >= oh) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int nx = x + pad - kx;
                    if (nx < 0 || nx % stride != 0) continue;
                    const int ox = nx / stride;
                    if (ox >= ow) continue;
                    const T* g = &gout.at(oy, ox, 0);
                    const T* wp = &w[(static_cast<size_t>(ky) * k + kx) * ci * co];
                    for (int c = 0; c < ci; ++c) {
                        const T* wrow = wp + static_cast<size_t>(c) * co;
                        T s = T(0);
                        for (int o = 0; o < co; ++o) s += g[o] * wrow[o];
                        acc[c] += s;
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_params(const Tensor3<T>& gout, const Tensor3<T>& in, int k, int stride,
                            int pad, std::vector<T>& gw, std::vector<T>& gb) {
    const int ih = in.h, iw = in.w, ci = in.c, co = gout.c;
    const int oh = gout.h, ow = gout.w;
    const int ntap = k * k * ci;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int tap = 0; tap < ntap; ++tap) {
        const int ky = tap / (k * ci);
        const int kx = (tap / ci) % k;
        const int c = tap % ci;
        T* grow = &gw[static_cast<size_t>(tap) * co];
        for (int o = 0; o < co; ++o) grow[o] = T(0);
        for (int oy = 0; oy < oh; ++oy) {
            const int y = oy * stride + ky - pad;
            if (y < 0 || y >= ih) continue;
            for (int ox = 0; ox < ow; ++ox) {
                const int x = ox * stride + kx - pad;
                if (x < 0 || x >= iw) continue;
                const T sv = in.at(y, x, c);
                const T* g = &gout.at(oy, ox, 0);
                for (int o = 0; o < co; ++o) grow[o] += sv * g[o];
            }
        }
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int o = 0; o < co; ++o) {
        T s = T(0);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) s += gout.at(oy, ox, o);
        gb[o] = s;
    }
}

template <typename T>
void gelu_forward(const std::vector<T>& in, std::vector<T>& out) {
    const int n = static_cast<int>(in.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) out[i] = gelu(in[i]);
}

template <typename T>
void gelu_backward(const std::vector<T>& pre, const std::vector<T>& gout, std::vector<T>& gin) {
    const int n = static_cast<int>(pre.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) gin[i] = gout[i] * gelu_grad(pre[i]);
}

// out[r][o] = b[o] + sum_i in[r][i] * w[o][i]
template <typename T>
void affine_forward(const Matrix<T>& in, const Matrix<T>& w, const std::vector<T>& b,
                    Matrix<T>& out) {
    const int rows = in.rows, ni = in.cols, no = out.cols;
    const int total = rows * no;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int t = 0; t < total; ++t) {
        const int r = t / no, o = t % no;
        const T* x = in.row(r);
        const T* wr = w.row(o);
        T s = b[o];
        for (int i = 0; i < ni; ++i) s += x[i] * wr[i];
        out.at(r, o) = s;
    }
}

template <typename T>
void affine_backward_input(const Matrix<T>& gout, const Matrix<T>& w, Matrix<T>& gin) {
    const int rows = gout.rows, no = gout.cols, ni = gin.cols;
    const int total = rows * ni;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int t = 0; t < total; ++t) {
        const int r = t / ni, i = t % ni;
        const T* g = gout.row(r);
        T s = T(0);
        for (int o = 0; o < no; ++o) s += g[o] * w.at(o, i);
        gin.at(r, i) = s;
    }
}

template <typename T>
void affine_backward_params(const Matrix<T>& gout, const Matrix<T>& in, Matrix<T>& gw,
                            std::vector<T>& gb) {
    const int rows = gout.rows, no = gout.cols, ni = in.cols;
    const int total = no * ni;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int t = 0; t < total; ++t) {
        const int o = t / ni, i = t % ni;
        T s = T(0);
        for (int r = 0; r < rows; ++r) s += gout.at(r, o) * in.at(r, i);
        gw.at(o, i) = s;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int o = 0; o < no; ++o) {
        T s = T(0);
        for (int r = 0; r < rows; ++r) s += gout.at(r, o);
        gb[o] = s;
    }
}

// m[i][j] = <a_i, b_j>
template <typename T>
void similarity(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& m) {
    const int ra = a.rows, rb = b.rows, d = a.cols;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < ra; ++i) {
        const T* ai = a.row(i);
        for (int j = 0; j < rb; ++j) {
            const T* bj = b.row(j);
            T s = T(0);
            for (int d2 = 0; d2 < d; ++d2) s += ai[d2] * bj[d2];
            m.at(i, j) = s;
        }
    }
}

// Per-channel: optional 1/l2 prescale over the H*W slice (skipped when the
// norm is below 1e-12), then max-shifted softmax over the H*W positions.
// scales[c] records the applied prescale factor for the backward pass.
// Final normalization multiplies by 1/z; the reference version must do the
// same for bitwise parity.
template <typename T>
void channel_l2_softmax(const Tensor3<T>& in, bool apply_l2, Tensor3<T>& out,
                        std::vector<T>& scales) {
    const int hw = in.h * in.w, c = in.c;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int ch = 0; ch < c; ++ch) {
        T scale = T(1);
        if (apply_l2) {
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) {
                const double x = static_cast<double>(in.v[static_cast<size_t>(p) * c + ch]);
                acc += x * x;
            }
            const T n = static_cast<T>(std::sqrt(acc));
            scale = (n < T(1e-12)) ? T(1) : T(1) / n;
        }
        scales[ch] = scale;
        T mx = in.v[ch] * scale;
        for (int p = 1; p < hw; ++p)
            mx = std::max(mx, in.v[static_cast<size_t>(p) * c + ch] * scale);
        T z = T(0);
        for (int p = 0; p < hw; ++p) {
            const T e = std::exp(in.v[static_cast<size_t>(p) * c + ch] * scale - mx);
            out.v[static_cast<size_t>(p) * c + ch] = e;
            z += e;
        }
        const T inv = T(1) / z;
        for (int p = 0; p < hw; ++p) out.v[static_cast<size_t>(p) * c + ch] *= inv;
    }
}

// Backward of channel_l2_softmax. in/soft/scales are the cached forward
// tensors; gsoft is dL/d(softmax output). A scale of exactly 1 under
// apply_l2 means the degenerate skip branch was taken, where the prescale
// is the identity.
template <typename T>
void channel_l2_softmax_backward(const Tensor3<T>& in, const Tensor3<T>& soft,
                                 const std::vector<T>& scales, bool apply_l2,
                                 const Tensor3<T>& gsoft, Tensor3<T>& gin) {
    const int hw = in.h * in.w, c = in.c;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int ch = 0; ch < c; ++ch) {
        T dot = T(0);
        for (int p = 0; p < hw; ++p)
            dot += gsoft.v[static_cast<size_t>(p) * c + ch] *
                   soft.v[static_cast<size_t>(p) * c + ch];
        const T scale = scales[ch];
        if (apply_l2 && scale != T(1)) {
            // u = x * scale with scale = 1/||x||: du_p/dx_q = scale*(d_pq - u_p*u_q)
            T gu_dot_u = T(0);
            for (int p = 0; p < hw; ++p) {
                const size_t idx = static_cast<size_t>(p) * c + ch;
                const T gu = soft.v[idx] * (gsoft.v[idx] - dot);
                gu_dot_u += gu * in.v[idx] * scale;
            }
            for (int p = 0; p < hw; ++p) {
                const size_t idx = static_cast<size_t>(p) * c + ch;
                const T gu = soft.v[idx] * (gsoft.v[idx] - dot);
                gin.v[idx] = scale * (gu - gu_dot_u * in.v[idx] * scale);
            }
        } else {
            for (int p = 0; p < hw; ++p) {
                const size_t idx = static_cast<size_t>(p) * c + ch;
                gin.v[idx] = soft.v[idx] * (gsoft.v[idx] - dot);
            }
        }
    }
}

template <typename T>
void global_avg_pool(const Tensor3<T>& in, std::vector<T>& out) {
    const int hw = in.h * in.w, c = in.c;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int ch = 0; ch < c; ++ch) {
        T s = T(0);
        for (int p = 0; p < hw; ++p) s += in.v[static_cast<size_t>(p) * c + ch];
        out[ch] = s / T(hw);
    }
}

template <typename T>
void global_avg_pool_backward(const std::vector<T>& gout, Tensor3<T>& gin) {
    const int n = static_cast<int>(gin.size());
    const int c = gin.c;
    const T inv = T(1) / T(gin.h * gin.w);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) gin.v[i] = gout[i % c] * inv;
}

} // namespace clnet::kernels

#include "clnet/kernels_ref.hpp"
