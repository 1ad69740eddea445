#pragma once

// Symmetric InfoNCE over a batch of ground/satellite embedding pairs.
// The similarity matrix holds all pairwise dot products; the loss contrasts
// each diagonal entry against its row (ground->satellite), its column
// (satellite->ground), or the mean of both.

#include <cmath>
#include <string>
#include <vector>

#include "clnet/errors.hpp"
#include "clnet/kernels.hpp"
#include "clnet/tensor.hpp"

namespace clnet {

enum class LossDirection { g2s, s2g, symmetric };

inline LossDirection direction_from_string(const std::string& s) {
    if (s == "g2s") return LossDirection::g2s;
    if (s == "s2g") return LossDirection::s2g;
    if (s == "symmetric") return LossDirection::symmetric;
    throw ValidationError("unknown loss direction '" + s + "' (expected g2s|s2g|symmetric)");
}

// M[i][j] = <ground_i, satellite_j>.
template <typename T>
Matrix<T> similarity_matrix(const Matrix<T>& ground, const Matrix<T>& satellite) {
    if (ground.rows != satellite.rows)
        throw ConfigError("similarity_matrix: batch mismatch (" + std::to_string(ground.rows) +
                          " vs " + std::to_string(satellite.rows) + ")");
    if (ground.cols != satellite.cols)
        throw ConfigError("similarity_matrix: embedding dim mismatch");
    Matrix<T> m(ground.rows, satellite.rows);
    kernels::similarity(ground, satellite, m);
    return m;
}

namespace detail {

// Mean over rows of -log softmax(diag), with row-max subtraction. Also
// emits the softmax rows when a gradient is requested.
template <typename T>
T nce_one_direction(const Matrix<T>& m, T tau, bool transpose, Matrix<T>* soft) {
    const int b = m.rows;
    T total = T(0);
    for (int i = 0; i < b; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < b; ++j) {
            const T v = (transpose ? m.at(j, i) : m.at(i, j)) / tau;
            mx = std::max(mx, v);
        }
        T z = T(0);
        for (int j = 0; j < b; ++j) {
            const T e = std::exp((transpose ? m.at(j, i) : m.at(i, j)) / tau - mx);
            if (soft) soft->at(i, j) = e;
            z += e;
        }
        if (soft)
            for (int j = 0; j < b; ++j) soft->at(i, j) /= z;
        const T diag = m.at(i, i) / tau - mx;
        total += std::log(z) - diag;
    }
    return total / T(b);
}

} // namespace detail

// Optional caches for info_nce_backward.
template <typename T>
struct InfoNceCache {
    Matrix<T> soft_rows; // softmax over rows (g2s), soft_rows[i][j]
    Matrix<T> soft_cols; // softmax over cols (s2g), indexed [i][j] = P(row j | col i)
};

template <typename T>
T info_nce(const Matrix<T>& m, T tau, LossDirection dir, InfoNceCache<T>* cache = nullptr) {
    if (!(tau > T(0))) throw ConfigError("info_nce: tau must be > 0");
    if (m.rows != m.cols) throw ConfigError("info_nce: similarity matrix must be square");
    if (!m.all_finite()) throw NumericError("info_nce: non-finite similarity matrix");
    const int b = m.rows;
    Matrix<T>* rows = nullptr;
    Matrix<T>* cols = nullptr;
    if (cache) {
        cache->soft_rows = Matrix<T>(b, b);
        cache->soft_cols = Matrix<T>(b, b);
        rows = &cache->soft_rows;
        cols = &cache->soft_cols;
    }
    switch (dir) {
    case LossDirection::g2s:
        return detail::nce_one_direction(m, tau, false, rows);
    case LossDirection::s2g:
        return detail::nce_one_direction(m, tau, true, cols);
    case LossDirection::symmetric: {
        const T a = detail::nce_one_direction(m, tau, false, rows);
        const T c = detail::nce_one_direction(m, tau, true, cols);
        return (a + c) / T(2);
    }
    }
    throw ConfigError("info_nce: bad direction");
}

// dL/dM, plus dL/dtau when dtau is non-null (for the learnable-temperature
// mode, which optimizes log tau).
template <typename T>
Matrix<T> info_nce_backward(const Matrix<T>& m, T tau, LossDirection dir,
                            const InfoNceCache<T>& cache, T* dtau = nullptr) {
    const int b = m.rows;
    Matrix<T> g(b, b, T(0));
    const T wdir = dir == LossDirection::symmetric ? T(0.5) : T(1);
    if (dir == LossDirection::g2s || dir == LossDirection::symmetric) {
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < b; ++j) {
                T v = cache.soft_rows.at(i, j);
                if (i == j) v -= T(1);
                g.at(i, j) += wdir * v / (tau * T(b));
            }
    }
    if (dir == LossDirection::s2g || dir == LossDirection::symmetric) {
        for (int i = 0; i < b; ++i)   // i indexes columns of m
            for (int j = 0; j < b; ++j) {
                T v = cache.soft_cols.at(i, j);
                if (i == j) v -= T(1);
                g.at(j, i) += wdir * v / (tau * T(b));
            }
    }
    if (dtau) {
        // L depends on tau only through M/tau: dL/dtau = -sum_ij G_ij M_ij / tau.
        T acc = T(0);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < b; ++j) acc += g.at(i, j) * m.at(i, j);
        *dtau = -acc / tau;
    }
    return g;
}

} // namespace clnet
