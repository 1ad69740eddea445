#pragma once

// Learnable view neural maps, their spatial normalization, the
// neural-map-guided feature recalibration (GFR), and the neural bird's-eye
// converter (NEC) that produces the satellite-view map from the ground-view
// one. Ground maps are free parameters; satellite maps are NEC outputs
// except in the no-NEC ablation, where they are learned directly.

#include <string>
#include <vector>

#include "clnet/errors.hpp"
#include "clnet/kernels.hpp"
#include "clnet/rng.hpp"
#include "clnet/tensor.hpp"

namespace clnet {

template <typename T>
struct ViewNeuralMap {
    int level = 0; // 1..4
    View view = View::ground;
    Tensor3<T> grid;
};

// normalize_map output plus the caches its backward pass needs.
template <typename T>
struct NormalizedMap {
    Tensor3<T> grid;        // per channel: softmax over H*W, sums to 1
    std::vector<T> scales;  // per-channel 1/l2 prescale actually applied
};

// Entries i.i.d. uniform in [-0.01, 0.01], deterministic per (seed, level)
// within a view.
template <typename T>
ViewNeuralMap<T> init_neural_map(int level, View view, int h, int w, int c, uint64_t seed) {
    if (level < 1 || level > 4) throw ConfigError("neural map level must be in 1..4, got " +
                                                  std::to_string(level));
    const uint64_t tag =
        view == View::ground ? rng_stream::kNeuralMapInit : rng_stream::kFreeSatMapInit;
    Rng rng(mix_seed(seed, tag, static_cast<uint64_t>(level)));
    ViewNeuralMap<T> map;
    map.level = level;
    map.view = view;
    map.grid = Tensor3<T>(h, w, c);
    for (auto& x : map.grid.v) x = static_cast<T>(rng.uniform(-0.01, 0.01));
    return map;
}

// Per channel: scale the H*W slice by 1/l2 (skipped below 1e-12), then
// softmax over the H*W positions.
template <typename T>
NormalizedMap<T> normalize_map(const ViewNeuralMap<T>& map) {
    if (!map.grid.all_finite())
        throw NumericError("normalize_map: non-finite entries in " +
                           std::string(view_name(map.view)) + " map level " +
                           std::to_string(map.level));
    NormalizedMap<T> out;
    out.grid = Tensor3<T>(map.grid.h, map.grid.w, map.grid.c);
    out.scales.assign(static_cast<size_t>(map.grid.c), T(1));
    kernels::channel_l2_softmax(map.grid, true, out.grid, out.scales);
    return out;
}

// dL/d(map) given dL/d(normalized grid).
template <typename T>
Tensor3<T> normalize_map_backward(const Tensor3<T>& map_grid, const NormalizedMap<T>& cached,
                                  const Tensor3<T>& gnorm) {
    Tensor3<T> gmap(map_grid.h, map_grid.w, map_grid.c);
    kernels::channel_l2_softmax_backward(map_grid, cached.grid, cached.scales, true, gnorm, gmap);
    return gmap;
}

// f * N' + f with N' = normalize_map(map).
template <typename T>
Tensor3<T> gfr(const Tensor3<T>& f, const ViewNeuralMap<T>& map) {
    if (!(f.h == map.grid.h && f.w == map.grid.w && f.c == map.grid.c))
        throw ConfigError("gfr: feature grid " + f.shape_str() + " does not match " +
                          std::string(view_name(map.view)) + " map level " +
                          std::to_string(map.level) + " of shape " + map.grid.shape_str());
    NormalizedMap<T> n = normalize_map(map);
    Tensor3<T> out(f.h, f.w, f.c);
    const int total = static_cast<int>(f.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < total; ++i) out.v[i] = f.v[i] * n.grid.v[i] + f.v[i];
    return out;
}

// Per-level two-layer perceptron over flattened spatial positions, shared
// across channels. Maps ground H*W to satellite H*W; hidden width is the
// larger of the two. The identity_activation hook bypasses the hidden
// nonlinearity (used by tests that check against a bare matrix product).
template <typename T>
struct NecLevel {
    int level = 0;
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;
    int hidden = 0;
    Matrix<T> w1;        // [hidden][in_h*in_w]
    std::vector<T> b1;   // [hidden]
    Matrix<T> w2;        // [out_h*out_w][hidden]
    std::vector<T> b2;   // [out_h*out_w]
    bool identity_activation = false;
};

template <typename T>
struct NecParams {
    std::vector<NecLevel<T>> levels; // index 0..3 for levels 1..4

    NecLevel<T>& level(int lv) {
        if (lv < 1 || lv > static_cast<int>(levels.size()) || levels[lv - 1].level != lv)
            throw ConfigError("nec_forward: no converter parameters for level " +
                              std::to_string(lv));
        return levels[lv - 1];
    }
    const NecLevel<T>& level(int lv) const {
        return const_cast<NecParams<T>*>(this)->level(lv);
    }
};

template <typename T>
NecLevel<T> init_nec_level(int level, int in_h, int in_w, int out_h, int out_w, uint64_t seed) {
    NecLevel<T> l;
    l.level = level;
    l.in_h = in_h;
    l.in_w = in_w;
    l.out_h = out_h;
    l.out_w = out_w;
    const int ni = in_h * in_w, no = out_h * out_w;
    l.hidden = std::max(ni, no);
    l.w1 = Matrix<T>(l.hidden, ni);
    l.b1.assign(static_cast<size_t>(l.hidden), T(0));
    l.w2 = Matrix<T>(no, l.hidden);
    l.b2.assign(static_cast<size_t>(no), T(0));
    Rng rng(mix_seed(seed, rng_stream::kNecInit, static_cast<uint64_t>(level)));
    const double a1 = std::sqrt(6.0 / ni);
    for (auto& x : l.w1.v) x = static_cast<T>(rng.uniform(-a1, a1));
    const double a2 = std::sqrt(6.0 / l.hidden);
    for (auto& x : l.w2.v) x = static_cast<T>(rng.uniform(-a2, a2));
    return l;
}

// Forward caches for nec_backward.
template <typename T>
struct NecCache {
    Matrix<T> input;   // [C][in_hw], transposed view of the ground map
    Matrix<T> pre;     // [C][hidden], pre-activation
    Matrix<T> act;     // [C][hidden]
    Matrix<T> out;     // [C][out_hw]
};

template <typename T>
ViewNeuralMap<T> nec_forward(const ViewNeuralMap<T>& map_g, const NecParams<T>& params,
                             NecCache<T>* cache = nullptr) {
    if (map_g.view != View::ground)
        throw ConfigError("nec_forward expects a ground-view map, got satellite level " +
                          std::to_string(map_g.level));
    const NecLevel<T>& l = params.level(map_g.level);
    if (map_g.grid.h != l.in_h || map_g.grid.w != l.in_w)
        throw ConfigError("nec_forward: ground map level " + std::to_string(map_g.level) +
                          " is " + map_g.grid.shape_str() + ", converter expects " +
                          std::to_string(l.in_h) + "x" + std::to_string(l.in_w));
    const int c = map_g.grid.c;
    const int ni = l.in_h * l.in_w, no = l.out_h * l.out_w;

    Matrix<T> input(c, ni);
    for (int p = 0; p < ni; ++p)
        for (int ch = 0; ch < c; ++ch) input.at(ch, p) = map_g.grid.v[static_cast<size_t>(p) * c + ch];

    Matrix<T> pre(c, l.hidden);
    kernels::affine_forward(input, l.w1, l.b1, pre);
    Matrix<T> act = pre;
    if (!l.identity_activation) kernels::gelu_forward(pre.v, act.v);
    Matrix<T> out(c, no);
    kernels::affine_forward(act, l.w2, l.b2, out);

    ViewNeuralMap<T> sat;
    sat.level = map_g.level;
    sat.view = View::satellite;
    sat.grid = Tensor3<T>(l.out_h, l.out_w, c);
    for (int p = 0; p < no; ++p)
        for (int ch = 0; ch < c; ++ch) sat.grid.v[static_cast<size_t>(p) * c + ch] = out.at(ch, p);

    if (cache) {
        cache->input = std::move(input);
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->out = std::move(out);
    }
    return sat;
}

template <typename T>
struct NecGrads {
    Matrix<T> gw1;
    std::vector<T> gb1;
    Matrix<T> gw2;
    std::vector<T> gb2;
};

// dL/d(params) and dL/d(ground map grid) given dL/d(satellite map grid).
template <typename T>
Tensor3<T> nec_backward(const NecLevel<T>& l, const NecCache<T>& cache,
                        const Tensor3<T>& gsat_grid, NecGrads<T>& grads) {
    const int c = gsat_grid.c;
    const int ni = l.in_h * l.in_w, no = l.out_h * l.out_w;

    Matrix<T> gout(c, no);
    for (int p = 0; p < no; ++p)
        for (int ch = 0; ch < c; ++ch) gout.at(ch, p) = gsat_grid.v[static_cast<size_t>(p) * c + ch];

    grads.gw2 = Matrix<T>(no, l.hidden);
    grads.gb2.assign(static_cast<size_t>(no), T(0));
    kernels::affine_backward_params(gout, cache.act, grads.gw2, grads.gb2);
    Matrix<T> gact(c, l.hidden);
    kernels::affine_backward_input(gout, l.w2, gact);

    Matrix<T> gpre = gact;
    if (!l.identity_activation) kernels::gelu_backward(cache.pre.v, gact.v, gpre.v);

    grads.gw1 = Matrix<T>(l.hidden, ni);
    grads.gb1.assign(static_cast<size_t>(l.hidden), T(0));
    kernels::affine_backward_params(gpre, cache.input, grads.gw1, grads.gb1);
    Matrix<T> gin(c, ni);
    kernels::affine_backward_input(gpre, l.w1, gin);

    Tensor3<T> gmap(l.in_h, l.in_w, c);
    for (int p = 0; p < ni; ++p)
        for (int ch = 0; ch < c; ++ch) gmap.v[static_cast<size_t>(p) * c + ch] = gin.at(ch, p);
    return gmap;
}

} // namespace clnet
