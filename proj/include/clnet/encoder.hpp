#pragma once

// Four-stage strided convolutional encoder, one branch per view. Each stage
// is a 3x3 convolution (stride from config, zero padding 1) plus bias and a
// GELU, halving the spatial dims at the default stride of 2.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "clnet/errors.hpp"
#include "clnet/kernels.hpp"
#include "clnet/rng.hpp"
#include "clnet/tensor.hpp"

namespace clnet {

constexpr int kNumStages = 4;
constexpr int kConvKernel = 3;
constexpr int kConvPad = 1;

struct EncoderConfig {
    std::array<int, kNumStages> stage_channels{16, 32, 64, 128};
    std::array<int, kNumStages> stage_strides{2, 2, 2, 2};
    std::pair<int, int> ground_input_hw{32, 128};
    std::pair<int, int> satellite_input_hw{64, 64};
    int embedding_dim = 128;
    bool shared_weights = false;

    void validate() const {
        for (int i = 0; i < kNumStages; ++i) {
            if (stage_strides[i] < 1)
                throw ConfigError("stage " + std::to_string(i + 1) + " stride must be >= 1");
            if (stage_channels[i] <= 0)
                throw ConfigError("stage " + std::to_string(i + 1) + " channels must be > 0");
            if (i > 0 && stage_channels[i] <= stage_channels[i - 1])
                throw ConfigError("stage_channels must be strictly increasing");
        }
        if (embedding_dim != stage_channels[kNumStages - 1])
            throw ConfigError("embedding_dim must equal stage_channels[4]");
        check_divisible(ground_input_hw, "ground");
        check_divisible(satellite_input_hw, "satellite");
    }

    std::pair<int, int> input_hw(View v) const {
        return v == View::ground ? ground_input_hw : satellite_input_hw;
    }

    // Spatial dims and channels of the stage output, level in 1..4.
    std::array<int, 3> stage_shape(View v, int level) const {
        auto [h, w] = input_hw(v);
        for (int i = 0; i < level; ++i) {
            h /= stage_strides[i];
            w /= stage_strides[i];
        }
        return {h, w, stage_channels[level - 1]};
    }

private:
    void check_divisible(std::pair<int, int> hw, const std::string& name) const {
        auto [h, w] = hw;
        for (int i = 0; i < kNumStages; ++i) {
            if (h % stage_strides[i] != 0 || w % stage_strides[i] != 0)
                throw ConfigError(name + " input " + std::to_string(hw.first) + "x" +
                                  std::to_string(hw.second) +
                                  " not divisible by strides through stage " +
                                  std::to_string(i + 1));
            h /= stage_strides[i];
            w /= stage_strides[i];
        }
    }
};

template <typename T>
struct StageParams {
    int cin = 0, cout = 0, stride = 1;
    std::vector<T> w; // [ky][kx][cin][cout]
    std::vector<T> b; // [cout]
};

template <typename T>
struct Branch {
    std::array<StageParams<T>, kNumStages> stages;
};

// Fan-in scaled uniform weights, zero bias.
template <typename T>
StageParams<T> init_stage(int cin, int cout, int stride, Rng& rng) {
    StageParams<T> p;
    p.cin = cin;
    p.cout = cout;
    p.stride = stride;
    p.w.resize(static_cast<size_t>(kConvKernel) * kConvKernel * cin * cout);
    p.b.assign(static_cast<size_t>(cout), T(0));
    const double bound = std::sqrt(6.0 / (kConvKernel * kConvKernel * cin));
    for (auto& x : p.w) x = static_cast<T>(rng.uniform(-bound, bound));
    return p;
}

template <typename T>
Branch<T> init_branch(const EncoderConfig& cfg, View view, uint64_t seed) {
    Branch<T> br;
    int cin = 3;
    for (int i = 0; i < kNumStages; ++i) {
        Rng rng(mix_seed(seed, rng_stream::kEncoderInit,
                         view == View::ground ? 0u : 1u, static_cast<uint64_t>(i)));
        br.stages[i] = init_stage<T>(cin, cfg.stage_channels[i], cfg.stage_strides[i], rng);
        cin = cfg.stage_channels[i];
    }
    return br;
}

// Conv + bias + GELU. `pre` receives the pre-activation (needed by the
// backward pass); pass nullptr in inference-only paths that do not keep it.
template <typename T>
Tensor3<T> encode_stage(const Tensor3<T>& input, int stage_index1, View view,
                        const StageParams<T>& p, Tensor3<T>* pre = nullptr) {
    if (input.c != p.cin)
        throw ConfigError("stage " + std::to_string(stage_index1) + " (" + view_name(view) +
                          "): input has " + std::to_string(input.c) + " channels, expected " +
                          std::to_string(p.cin));
    if (input.h % p.stride != 0 || input.w % p.stride != 0)
        throw ConfigError("stage " + std::to_string(stage_index1) + " (" + view_name(view) +
                          "): input " + input.shape_str() + " not divisible by stride " +
                          std::to_string(p.stride));
    const int oh = kernels::conv_out_dim(input.h, kConvKernel, p.stride, kConvPad);
    const int ow = kernels::conv_out_dim(input.w, kConvKernel, p.stride, kConvPad);
    Tensor3<T> z(oh, ow, p.cout);
    kernels::conv2d_forward(input, p.w, p.b, kConvKernel, p.stride, kConvPad, z);
    Tensor3<T> f(oh, ow, p.cout);
    kernels::gelu_forward(z.v, f.v);
    if (!f.all_finite())
        throw NumericError("stage " + std::to_string(stage_index1) + " (" + view_name(view) +
                           "): non-finite activations");
    if (pre) *pre = std::move(z);
    return f;
}

template <typename T>
struct StageGrads {
    std::vector<T> gw;
    std::vector<T> gb;
};

// Backward through GELU and the convolution. Returns dL/d(input) and
// accumulates parameter grads.
template <typename T>
Tensor3<T> encode_stage_backward(const Tensor3<T>& input, const Tensor3<T>& pre,
                                 const Tensor3<T>& gout, const StageParams<T>& p,
                                 StageGrads<T>& grads) {
    Tensor3<T> gz(pre.h, pre.w, pre.c);
    kernels::gelu_backward(pre.v, gout.v, gz.v);
    std::vector<T> gw(p.w.size());
    std::vector<T> gb(p.b.size());
    kernels::conv2d_backward_params(gz, input, kConvKernel, p.stride, kConvPad, gw, gb);
    if (grads.gw.empty()) {
        grads.gw = std::move(gw);
        grads.gb = std::move(gb);
    } else {
        for (size_t i = 0; i < gw.size(); ++i) grads.gw[i] += gw[i];
        for (size_t i = 0; i < gb.size(); ++i) grads.gb[i] += gb[i];
    }
    Tensor3<T> gin(input.h, input.w, input.c);
    kernels::conv2d_backward_input(gz, p.w, kConvKernel, p.stride, kConvPad, gin);
    return gin;
}

// Channel-wise global average pool followed by l2 normalization.
template <typename T>
std::vector<T> pool_and_normalize(const Tensor3<T>& grid, T* norm_out = nullptr) {
    std::vector<T> p(static_cast<size_t>(grid.c));
    kernels::global_avg_pool(grid, p);
    const T n = l2_norm(p);
    if (n < T(1e-12)) throw NumericError("pool_and_normalize: degenerate embedding (norm < 1e-12)");
    for (auto& x : p) x /= n;
    if (norm_out) *norm_out = n;
    return p;
}

// dL/d(grid) given dL/d(embedding), the embedding itself and the cached
// pre-normalization norm.
template <typename T>
Tensor3<T> pool_and_normalize_backward(const std::vector<T>& ge, const std::vector<T>& e, T norm,
                                       int h, int w) {
    const int c = static_cast<int>(e.size());
    T dot = T(0);
    for (int i = 0; i < c; ++i) dot += ge[i] * e[i];
    std::vector<T> gp(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) gp[i] = (ge[i] - dot * e[i]) / norm;
    Tensor3<T> gin(h, w, c);
    kernels::global_avg_pool_backward(gp, gin);
    return gin;
}

} // namespace clnet
