#pragma once

// Decoupled-weight-decay Adam and the warmup + half-cosine schedule.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "clnet/errors.hpp"
#include "clnet/model.hpp"

namespace clnet {

// Linear ramp 0 -> base_lr over warmup_steps, then half cosine down to 0 at
// total_steps. warmup_steps == 0 starts directly on the cosine arc.
inline double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps,
                          double base_lr) {
    if (step < 0 || step > total_steps)
        throw ConfigError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
    if (warmup_steps >= total_steps)
        throw ConfigError("lr_schedule: warmup_steps must be < total_steps");
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const double t = static_cast<double>(step - warmup_steps) /
                     static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

template <typename T>
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    AdamW() = default;
    AdamW(double wd) : weight_decay(wd) {}

    // params and grads must be aligned (same order, same names); empty grad
    // buffers count as zero gradient.
    void step(const std::vector<TensorRef<T>>& params, const std::vector<TensorRef<T>>& grads,
              double lr) {
        if (params.size() != grads.size())
            throw ConfigError("AdamW: parameter/gradient list size mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].size, T(0));
                v_[i].assign(params[i].size, T(0));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != grads[i].name)
                throw ConfigError("AdamW: misaligned tensors '" + params[i].name + "' vs '" +
                                  grads[i].name + "'");
            const bool has_grad = grads[i].size > 0;
            if (has_grad && grads[i].size != params[i].size)
                throw ConfigError("AdamW: gradient size mismatch for '" + params[i].name + "'");
            T* p = params[i].data;
            const T* g = grads[i].data;
            T* m = m_[i].data();
            T* v = v_[i].data();
            const int n = static_cast<int>(params[i].size);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
            for (int j = 0; j < n; ++j) {
                const T gj = has_grad ? g[j] : T(0);
                m[j] = T(beta1) * m[j] + T(1.0 - beta1) * gj;
                v[j] = T(beta2) * v[j] + T(1.0 - beta2) * gj * gj;
                const T mhat = m[j] / T(bc1);
                const T vhat = v[j] / T(bc2);
                p[j] -= T(lr) * (mhat / (std::sqrt(vhat) + T(eps)) + T(weight_decay) * p[j]);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    std::vector<std::vector<T>> m_, v_;
    int64_t t_ = 0;
};

} // namespace clnet
