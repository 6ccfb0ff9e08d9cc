#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fan/error.h"
#include "fan/tensor.h"

namespace fan {

template <typename T>
struct AdamConfig {
    T lr = T(3e-5);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// First and second moment estimates for one parameter tensor.
template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
    std::size_t step = 0;

    explicit AdamState(const std::vector<std::size_t>& dims) : m(dims), v(dims) {}
};

// In-place Adam update with bias correction. The state's step counter is
// advanced first, so the initial call uses t = 1.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
               const AdamConfig<T>& cfg) {
    require_same_dims(param, grad, "adam_step");
    require_same_dims(param, state.m, "adam_step state");
    state.step += 1;
    const T b1t = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
    const T b2t = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const T g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (T(1) - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (T(1) - cfg.beta2) * g * g;
        const T mhat = state.m[i] / b1t;
        const T vhat = state.v[i] / b2t;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace fan
