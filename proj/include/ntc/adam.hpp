#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc {

template <typename T>
struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

// Adam with bias correction. Gradients are left untouched; the caller zeroes
// them between steps.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr = T(1e-3),
               T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), T(0));
            state.v[i].assign(params[i].size(), T(0));
        }
    }
    if (state.m.size() != params.size())
        throw StateError("adam_step: optimizer state built for " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));

    ++state.step;
    const T bc1 = T(1) - std::pow(beta1, T(state.step));
    const T bc2 = T(1) - std::pow(beta2, T(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad())
            throw StateError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        if (state.m[i].size() != params[i].size())
            throw StateError("adam_step: state size mismatch for parameter " + std::to_string(i));
        auto& w = params[i].data();
        const auto& g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1 * m[j] + (T(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace ntc
