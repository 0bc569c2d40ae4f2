// SPDX-License-Identifier: Apache-2.0
#include "layerlens/numerics/adam.hpp"

#include <algorithm>
#include <cmath>

namespace layerlens::numerics {

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               BasicAdamState<T>& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.first_moment.empty() && state.step == 0) {
        state.first_moment.reserve(params.size());
        state.second_moment.reserve(params.size());
        for (const auto* p : params) {
            state.first_moment.emplace_back(p->dims());
            state.second_moment.emplace_back(p->dims());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i) + ": param " +
                             shape_to_string(params[i]->dims()) + ", grad " + shape_to_string(grads[i]->dims()));
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    const T beta1 = static_cast<T>(state.beta1);
    const T beta2 = static_cast<T>(state.beta2);
    const T step_size = static_cast<T>(state.lr / correction1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
    const T eps = static_cast<T>(state.eps_adam);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = *grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1 * m[j] + (T(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
            p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
        }
    }
}

double linear_warmup_decay(std::size_t step, std::size_t total_steps, double warmup_fraction) {
    if (total_steps == 0) return 0.0;
    const auto warmup = static_cast<std::size_t>(warmup_fraction * static_cast<double>(total_steps));
    const double s = static_cast<double>(step);
    if (step < warmup) return (s + 1.0) / static_cast<double>(warmup);
    const double remaining = static_cast<double>(total_steps - warmup);
    return std::max(0.0, (static_cast<double>(total_steps) - s) / remaining);
}

template void adam_step(std::span<BasicTensor<float>* const>, std::span<const BasicTensor<float>* const>,
                        BasicAdamState<float>&);
template void adam_step(std::span<BasicTensor<double>* const>, std::span<const BasicTensor<double>* const>,
                        BasicAdamState<double>&);

}  // namespace layerlens::numerics
