// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "layerlens/numerics/tensor.hpp"

namespace layerlens::numerics {

template <typename T>
struct BasicAdamState {
    std::size_t step = 0;
    std::vector<BasicTensor<T>> first_moment;
    std::vector<BasicTensor<T>> second_moment;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
};

using AdamState = BasicAdamState<float>;

/// One bias-corrected Adam update, in place. Moments are created on the first
/// call and must keep matching the parameter shapes afterwards.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               BasicAdamState<T>& state);

/// Multiplier for a linear warmup over the first `warmup_fraction` of
/// `total_steps` followed by linear decay to zero. `step` is 0-based.
double linear_warmup_decay(std::size_t step, std::size_t total_steps, double warmup_fraction);

}  // namespace layerlens::numerics
