// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "layerlens/model/config.hpp"
#include "layerlens/numerics/grad_check.hpp"

namespace layerlens::pretrain {

enum class Precision { Float32, Float64 };

struct MlmGradCheck {
    numerics::GradCheckReport report;
    std::string worst_parameter;
};

/// Gradient check of the eval-mode MLM loss of init_model(config, seed) on a
/// seeded random masked batch.
///
/// Float64: double backprop against double central differences.
/// Float32: float backprop against double central differences taken on the
/// same weights widened to double.
MlmGradCheck check_mlm_gradients(const model::ModelConfig& config, std::uint64_t seed, Precision precision,
                                 numerics::GradCheckOptions options = {}, std::size_t batch_size = 3);

}  // namespace layerlens::pretrain
