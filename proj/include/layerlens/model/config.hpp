// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include <nlohmann/json.hpp>

namespace layerlens::model {

struct ModelConfig {
    std::size_t vocab_size = 80;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    /// Encoder depth. With shared weights this is the iteration count of the
    /// single stored layer.
    std::size_t n_layers = 2;
    std::size_t max_seq_len = 64;
    bool share_layer_weights = false;
    bool tie_output_embeddings = true;
    double dropout_rate = 0.1;
    double layer_norm_eps = 1e-12;

    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t stored_layers() const { return share_layer_weights ? 1 : n_layers; }

    /// Throws ConfigError on the first violated constraint.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace layerlens::model
