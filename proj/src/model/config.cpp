// SPDX-License-Identifier: Apache-2.0
#include "layerlens/model/config.hpp"

#include <string>

#include "layerlens/error.hpp"
#include "layerlens/tokens.hpp"

namespace layerlens::model {

void ModelConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
    if (vocab_size < static_cast<std::size_t>(kFirstContentId) + 1) {
        throw ConfigError("vocab_size must be at least 6 (five reserved tokens plus content), got " +
                          std::to_string(vocab_size));
    }
    if (d_ff == 0) throw ConfigError("d_ff must be positive");
    if (max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (!(layer_norm_eps >= 0.0)) throw ConfigError("layer_norm_eps must be non-negative");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"d_ff", c.d_ff},
                       {"n_layers", c.n_layers},
                       {"max_seq_len", c.max_seq_len},
                       {"share_layer_weights", c.share_layer_weights},
                       {"tie_output_embeddings", c.tie_output_embeddings},
                       {"dropout_rate", c.dropout_rate},
                       {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.d_model = j.value("d_model", d.d_model);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.d_ff = j.value("d_ff", d.d_ff);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    c.share_layer_weights = j.value("share_layer_weights", d.share_layer_weights);
    c.tie_output_embeddings = j.value("tie_output_embeddings", d.tie_output_embeddings);
    c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
    c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
}

}  // namespace layerlens::model
