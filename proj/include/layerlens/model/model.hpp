// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "layerlens/model/config.hpp"
#include "layerlens/numerics/tensor.hpp"

namespace layerlens::model {

using numerics::BasicTensor;
using numerics::Shape;

template <typename T>
struct EmbeddingWeights {
    BasicTensor<T> token;     // [vocab x d_model]
    BasicTensor<T> position;  // [max_seq_len x d_model]
    BasicTensor<T> norm_gain;
    BasicTensor<T> norm_bias;

    template <typename F>
    void visit(F&& f) {
        f("embeddings.token", token);
        f("embeddings.position", position);
        f("embeddings.norm.gain", norm_gain);
        f("embeddings.norm.bias", norm_bias);
    }
};

/// One post-LayerNorm encoder block. Projections are stored as full
/// [d_model x d_model] matrices; head h owns columns [h*head_dim, (h+1)*head_dim).
template <typename T>
struct EncoderLayerWeights {
    BasicTensor<T> query_weight, query_bias;
    BasicTensor<T> key_weight, key_bias;
    BasicTensor<T> value_weight, value_bias;
    BasicTensor<T> attention_output_weight, attention_output_bias;
    BasicTensor<T> attention_norm_gain, attention_norm_bias;
    BasicTensor<T> ffn_in_weight, ffn_in_bias;    // [d_model x d_ff], [d_ff]
    BasicTensor<T> ffn_out_weight, ffn_out_bias;  // [d_ff x d_model], [d_model]
    BasicTensor<T> ffn_norm_gain, ffn_norm_bias;

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "attention.query.weight", query_weight);
        f(prefix + "attention.query.bias", query_bias);
        f(prefix + "attention.key.weight", key_weight);
        f(prefix + "attention.key.bias", key_bias);
        f(prefix + "attention.value.weight", value_weight);
        f(prefix + "attention.value.bias", value_bias);
        f(prefix + "attention.output.weight", attention_output_weight);
        f(prefix + "attention.output.bias", attention_output_bias);
        f(prefix + "attention.norm.gain", attention_norm_gain);
        f(prefix + "attention.norm.bias", attention_norm_bias);
        f(prefix + "ffn.in.weight", ffn_in_weight);
        f(prefix + "ffn.in.bias", ffn_in_bias);
        f(prefix + "ffn.out.weight", ffn_out_weight);
        f(prefix + "ffn.out.bias", ffn_out_bias);
        f(prefix + "ffn.norm.gain", ffn_norm_gain);
        f(prefix + "ffn.norm.bias", ffn_norm_bias);
    }
};

/// The MLM output head: dense + GELU + LayerNorm, then a vocabulary
/// projection. `projection` is left empty when the model ties it to the
/// token embedding.
template <typename T>
struct MlmHeadWeights {
    BasicTensor<T> transform_weight, transform_bias;
    BasicTensor<T> norm_gain, norm_bias;
    BasicTensor<T> projection;  // [vocab x d_model], untied models only
    BasicTensor<T> output_bias;
};

template <typename T>
class BasicModel {
public:
    using Layer = EncoderLayerWeights<T>;

    BasicModel(ModelConfig config, EmbeddingWeights<T> embeddings, std::vector<Layer> layers,
               MlmHeadWeights<T> head);

    /// Correctly shaped, all-zero weights. Used as a gradient accumulator.
    static BasicModel zeros(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t depth() const noexcept { return config_.n_layers; }

    /// Weights applied at encoder step `step` (0-based).
    const Layer& layer_at(std::size_t step) const { return layers_.at(config_.share_layer_weights ? 0 : step); }
    Layer& layer_at(std::size_t step) { return layers_.at(config_.share_layer_weights ? 0 : step); }

    const std::vector<Layer>& stored_layers() const noexcept { return layers_; }
    std::vector<Layer>& stored_layers() noexcept { return layers_; }

    const EmbeddingWeights<T>& embeddings() const noexcept { return embeddings_; }
    EmbeddingWeights<T>& embeddings() noexcept { return embeddings_; }
    const MlmHeadWeights<T>& mlm_head() const noexcept { return head_; }
    MlmHeadWeights<T>& mlm_head() noexcept { return head_; }

    /// The vocabulary projection; the token embedding itself when tied.
    const BasicTensor<T>& output_projection() const noexcept {
        return config_.tie_output_embeddings ? embeddings_.token : head_.projection;
    }
    BasicTensor<T>& output_projection() noexcept {
        return config_.tie_output_embeddings ? embeddings_.token : head_.projection;
    }

    /// Visits every distinct parameter tensor in a fixed order with its
    /// checkpoint name. A tied projection is visited once, as the embedding.
    template <typename F>
    void for_each_parameter(F&& f) {
        embeddings_.visit(f);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i].visit("layers." + std::to_string(i) + ".", f);
        }
        f("mlm.transform.weight", head_.transform_weight);
        f("mlm.transform.bias", head_.transform_bias);
        f("mlm.norm.gain", head_.norm_gain);
        f("mlm.norm.bias", head_.norm_bias);
        if (!config_.tie_output_embeddings) f("mlm.projection.weight", head_.projection);
        f("mlm.projection.bias", head_.output_bias);
    }

    template <typename F>
    void for_each_parameter(F&& f) const {
        const_cast<BasicModel*>(this)->for_each_parameter(
            [&f](const std::string& name, BasicTensor<T>& t) { f(name, static_cast<const BasicTensor<T>&>(t)); });
    }

    std::vector<BasicTensor<T>*> parameters();
    std::vector<const BasicTensor<T>*> parameters() const;
    std::size_t parameter_count() const;

    template <typename U>
    BasicModel<U> cast() const;

private:
    void check_shapes() const;

    ModelConfig config_;
    EmbeddingWeights<T> embeddings_;
    std::vector<Layer> layers_;
    MlmHeadWeights<T> head_;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

/// Truncated-normal(0.02) weight matrices and embeddings, zero biases, unit
/// LayerNorm gains. Deterministic in (config, seed).
template <typename T = float>
BasicModel<T> init_model(const ModelConfig& config, std::uint64_t seed);

/// Correctly shaped, all-zero encoder-layer weights.
template <typename T>
EncoderLayerWeights<T> zero_layer(const ModelConfig& config);

/// True when every parameter has equal dims and bit pattern, and configs match.
template <typename T>
bool bitwise_equal(const BasicModel<T>& a, const BasicModel<T>& b);

template <typename T>
bool bitwise_equal(const EncoderLayerWeights<T>& a, const EncoderLayerWeights<T>& b);

}  // namespace layerlens::model
