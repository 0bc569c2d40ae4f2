// SPDX-License-Identifier: Apache-2.0
#include "layerlens/model/model.hpp"

#include "layerlens/error.hpp"
#include "layerlens/numerics/rng.hpp"

namespace layerlens::model {

namespace {

template <typename T>
EmbeddingWeights<T> zero_embeddings(const ModelConfig& c) {
    return {BasicTensor<T>({c.vocab_size, c.d_model}), BasicTensor<T>({c.max_seq_len, c.d_model}),
            BasicTensor<T>({c.d_model}), BasicTensor<T>({c.d_model})};
}

template <typename T>
MlmHeadWeights<T> zero_head(const ModelConfig& c) {
    MlmHeadWeights<T> h{BasicTensor<T>({c.d_model, c.d_model}), BasicTensor<T>({c.d_model}),
                        BasicTensor<T>({c.d_model}), BasicTensor<T>({c.d_model}), BasicTensor<T>(),
                        BasicTensor<T>({c.vocab_size})};
    if (!c.tie_output_embeddings) h.projection = BasicTensor<T>({c.vocab_size, c.d_model});
    return h;
}

bool is_norm_gain(const std::string& name) { return name.ends_with("norm.gain"); }

bool is_matrix_weight(const std::string& name) {
    return name.ends_with(".weight") || name == "embeddings.token" || name == "embeddings.position";
}

}  // namespace

template <typename T>
EncoderLayerWeights<T> zero_layer(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t f = c.d_ff;
    return {BasicTensor<T>({d, d}), BasicTensor<T>({d}), BasicTensor<T>({d, d}), BasicTensor<T>({d}),
            BasicTensor<T>({d, d}), BasicTensor<T>({d}), BasicTensor<T>({d, d}), BasicTensor<T>({d}),
            BasicTensor<T>({d}),    BasicTensor<T>({d}), BasicTensor<T>({d, f}), BasicTensor<T>({f}),
            BasicTensor<T>({f, d}), BasicTensor<T>({d}), BasicTensor<T>({d}),    BasicTensor<T>({d})};
}

template <typename T>
BasicModel<T>::BasicModel(ModelConfig config, EmbeddingWeights<T> embeddings, std::vector<Layer> layers,
                          MlmHeadWeights<T> head)
    : config_(config), embeddings_(std::move(embeddings)), layers_(std::move(layers)), head_(std::move(head)) {
    config_.validate();
    check_shapes();
}

template <typename T>
void BasicModel<T>::check_shapes() const {
    if (layers_.size() != config_.stored_layers()) {
        throw ConfigError("model stores " + std::to_string(layers_.size()) + " layers, config expects " +
                          std::to_string(config_.stored_layers()));
    }
    BasicModel<T>& self = *const_cast<BasicModel<T>*>(this);
    const ModelConfig& c = config_;
    std::vector<Shape> expected;
    // Build the reference shapes by visiting a zero model's layout in the same order.
    EmbeddingWeights<T> ze = zero_embeddings<T>(c);
    ze.visit([&](const std::string&, BasicTensor<T>& t) { expected.push_back(t.dims()); });
    EncoderLayerWeights<T> zl = zero_layer<T>(c);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        zl.visit("", [&](const std::string&, BasicTensor<T>& t) { expected.push_back(t.dims()); });
    }
    MlmHeadWeights<T> zh = zero_head<T>(c);
    expected.push_back(zh.transform_weight.dims());
    expected.push_back(zh.transform_bias.dims());
    expected.push_back(zh.norm_gain.dims());
    expected.push_back(zh.norm_bias.dims());
    if (!c.tie_output_embeddings) expected.push_back(zh.projection.dims());
    expected.push_back(zh.output_bias.dims());

    std::size_t i = 0;
    self.for_each_parameter([&](const std::string& name, BasicTensor<T>& t) {
        if (t.dims() != expected.at(i)) {
            throw ConfigError("parameter " + name + " has dims " + numerics::shape_to_string(t.dims()) +
                              ", config implies " + numerics::shape_to_string(expected.at(i)));
        }
        ++i;
    });
    if (c.tie_output_embeddings && !head_.projection.empty()) {
        throw ConfigError("tied model must not carry a separate output projection");
    }
}

template <typename T>
BasicModel<T> BasicModel<T>::zeros(const ModelConfig& config) {
    config.validate();
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < config.stored_layers(); ++i) layers.push_back(zero_layer<T>(config));
    return BasicModel(config, zero_embeddings<T>(config), std::move(layers), zero_head<T>(config));
}

template <typename T>
std::vector<BasicTensor<T>*> BasicModel<T>::parameters() {
    std::vector<BasicTensor<T>*> out;
    for_each_parameter([&](const std::string&, BasicTensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> BasicModel<T>::parameters() const {
    std::vector<const BasicTensor<T>*> out;
    for_each_parameter([&](const std::string&, const BasicTensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const BasicTensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
    auto out = BasicModel<U>::zeros(config_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
}

template <typename T>
BasicModel<T> init_model(const ModelConfig& config, std::uint64_t seed) {
    auto model = BasicModel<T>::zeros(config);
    numerics::Rng rng(seed);
    model.for_each_parameter([&](const std::string& name, BasicTensor<T>& t) {
        if (is_norm_gain(name)) {
            t.fill(T(1));
        } else if (is_matrix_weight(name)) {
            for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(0.02));
        }
    });
    return model;
}

template <typename T>
bool bitwise_equal(const EncoderLayerWeights<T>& a, const EncoderLayerWeights<T>& b) {
    std::vector<const BasicTensor<T>*> ta;
    std::vector<const BasicTensor<T>*> tb;
    const_cast<EncoderLayerWeights<T>&>(a).visit("", [&](const std::string&, BasicTensor<T>& t) { ta.push_back(&t); });
    const_cast<EncoderLayerWeights<T>&>(b).visit("", [&](const std::string&, BasicTensor<T>& t) { tb.push_back(&t); });
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!numerics::bitwise_equal(*ta[i], *tb[i])) return false;
    }
    return true;
}

template <typename T>
bool bitwise_equal(const BasicModel<T>& a, const BasicModel<T>& b) {
    if (!(a.config() == b.config())) return false;
    auto pa = a.parameters();
    auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!numerics::bitwise_equal(*pa[i], *pb[i])) return false;
    }
    return true;
}

template class BasicModel<float>;
template class BasicModel<double>;
template BasicModel<double> BasicModel<float>::cast<double>() const;
template BasicModel<float> BasicModel<double>::cast<float>() const;
template BasicModel<float> BasicModel<float>::cast<float>() const;
template BasicModel<float> init_model<float>(const ModelConfig&, std::uint64_t);
template BasicModel<double> init_model<double>(const ModelConfig&, std::uint64_t);
template EncoderLayerWeights<float> zero_layer<float>(const ModelConfig&);
template EncoderLayerWeights<double> zero_layer<double>(const ModelConfig&);
template bool bitwise_equal(const BasicModel<float>&, const BasicModel<float>&);
template bool bitwise_equal(const BasicModel<double>&, const BasicModel<double>&);
template bool bitwise_equal(const EncoderLayerWeights<float>&, const EncoderLayerWeights<float>&);
template bool bitwise_equal(const EncoderLayerWeights<double>&, const EncoderLayerWeights<double>&);

}  // namespace layerlens::model
