// SPDX-License-Identifier: Apache-2.0
#include "layerlens/surgery/deepen.hpp"

#include <string>

#include "layerlens/error.hpp"

namespace layerlens::surgery {

namespace {

std::string plan_string(const DeepenPlan& plan) { return nlohmann::json(plan.source_order).dump(); }

}  // namespace

void DeepenPlan::validate(std::size_t n_layers) const {
    std::size_t next = 1;
    for (std::size_t i = 0; i < source_order.size(); ++i) {
        const std::size_t src = source_order[i];
        if (src == next) {
            ++next;
            continue;
        }
        const bool repeat = i > 0 && src == source_order[i - 1] && (i < 2 || source_order[i - 2] != src);
        if (!repeat) {
            throw RangeError("invalid deepen plan " + plan_string(*this) + " at position " + std::to_string(i + 1));
        }
    }
    if (next != n_layers + 1) {
        throw RangeError("deepen plan " + plan_string(*this) + " does not cover layers 1.." +
                         std::to_string(n_layers) + " in order");
    }
}

void to_json(nlohmann::json& j, const DeepenPlan& plan) {
    j = {{"target_depth", plan.target_depth()}, {"source_order", plan.source_order}};
}

void from_json(const nlohmann::json& j, DeepenPlan& plan) {
    plan.source_order = j.at("source_order").get<std::vector<std::size_t>>();
}

DeepenPlan plan_deepen(std::size_t n_layers, std::size_t target_depth) {
    if (n_layers == 0) throw RangeError("cannot deepen a model with no layers");
    if (target_depth < n_layers || target_depth > 2 * n_layers) {
        throw RangeError("target depth " + std::to_string(target_depth) + " outside [" + std::to_string(n_layers) +
                         ", " + std::to_string(2 * n_layers) + "]; each layer may be duplicated once");
    }
    const std::size_t copies = target_depth - n_layers;
    DeepenPlan plan;
    for (std::size_t layer = 1; layer <= n_layers; ++layer) {
        plan.source_order.push_back(layer);
        if (layer <= copies) plan.source_order.push_back(layer);
    }
    return plan;
}

template <typename T>
model::BasicModel<T> deepen(const model::BasicModel<T>& model, const DeepenPlan& plan) {
    if (model.config().share_layer_weights) {
        throw ConfigError("deepen copies layers; use deepen_shared for a shared-weight model");
    }
    plan.validate(model.depth());
    auto config = model.config();
    config.n_layers = plan.target_depth();
    std::vector<typename model::BasicModel<T>::Layer> layers;
    layers.reserve(plan.target_depth());
    for (std::size_t src : plan.source_order) layers.push_back(model.stored_layers()[src - 1]);
    return model::BasicModel<T>(config, model.embeddings(), std::move(layers), model.mlm_head());
}

template <typename T>
model::BasicModel<T> deepen_shared(const model::BasicModel<T>& model, std::size_t target_depth) {
    if (!model.config().share_layer_weights) throw ConfigError("deepen_shared needs a shared-weight model");
    if (target_depth == 0) throw RangeError("target depth must be at least 1");
    auto config = model.config();
    config.n_layers = target_depth;
    return model::BasicModel<T>(config, model.embeddings(), model.stored_layers(), model.mlm_head());
}

template <typename T>
model::BasicModel<T> deepen_to(const model::BasicModel<T>& model, std::size_t target_depth) {
    if (model.config().share_layer_weights) return deepen_shared(model, target_depth);
    return deepen(model, plan_deepen(model.depth(), target_depth));
}

template <typename T>
model::BasicModel<T> collapse_duplicates(const model::BasicModel<T>& deepened, const DeepenPlan& plan) {
    if (deepened.config().share_layer_weights) throw ConfigError("collapse_duplicates needs an unshared model");
    if (plan.target_depth() != deepened.depth()) {
        throw RangeError("plan of length " + std::to_string(plan.target_depth()) + " does not match depth " +
                         std::to_string(deepened.depth()));
    }
    std::vector<typename model::BasicModel<T>::Layer> layers;
    for (std::size_t i = 0; i < plan.source_order.size(); ++i) {
        if (i > 0 && plan.source_order[i] == plan.source_order[i - 1]) continue;
        layers.push_back(deepened.stored_layers()[i]);
    }
    plan.validate(layers.size());
    auto config = deepened.config();
    config.n_layers = layers.size();
    return model::BasicModel<T>(config, deepened.embeddings(), std::move(layers), deepened.mlm_head());
}

#define LAYERLENS_INSTANTIATE_SURGERY(T)                                                               \
    template model::BasicModel<T> deepen(const model::BasicModel<T>&, const DeepenPlan&);              \
    template model::BasicModel<T> deepen_shared(const model::BasicModel<T>&, std::size_t);             \
    template model::BasicModel<T> deepen_to(const model::BasicModel<T>&, std::size_t);                 \
    template model::BasicModel<T> collapse_duplicates(const model::BasicModel<T>&, const DeepenPlan&);

LAYERLENS_INSTANTIATE_SURGERY(float)
LAYERLENS_INSTANTIATE_SURGERY(double)

}  // namespace layerlens::surgery
