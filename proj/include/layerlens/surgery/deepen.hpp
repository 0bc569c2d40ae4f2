// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerlens/model/model.hpp"

namespace layerlens::surgery {

/// Source layer (1-based) for every layer of the deepened model.
struct DeepenPlan {
    std::vector<std::size_t> source_order;

    std::size_t target_depth() const { return source_order.size(); }

    /// Throws RangeError unless the plan is a valid duplication of an
    /// `n_layers`-deep model: the distinct values are 1..n in order, each
    /// appears at most twice, and a repeat sits right after its original.
    void validate(std::size_t n_layers) const;

    bool operator==(const DeepenPlan&) const = default;
};

void to_json(nlohmann::json& j, const DeepenPlan& plan);
void from_json(const nlohmann::json& j, DeepenPlan& plan);

/// Duplicates the first target_depth - n_layers layers, each copy placed
/// right after its original. Throws RangeError outside [n_layers, 2 n_layers].
DeepenPlan plan_deepen(std::size_t n_layers, std::size_t target_depth);

/// New model whose layer i is an independent copy of original layer
/// plan[i]. Embeddings and the MLM head are copied unchanged. The model must
/// not share layer weights.
template <typename T>
model::BasicModel<T> deepen(const model::BasicModel<T>& model, const DeepenPlan& plan);

/// Shared-weight models: only the iteration count changes.
template <typename T>
model::BasicModel<T> deepen_shared(const model::BasicModel<T>& model, std::size_t target_depth);

/// deepen() with plan_deepen() for untied models, deepen_shared() otherwise.
template <typename T>
model::BasicModel<T> deepen_to(const model::BasicModel<T>& model, std::size_t target_depth);

/// Undoes deepen(): keeps only the first occurrence of every source layer.
template <typename T>
model::BasicModel<T> collapse_duplicates(const model::BasicModel<T>& deepened, const DeepenPlan& plan);

}  // namespace layerlens::surgery
