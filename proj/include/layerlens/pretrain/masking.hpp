// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layerlens/numerics/ops.hpp"
#include "layerlens/numerics/rng.hpp"
#include "layerlens/tokens.hpp"

namespace layerlens::pretrain {

struct MaskingPolicy {
    double select_rate = 0.15;
    double mask_frac = 0.8;
    double random_frac = 0.1;
    double keep_frac = 0.1;

    void validate() const;
};

struct MaskedSequence {
    TokenSequence corrupted;
    std::vector<std::uint8_t> label_mask;  // 1 where the position was selected
};

/// [PAD], [CLS], [SEP] and [MASK] are never selected.
inline bool maskable(TokenId id) { return id != kPad && id != kCls && id != kSep && id != kMask; }

/// Selects each maskable position with probability select_rate, then replaces
/// it by [MASK], a uniformly drawn content token, or leaves it unchanged.
MaskedSequence mask_sequence(std::span<const TokenId> ids, const MaskingPolicy& policy, std::size_t vocab_size,
                             numerics::Rng& rng);

/// Mean cross-entropy over labeled positions; 0 when none are labeled.
/// `logits` is [... x vocab] with one row per entry of `original_ids`.
template <typename T>
T mlm_loss(const numerics::BasicTensor<T>& logits, std::span<const TokenId> original_ids,
           std::span<const std::uint8_t> label_mask);

/// Same loss plus dL/dlogits.
template <typename T>
numerics::CrossEntropyResult<T> mlm_loss_with_grad(const numerics::BasicTensor<T>& logits,
                                                   std::span<const TokenId> original_ids,
                                                   std::span<const std::uint8_t> label_mask);

}  // namespace layerlens::pretrain
