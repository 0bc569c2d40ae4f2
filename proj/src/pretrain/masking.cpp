// SPDX-License-Identifier: Apache-2.0
#include "layerlens/pretrain/masking.hpp"

#include <cmath>

#include "layerlens/error.hpp"

namespace layerlens::pretrain {

void MaskingPolicy::validate() const {
    if (!(select_rate >= 0.0 && select_rate < 1.0)) throw ConfigError("select_rate must lie in [0, 1)");
    if (mask_frac < 0.0 || random_frac < 0.0 || keep_frac < 0.0) throw ConfigError("masking fractions must be >= 0");
    if (std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
        throw ConfigError("masking fractions must sum to 1");
    }
}

MaskedSequence mask_sequence(std::span<const TokenId> ids, const MaskingPolicy& policy, std::size_t vocab_size,
                             numerics::Rng& rng) {
    policy.validate();
    if (vocab_size <= static_cast<std::size_t>(kFirstContentId)) throw ConfigError("vocabulary has no content tokens");
    const std::uint64_t n_content = vocab_size - static_cast<std::size_t>(kFirstContentId);
    MaskedSequence out{TokenSequence(ids.begin(), ids.end()), std::vector<std::uint8_t>(ids.size(), 0)};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!maskable(ids[i])) continue;
        if (rng.uniform() >= policy.select_rate) continue;
        out.label_mask[i] = 1;
        const double action = rng.uniform();
        if (action < policy.mask_frac) {
            out.corrupted[i] = kMask;
        } else if (action < policy.mask_frac + policy.random_frac) {
            out.corrupted[i] = kFirstContentId + static_cast<TokenId>(rng.uniform_index(n_content));
        }
    }
    return out;
}

template <typename T>
numerics::CrossEntropyResult<T> mlm_loss_with_grad(const numerics::BasicTensor<T>& logits,
                                                   std::span<const TokenId> original_ids,
                                                   std::span<const std::uint8_t> label_mask) {
    return numerics::softmax_cross_entropy(logits, original_ids, label_mask);
}

template <typename T>
T mlm_loss(const numerics::BasicTensor<T>& logits, std::span<const TokenId> original_ids,
           std::span<const std::uint8_t> label_mask) {
    return mlm_loss_with_grad(logits, original_ids, label_mask).loss;
}

template float mlm_loss(const numerics::BasicTensor<float>&, std::span<const TokenId>, std::span<const std::uint8_t>);
template double mlm_loss(const numerics::BasicTensor<double>&, std::span<const TokenId>,
                         std::span<const std::uint8_t>);
template numerics::CrossEntropyResult<float> mlm_loss_with_grad(const numerics::BasicTensor<float>&,
                                                                std::span<const TokenId>,
                                                                std::span<const std::uint8_t>);
template numerics::CrossEntropyResult<double> mlm_loss_with_grad(const numerics::BasicTensor<double>&,
                                                                 std::span<const TokenId>,
                                                                 std::span<const std::uint8_t>);

}  // namespace layerlens::pretrain
