// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "layerlens/model/config.hpp"
#include "layerlens/numerics/rng.hpp"
#include "layerlens/numerics/tensor.hpp"
#include "layerlens/tokens.hpp"

namespace layerlens::testing {

inline model::ModelConfig tiny_config(std::size_t n_layers = 2, bool shared = false, bool tied = true) {
    model::ModelConfig c;
    c.vocab_size = 24;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.n_layers = n_layers;
    c.max_seq_len = 12;
    c.share_layer_weights = shared;
    c.tie_output_embeddings = tied;
    return c;
}

/// [CLS] content... [SEP] with lengths drawn from [min_len, max_len] content tokens.
inline std::vector<TokenSequence> random_sequences(std::size_t n, std::size_t vocab, std::size_t min_len,
                                                   std::size_t max_len, std::uint64_t seed) {
    numerics::Rng rng(seed);
    std::vector<TokenSequence> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
        TokenSequence s{kCls};
        for (std::size_t j = 0; j < len; ++j) {
            s.push_back(static_cast<TokenId>(kFirstContentId + rng.uniform_index(vocab - kFirstContentId)));
        }
        s.push_back(kSep);
        out.push_back(std::move(s));
    }
    return out;
}

template <typename T = float>
numerics::BasicTensor<T> random_tensor(numerics::Shape dims, std::uint64_t seed, double scale = 1.0) {
    numerics::Rng rng(seed);
    numerics::BasicTensor<T> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
    return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace layerlens::testing
