// SPDX-License-Identifier: Apache-2.0
#include "layerlens/pretrain/gradient_check.hpp"

#include "layerlens/error.hpp"
#include "layerlens/pretrain/pretrain.hpp"

namespace layerlens::pretrain {

MlmGradCheck check_mlm_gradients(const model::ModelConfig& config, std::uint64_t seed, Precision precision,
                                 numerics::GradCheckOptions options, std::size_t batch_size) {
    config.validate();
    if (config.max_seq_len < 3) throw ConfigError("gradient check needs max_seq_len >= 3");
    const auto weights = model::init_model<float>(config, seed);
    numerics::Rng rng(seed);
    std::vector<TokenSequence> seqs;
    const std::size_t content = config.vocab_size - kFirstContentId;
    for (std::size_t b = 0; b < batch_size; ++b) {
        TokenSequence s{kCls};
        // Ragged lengths so padding and the attention mask are exercised.
        const std::size_t len = config.max_seq_len - 2 - (b % 2);
        for (std::size_t i = 0; i < len; ++i) {
            s.push_back(static_cast<TokenId>(kFirstContentId + rng.uniform_index(content)));
        }
        s.push_back(kSep);
        seqs.push_back(std::move(s));
    }
    MaskingPolicy policy;
    policy.select_rate = 0.5;
    const auto batch = make_masked_batch(seqs, policy, config.vocab_size, rng);

    auto reference = weights.cast<double>();
    model::Model64 analytic = model::Model64::zeros(config);
    if (precision == Precision::Float64) {
        mlm_batch_loss<double>(reference, batch, false, nullptr, &analytic);
    } else {
        auto grads32 = model::Model::zeros(config);
        mlm_batch_loss<float>(weights, batch, false, nullptr, &grads32);
        analytic = grads32.cast<double>();
    }

    auto params = reference.parameters();
    std::vector<const numerics::Tensor64*> grads;
    for (const auto* g : std::as_const(analytic).parameters()) grads.push_back(g);
    std::vector<std::string> names;
    reference.for_each_parameter([&](const std::string& name, const numerics::Tensor64&) { names.push_back(name); });

    const std::function<double()> loss = [&] { return mlm_batch_loss<double>(reference, batch, false, nullptr); };
    MlmGradCheck out;
    out.report = numerics::grad_check<double>(loss, params, grads, options);
    out.worst_parameter = names.at(out.report.worst_tensor);
    return out;
}

}  // namespace layerlens::pretrain
