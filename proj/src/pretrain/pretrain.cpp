// SPDX-License-Identifier: Apache-2.0
#include "layerlens/pretrain/pretrain.hpp"

#include <cmath>

#include "layerlens/error.hpp"
#include "layerlens/numerics/adam.hpp"

namespace layerlens::pretrain {

namespace {

constexpr std::uint64_t kEvalMaskSalt = 0x9e3779b97f4a7c15ULL;

void zero_all(model::Model& grads) {
    for (auto* t : grads.parameters()) t->fill(0.0F);
}

std::vector<MaskedBatch> mask_eval_set(std::span<const TokenSequence> eval_set, const MaskingPolicy& policy,
                                       std::size_t vocab_size, std::uint64_t seed, std::size_t batch_size) {
    numerics::Rng rng(seed ^ kEvalMaskSalt);
    std::vector<MaskedBatch> out;
    for (std::size_t start = 0; start < eval_set.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, eval_set.size() - start);
        out.push_back(make_masked_batch(eval_set.subspan(start, n), policy, vocab_size, rng));
    }
    return out;
}

}  // namespace

void PretrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be positive");
}

MaskedBatch make_masked_batch(std::span<const TokenSequence> sequences, const MaskingPolicy& policy,
                              std::size_t vocab_size, numerics::Rng& rng) {
    std::vector<TokenSequence> corrupted;
    corrupted.reserve(sequences.size());
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& s : sequences) {
        auto m = mask_sequence(s, policy, vocab_size, rng);
        corrupted.push_back(std::move(m.corrupted));
        masks.push_back(std::move(m.label_mask));
    }
    MaskedBatch batch;
    batch.inputs = model::Batch::from_sequences(corrupted);
    const std::size_t len = batch.inputs.seq_len;
    batch.targets.assign(batch.inputs.rows(), kPad);
    batch.label_mask.assign(batch.inputs.rows(), 0);
    for (std::size_t b = 0; b < sequences.size(); ++b) {
        std::copy(sequences[b].begin(), sequences[b].end(), batch.targets.begin() + b * len);
        std::copy(masks[b].begin(), masks[b].end(), batch.label_mask.begin() + b * len);
    }
    return batch;
}

template <typename T>
T mlm_batch_loss(const model::BasicModel<T>& model, const MaskedBatch& batch, bool train_mode, numerics::Rng* rng,
                 model::BasicModel<T>* grads) {
    if (grads == nullptr) {
        const auto stack = model::forward_all_layers(model, batch.inputs, train_mode, rng);
        return mlm_loss(model::mlm_decode(model, stack.final_layer()), batch.targets, batch.label_mask);
    }
    const auto trace = model::encode(model, batch.inputs, train_mode, rng);
    const auto head = model::mlm_forward(model, trace.stack.final_layer());
    auto ce = mlm_loss_with_grad(head.logits, batch.targets, batch.label_mask);
    const auto dhidden = model::mlm_backward(model, head, ce.dlogits, *grads);
    model::encoder_backward(model, trace, dhidden, *grads);
    return ce.loss;
}

MaskedEval evaluate_masked(const model::Model& model, std::span<const MaskedBatch> batches) {
    MaskedEval out;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batches) {
        const auto stack = model::forward_all_layers(model, batch.inputs, false);
        const auto logits = model::mlm_decode(model, stack.final_layer());
        const auto ce = mlm_loss_with_grad(logits, batch.targets, batch.label_mask);
        loss_sum += static_cast<double>(ce.loss) * static_cast<double>(ce.counted);
        const auto predicted = model::argmax_tokens(logits);
        for (std::size_t r = 0; r < predicted.size(); ++r) {
            if (batch.label_mask[r] == 0) continue;
            ++out.n_labeled;
            if (predicted[r] == batch.targets[r]) ++correct;
        }
    }
    if (out.n_labeled > 0) {
        out.loss = loss_sum / static_cast<double>(out.n_labeled);
        out.accuracy = static_cast<double>(correct) / static_cast<double>(out.n_labeled);
    }
    return out;
}

double reconstruction_accuracy(const model::Model& model, std::span<const TokenSequence> sequences,
                               bool include_special, std::size_t batch_size) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, sequences.size() - start);
        const auto chunk = sequences.subspan(start, n);
        const auto batch = model::Batch::from_sequences(chunk);
        const auto stack = model::forward_all_layers(model, batch, false);
        const auto predicted = model::argmax_tokens(model::mlm_decode(model, stack.final_layer()));
        for (std::size_t b = 0; b < n; ++b) {
            std::size_t hits = 0;
            std::size_t total = 0;
            for (std::size_t s = 0; s < chunk[b].size(); ++s) {
                const TokenId gold = chunk[b][s];
                if (gold == kPad || (!include_special && (gold == kCls || gold == kSep))) continue;
                ++total;
                if (predicted[b * batch.seq_len + s] == gold) ++hits;
            }
            if (total == 0) continue;
            sum += static_cast<double>(hits) / static_cast<double>(total);
            ++counted;
        }
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

PretrainResult pretrain(model::Model model, std::span<const TokenSequence> corpus,
                        std::span<const TokenSequence> eval_set, const PretrainConfig& config,
                        const MaskingPolicy& policy, const std::function<void(const EvalPoint&)>& on_eval) {
    config.validate();
    policy.validate();
    if (corpus.empty()) throw DataError("pre-training corpus is empty");
    const auto& cfg = model.config();
    const auto eval_batches = mask_eval_set(eval_set, policy, cfg.vocab_size, config.seed, 64);

    PretrainResult result{std::move(model), {}};
    auto record = [&](std::size_t step) {
        EvalPoint point;
        point.step = step;
        if (!eval_batches.empty()) {
            const auto masked = evaluate_masked(result.model, eval_batches);
            point.loss = masked.loss;
            point.masked_acc = masked.accuracy;
            point.recon_acc = reconstruction_accuracy(result.model, eval_set);
        }
        result.history.push_back(point);
        if (on_eval) on_eval(point);
    };

    record(0);
    if (config.steps == 0) return result;

    numerics::Rng rng(config.seed);
    auto grads = model::Model::zeros(cfg);
    numerics::AdamState adam;
    adam.lr = config.lr;
    auto params = result.model.parameters();
    std::vector<const numerics::Tensor*> grad_ptrs;
    for (auto* g : grads.parameters()) grad_ptrs.push_back(g);

    std::vector<TokenSequence> picked(config.batch_size);
    for (std::size_t step = 0; step < config.steps; ++step) {
        for (auto& s : picked) s = corpus[rng.uniform_index(corpus.size())];
        const auto batch = make_masked_batch(picked, policy, cfg.vocab_size, rng);
        zero_all(grads);
        const float loss = mlm_batch_loss(result.model, batch, true, &rng, &grads);
        if (!std::isfinite(loss)) {
            throw NumericError("pre-training loss became non-finite at step " + std::to_string(step + 1) +
                               " (lr multiplier " +
                               std::to_string(numerics::linear_warmup_decay(step, config.steps,
                                                                            config.warmup_fraction)) +
                               ")");
        }
        adam.lr = config.lr * numerics::linear_warmup_decay(step, config.steps, config.warmup_fraction);
        numerics::adam_step<float>(params, grad_ptrs, adam);
        const std::size_t done = step + 1;
        if (done % config.eval_every == 0 || done == config.steps) record(done);
    }
    return result;
}

template float mlm_batch_loss(const model::BasicModel<float>&, const MaskedBatch&, bool, numerics::Rng*,
                              model::BasicModel<float>*);
template double mlm_batch_loss(const model::BasicModel<double>&, const MaskedBatch&, bool, numerics::Rng*,
                               model::BasicModel<double>*);

}  // namespace layerlens::pretrain
