// SPDX-License-Identifier: Apache-2.0
#include "layerlens/probe/probe.hpp"

#include "layerlens/error.hpp"
#include "layerlens/surgery/deepen.hpp"

namespace layerlens::probe {

TokenAccuracy token_accuracy(std::span<const TokenId> predicted, std::span<const TokenId> gold,
                             std::span<const std::uint8_t> score_mask) {
    if (predicted.size() != gold.size() || score_mask.size() != gold.size()) {
        throw ShapeError("token_accuracy: predicted " + std::to_string(predicted.size()) + ", gold " +
                         std::to_string(gold.size()) + " and mask " + std::to_string(score_mask.size()) +
                         " lengths differ");
    }
    TokenAccuracy out;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (score_mask[i] == 0) continue;
        ++out.scored;
        if (predicted[i] == gold[i]) ++out.correct;
    }
    if (out.scored > 0) out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.scored);
    return out;
}

std::vector<std::uint8_t> score_mask(std::span<const TokenId> gold, bool include_special) {
    std::vector<std::uint8_t> mask(gold.size(), 0);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const TokenId g = gold[i];
        mask[i] = g != kPad && (include_special || (g != kCls && g != kSep)) ? 1 : 0;
    }
    return mask;
}

void to_json(nlohmann::json& j, const ProbeReport& report) {
    j = {
        {"per_layer_accuracy", report.per_layer_accuracy},
        {"per_layer_pooled_accuracy", report.per_layer_pooled_accuracy},
        {"n_sequences", report.n_sequences},
        {"n_sequences_skipped", report.n_sequences_skipped},
        {"n_tokens_scored", report.n_tokens_scored},
        {"include_special", report.include_special},
        {"layer_0", "layernormed token+position embedding"},
    };
    if (!report.decodes.empty()) j["decodes"] = report.decodes;
}

ProbeReport probe_layers(const model::Model& model, std::span<const TokenSequence> sequences,
                         const ProbeOptions& options, const toolkit::Vocabulary* vocab) {
    if (options.keep_decodes && vocab == nullptr) throw ConfigError("probe decodes need a vocabulary");
    if (options.batch_size == 0) throw ConfigError("probe batch_size must be positive");
    const std::size_t n_layers = model.depth() + 1;
    ProbeReport report;
    report.include_special = options.include_special;
    report.n_sequences = sequences.size();
    std::vector<double> sentence_sum(n_layers, 0.0);
    std::vector<std::size_t> correct(n_layers, 0);
    std::size_t averaged = 0;
    if (options.keep_decodes) report.decodes.resize(sequences.size());

    for (std::size_t start = 0; start < sequences.size(); start += options.batch_size) {
        const std::size_t n = std::min(options.batch_size, sequences.size() - start);
        const auto chunk = sequences.subspan(start, n);
        const auto batch = model::Batch::from_sequences(chunk);
        const auto stack = model::forward_all_layers(model, batch, false);
        std::vector<std::vector<TokenId>> predicted(n_layers);
        for (std::size_t l = 0; l < n_layers; ++l) {
            predicted[l] = model::argmax_tokens(model::mlm_decode(model, stack.layers[l]));
        }
        for (std::size_t b = 0; b < n; ++b) {
            const auto& gold = chunk[b];
            const auto mask = score_mask(gold, options.include_special);
            bool scored_any = false;
            if (options.keep_decodes) report.decodes[start + b].resize(n_layers);
            for (std::size_t l = 0; l < n_layers; ++l) {
                const auto row = std::span<const TokenId>(predicted[l]).subspan(b * batch.seq_len, gold.size());
                const auto acc = token_accuracy(row, gold, mask);
                if (l == 0) report.n_tokens_scored += acc.scored;
                correct[l] += acc.correct;
                if (acc.scored > 0) {
                    sentence_sum[l] += acc.accuracy;
                    scored_any = true;
                }
                if (options.keep_decodes) {
                    auto& out = report.decodes[start + b][l];
                    for (std::size_t s = 0; s < gold.size(); ++s) {
                        if (mask[s] != 0) out.push_back(vocab->token(row[s]));
                    }
                }
            }
            if (scored_any) {
                ++averaged;
            } else {
                ++report.n_sequences_skipped;
            }
        }
    }
    report.per_layer_accuracy.assign(n_layers, 0.0);
    report.per_layer_pooled_accuracy.assign(n_layers, 0.0);
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (averaged > 0) report.per_layer_accuracy[l] = sentence_sum[l] / static_cast<double>(averaged);
        if (report.n_tokens_scored > 0) {
            report.per_layer_pooled_accuracy[l] =
                static_cast<double>(correct[l]) / static_cast<double>(report.n_tokens_scored);
        }
    }
    return report;
}

std::vector<std::vector<std::string>> decode_sentence(const model::Model& model, const toolkit::Vocabulary& vocab,
                                                      std::span<const TokenId> sequence, bool include_special) {
    const TokenSequence seq(sequence.begin(), sequence.end());
    ProbeOptions options;
    options.include_special = include_special;
    options.keep_decodes = true;
    auto report = probe_layers(model, std::span<const TokenSequence>(&seq, 1), options, &vocab);
    return std::move(report.decodes.front());
}

void to_json(nlohmann::json& j, const DepthPoint& point) {
    j = {{"depth", point.depth}, {"final_layer_accuracy", point.final_layer_accuracy}};
}

std::vector<DepthPoint> probe_deepened_series(const model::Model& model, std::span<const TokenSequence> sequences,
                                              std::span<const std::size_t> depths, const ProbeOptions& options) {
    ProbeOptions opts = options;
    opts.keep_decodes = false;
    std::vector<DepthPoint> series;
    for (std::size_t depth : depths) {
        const auto deeper = surgery::deepen_to(model, depth);
        series.push_back({depth, probe_layers(deeper, sequences, opts).final_layer_accuracy()});
    }
    return series;
}

}  // namespace layerlens::probe
