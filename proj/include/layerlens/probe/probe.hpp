// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerlens/model/forward.hpp"
#include "layerlens/toolkit/vocab.hpp"

namespace layerlens::probe {

struct TokenAccuracy {
    std::size_t correct = 0;
    std::size_t scored = 0;
    /// correct / scored, or 0 when nothing was scored.
    double accuracy = 0.0;
};

/// Exact-match rate over positions where `score_mask` is set. Throws
/// ShapeError when the three inputs differ in length.
TokenAccuracy token_accuracy(std::span<const TokenId> predicted, std::span<const TokenId> gold,
                             std::span<const std::uint8_t> score_mask);

/// 1 for every scored position of `gold`: never [PAD], [CLS]/[SEP] only with
/// `include_special`.
std::vector<std::uint8_t> score_mask(std::span<const TokenId> gold, bool include_special = false);

struct ProbeOptions {
    bool include_special = false;
    /// Keep the decoded tokens of every sentence at every layer.
    bool keep_decodes = false;
    std::size_t batch_size = 64;
};

struct ProbeReport {
    /// Index 0 is the LayerNormed embedding output, index i encoder step i.
    /// Per-sentence accuracy averaged over sentences.
    std::vector<double> per_layer_accuracy;
    /// Correct tokens over scored tokens, pooled across sentences.
    std::vector<double> per_layer_pooled_accuracy;
    std::size_t n_sequences = 0;
    /// Sentences with no scored position; they are left out of the averages.
    std::size_t n_sequences_skipped = 0;
    std::size_t n_tokens_scored = 0;
    bool include_special = false;
    /// decodes[sentence][layer]: predicted tokens at the scored positions.
    std::vector<std::vector<std::vector<std::string>>> decodes;

    double final_layer_accuracy() const { return per_layer_accuracy.back(); }
};

void to_json(nlohmann::json& j, const ProbeReport& report);

/// Decodes every layer of `model` through its MLM head on the unmasked
/// `sequences` and scores each position against the input token. Eval mode.
/// `vocab` is needed only for decodes.
ProbeReport probe_layers(const model::Model& model, std::span<const TokenSequence> sequences,
                         const ProbeOptions& options = {}, const toolkit::Vocabulary* vocab = nullptr);

/// One row per layer 0..depth: the argmax tokens at the scored positions.
std::vector<std::vector<std::string>> decode_sentence(const model::Model& model, const toolkit::Vocabulary& vocab,
                                                      std::span<const TokenId> sequence,
                                                      bool include_special = false);

struct DepthPoint {
    std::size_t depth = 0;
    double final_layer_accuracy = 0.0;
};

void to_json(nlohmann::json& j, const DepthPoint& point);

/// For every depth, deepens a copy of `model` and probes its final layer.
std::vector<DepthPoint> probe_deepened_series(const model::Model& model, std::span<const TokenSequence> sequences,
                                              std::span<const std::size_t> depths, const ProbeOptions& options = {});

}  // namespace layerlens::probe
