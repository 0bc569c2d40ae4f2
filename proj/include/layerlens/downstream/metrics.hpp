// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "layerlens/downstream/tasks.hpp"

namespace layerlens::downstream {

/// Fraction of equal entries; 0 for empty input. Throws ShapeError on a
/// length mismatch.
double classification_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold);

struct SpanScore {
    double exact_match = 0.0;
    double f1 = 0.0;
};

/// Token-level EM and F1 for one example; nullopt is "no answer". Tokens are
/// compared verbatim. Both absent scores 1, exactly one absent scores 0.
SpanScore span_score(const std::optional<std::vector<TokenId>>& predicted,
                     const std::optional<std::vector<TokenId>>& gold);

/// The context tokens covered by `span`, or nullopt.
std::optional<std::vector<TokenId>> span_tokens(std::span<const TokenId> context,
                                                const std::optional<SpanIndices>& span);

struct SpanMetrics {
    double exact_match = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;
};

/// Mean span_score over examples.
SpanMetrics span_metrics(std::span<const SpanExample> examples,
                         std::span<const std::optional<SpanIndices>> predicted);

/// Best context span (start <= end) by log_start[i] + log_end[j], in
/// context-relative indices. Returns nullopt unless that score exceeds the
/// no-answer score log_start[0] + log_end[0] minus `threshold`. Equal
/// scores resolve to the earliest start, then the earliest end.
std::optional<SpanIndices> decode_span(std::span<const double> log_start, std::span<const double> log_end,
                                       std::size_t context_offset, std::size_t context_len, double threshold);

/// Elementwise sum of probability vectors of equal length.
std::vector<double> sum_probabilities(std::span<const std::vector<double>> distributions);

/// Index of the largest entry, lowest on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace layerlens::downstream
