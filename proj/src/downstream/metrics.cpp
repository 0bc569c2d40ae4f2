// SPDX-License-Identifier: Apache-2.0
#include "layerlens/downstream/metrics.hpp"

#include <limits>
#include <map>

#include "layerlens/error.hpp"

namespace layerlens::downstream {

double classification_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
    if (predicted.size() != gold.size()) {
        throw ShapeError("classification_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(gold.size()) + " labels");
    }
    if (gold.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

SpanScore span_score(const std::optional<std::vector<TokenId>>& predicted,
                     const std::optional<std::vector<TokenId>>& gold) {
    if (!predicted || !gold) {
        const double both_absent = !predicted && !gold ? 1.0 : 0.0;
        return {both_absent, both_absent};
    }
    SpanScore out;
    out.exact_match = *predicted == *gold ? 1.0 : 0.0;
    std::map<TokenId, std::size_t> gold_counts;
    for (TokenId t : *gold) ++gold_counts[t];
    std::size_t common = 0;
    for (TokenId t : *predicted) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return out;
    const double precision = static_cast<double>(common) / static_cast<double>(predicted->size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold->size());
    out.f1 = 2.0 * precision * recall / (precision + recall);
    return out;
}

std::optional<std::vector<TokenId>> span_tokens(std::span<const TokenId> context,
                                                const std::optional<SpanIndices>& span) {
    if (!span) return std::nullopt;
    if (span->first > span->second || span->second >= context.size()) {
        throw RangeError("span [" + std::to_string(span->first) + ", " + std::to_string(span->second) +
                         "] outside a context of " + std::to_string(context.size()) + " tokens");
    }
    return std::vector<TokenId>(context.begin() + static_cast<std::ptrdiff_t>(span->first),
                                context.begin() + static_cast<std::ptrdiff_t>(span->second) + 1);
}

SpanMetrics span_metrics(std::span<const SpanExample> examples,
                         std::span<const std::optional<SpanIndices>> predicted) {
    if (examples.size() != predicted.size()) {
        throw ShapeError("span_metrics: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(examples.size()) + " examples");
    }
    SpanMetrics out;
    out.n = examples.size();
    if (out.n == 0) return out;
    double em = 0.0;
    double f1 = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto s = span_score(span_tokens(examples[i].context, predicted[i]),
                                  span_tokens(examples[i].context, examples[i].answer));
        em += s.exact_match;
        f1 += s.f1;
    }
    out.exact_match = em / static_cast<double>(out.n);
    out.f1 = f1 / static_cast<double>(out.n);
    return out;
}

std::optional<SpanIndices> decode_span(std::span<const double> log_start, std::span<const double> log_end,
                                       std::size_t context_offset, std::size_t context_len, double threshold) {
    if (log_start.size() != log_end.size() || context_offset + context_len > log_start.size() ||
        log_start.empty()) {
        throw ShapeError("decode_span: context [" + std::to_string(context_offset) + ", +" +
                         std::to_string(context_len) + ") does not fit " + std::to_string(log_start.size()) +
                         " positions");
    }
    double best = -std::numeric_limits<double>::infinity();
    std::optional<SpanIndices> best_span;
    for (std::size_t i = 0; i < context_len; ++i) {
        for (std::size_t j = i; j < context_len; ++j) {
            const double score = log_start[context_offset + i] + log_end[context_offset + j];
            if (!best_span || score > best) {
                best = score;
                best_span = SpanIndices{i, j};
            }
        }
    }
    const double null_score = log_start[0] + log_end[0];
    if (best_span && best > null_score - threshold) return best_span;
    return std::nullopt;
}

std::vector<double> sum_probabilities(std::span<const std::vector<double>> distributions) {
    if (distributions.empty()) throw ShapeError("sum_probabilities needs at least one distribution");
    std::vector<double> sum(distributions.front().size(), 0.0);
    for (const auto& d : distributions) {
        if (d.size() != sum.size()) throw ShapeError("probability vectors differ in length");
        for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
    }
    return sum;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw ShapeError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

}  // namespace layerlens::downstream
