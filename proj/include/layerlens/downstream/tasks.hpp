// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerlens/model/task_head.hpp"
#include "layerlens/tokens.hpp"
#include "layerlens/toolkit/vocab.hpp"

namespace layerlens::downstream {

/// Inclusive [start, end] word indices into the context.
using SpanIndices = std::pair<std::size_t, std::size_t>;

/// Text-level examples as they appear in JSON-lines files.
struct ClassificationRecord {
    std::string text;
    std::optional<std::string> text_pair;
    std::size_t label = 0;
};

struct SpanRecord {
    std::string context;
    std::string question;
    std::optional<SpanIndices> answer;  // nullopt: unanswerable
};

using TaskRecord = std::variant<ClassificationRecord, SpanRecord>;

/// Id-level examples, without [CLS]/[SEP] framing.
struct ClassificationExample {
    TokenSequence text;
    std::optional<TokenSequence> text_pair;
    std::size_t label = 0;
};

struct SpanExample {
    TokenSequence context;
    TokenSequence question;
    std::optional<SpanIndices> answer;
};

using LabeledExample = std::variant<ClassificationExample, SpanExample>;

model::TaskKind kind_of(const LabeledExample& example);
model::TaskKind kind_of(const TaskRecord& record);

/// Throws DataError unless every example has the same kind; returns it.
model::TaskKind common_kind(std::span<const LabeledExample> examples);

/// Throws DataError for a span outside the context or with start > end.
void validate(const SpanExample& example);

LabeledExample encode_record(const TaskRecord& record, const toolkit::Vocabulary& vocab);
std::vector<LabeledExample> encode_records(std::span<const TaskRecord> records, const toolkit::Vocabulary& vocab);

/// JSON objects {"text","label"[,"text_pair"]} or
/// {"context","question","answer_start","answer_end"} with null indices for
/// unanswerable questions.
TaskRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const TaskRecord& record);

std::vector<TaskRecord> load_jsonl(const std::filesystem::path& path);
void save_jsonl(std::span<const TaskRecord> records, const std::filesystem::path& path);

/// An example framed for the encoder.
/// Classification: [CLS] text [SEP] (or [CLS] text [SEP] pair [SEP]).
/// Span: [CLS] question [SEP] context [SEP]; targets point into `ids`, with 0
/// ([CLS]) standing for "no answer".
struct FramedExample {
    TokenSequence ids;
    std::size_t label = 0;
    std::size_t start_target = 0;
    std::size_t end_target = 0;
    std::size_t context_offset = 0;
    std::size_t context_len = 0;  // surviving context tokens
};

/// A gold answer cut off by truncation becomes a no-answer target.
FramedExample frame(const LabeledExample& example, std::size_t max_seq_len);

/// The marker word whose presence decides the synthetic classification label.
std::string_view marker_word();

/// Sentences from the toy grammar labelled 1 when they contain marker_word().
/// Labels are drawn with probability 1/2.
std::vector<TaskRecord> synthetic_classification(std::size_t n, std::uint64_t seed);

/// Questions are a subject word; the answer is the verb and object that
/// follow its first occurrence. About one third are unanswerable (the subject
/// is absent from the context).
std::vector<TaskRecord> synthetic_span(std::size_t n, std::uint64_t seed);

}  // namespace layerlens::downstream
