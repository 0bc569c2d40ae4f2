// SPDX-License-Identifier: Apache-2.0
#include "layerlens/downstream/tasks.hpp"

#include <algorithm>
#include <fstream>

#include "layerlens/error.hpp"
#include "layerlens/numerics/rng.hpp"
#include "layerlens/pretrain/grammar.hpp"

namespace layerlens::downstream {

namespace {

using pretrain::SyntheticGrammar;

void append_clause(std::string& line, const SyntheticGrammar::Clause& c) {
    if (!line.empty()) line += ' ';
    line.append(c.subject).append(" ").append(c.verb).append(" ").append(c.object);
}

std::size_t clause_count(numerics::Rng& rng) {
    return SyntheticGrammar::kMinClauses +
           rng.uniform_index(SyntheticGrammar::kMaxClauses - SyntheticGrammar::kMinClauses + 1);
}

}  // namespace

model::TaskKind kind_of(const LabeledExample& example) {
    return std::holds_alternative<ClassificationExample>(example) ? model::TaskKind::Classification
                                                                  : model::TaskKind::Span;
}

model::TaskKind kind_of(const TaskRecord& record) {
    return std::holds_alternative<ClassificationRecord>(record) ? model::TaskKind::Classification
                                                                : model::TaskKind::Span;
}

model::TaskKind common_kind(std::span<const LabeledExample> examples) {
    if (examples.empty()) throw DataError("dataset is empty");
    const auto kind = kind_of(examples.front());
    for (std::size_t i = 1; i < examples.size(); ++i) {
        if (kind_of(examples[i]) != kind) {
            throw DataError("example " + std::to_string(i) + " is " + model::to_string(kind_of(examples[i])) +
                            ", expected " + model::to_string(kind));
        }
    }
    return kind;
}

void validate(const SpanExample& example) {
    if (!example.answer) return;
    const auto [start, end] = *example.answer;
    if (start > end || end >= example.context.size()) {
        throw DataError("answer span [" + std::to_string(start) + ", " + std::to_string(end) +
                        "] invalid for a context of " + std::to_string(example.context.size()) + " tokens");
    }
}

LabeledExample encode_record(const TaskRecord& record, const toolkit::Vocabulary& vocab) {
    if (const auto* c = std::get_if<ClassificationRecord>(&record)) {
        ClassificationExample out;
        out.text = vocab.ids(c->text);
        if (c->text_pair) out.text_pair = vocab.ids(*c->text_pair);
        out.label = c->label;
        return out;
    }
    const auto& s = std::get<SpanRecord>(record);
    SpanExample out{vocab.ids(s.context), vocab.ids(s.question), s.answer};
    validate(out);
    return out;
}

std::vector<LabeledExample> encode_records(std::span<const TaskRecord> records, const toolkit::Vocabulary& vocab) {
    std::vector<LabeledExample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(encode_record(r, vocab));
    return out;
}

TaskRecord record_from_json(const nlohmann::json& j) {
    try {
        if (j.contains("text")) {
            ClassificationRecord r;
            r.text = j.at("text").get<std::string>();
            if (j.contains("text_pair") && !j.at("text_pair").is_null()) {
                r.text_pair = j.at("text_pair").get<std::string>();
            }
            r.label = j.at("label").get<std::size_t>();
            return r;
        }
        SpanRecord r;
        r.context = j.at("context").get<std::string>();
        r.question = j.at("question").get<std::string>();
        const auto& s = j.at("answer_start");
        const auto& e = j.at("answer_end");
        if (s.is_null() != e.is_null()) throw DataError("answer_start and answer_end must both be null or set");
        if (!s.is_null()) r.answer = SpanIndices{s.get<std::size_t>(), e.get<std::size_t>()};
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed task record: ") + e.what());
    }
}

nlohmann::json record_to_json(const TaskRecord& record) {
    if (const auto* c = std::get_if<ClassificationRecord>(&record)) {
        nlohmann::json j{{"text", c->text}, {"label", c->label}};
        if (c->text_pair) j["text_pair"] = *c->text_pair;
        return j;
    }
    const auto& s = std::get<SpanRecord>(record);
    nlohmann::json j{{"context", s.context}, {"question", s.question}};
    j["answer_start"] = s.answer ? nlohmann::json(s.answer->first) : nlohmann::json(nullptr);
    j["answer_end"] = s.answer ? nlohmann::json(s.answer->second) : nlohmann::json(nullptr);
    return j;
}

std::vector<TaskRecord> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<TaskRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            out.push_back(record_from_json(j));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_jsonl(std::span<const TaskRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

FramedExample frame(const LabeledExample& example, std::size_t max_seq_len) {
    FramedExample out;
    if (const auto* c = std::get_if<ClassificationExample>(&example)) {
        out.ids = c->text_pair ? toolkit::frame_pair(c->text, *c->text_pair, max_seq_len)
                               : toolkit::frame_single(c->text, max_seq_len);
        out.label = c->label;
        return out;
    }
    const auto& s = std::get<SpanExample>(example);
    validate(s);
    out.ids = toolkit::frame_pair(s.question, s.context, max_seq_len);
    const std::size_t q_len = toolkit::framed_first_length(s.question.size(), s.context.size(), max_seq_len);
    out.context_offset = q_len + 2;
    out.context_len = out.ids.size() - out.context_offset - 1;
    if (s.answer && s.answer->second < out.context_len) {
        out.start_target = out.context_offset + s.answer->first;
        out.end_target = out.context_offset + s.answer->second;
    }
    return out;
}

std::string_view marker_word() { return SyntheticGrammar::clauses().front().subject; }

std::vector<TaskRecord> synthetic_classification(std::size_t n, std::uint64_t seed) {
    const auto& clauses = SyntheticGrammar::clauses();
    numerics::Rng rng(seed);
    std::vector<TaskRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool positive = rng.bernoulli(0.5);
        const std::size_t count = clause_count(rng);
        std::vector<std::size_t> picks(count);
        // Clause 0 carries the marker; negatives never draw it.
        for (auto& p : picks) p = 1 + rng.uniform_index(clauses.size() - 1);
        if (positive) picks[rng.uniform_index(count)] = 0;
        std::string line;
        for (auto p : picks) append_clause(line, clauses[p]);
        out.push_back(ClassificationRecord{std::move(line), std::nullopt, positive ? 1U : 0U});
    }
    return out;
}

std::vector<TaskRecord> synthetic_span(std::size_t n, std::uint64_t seed) {
    const auto& clauses = SyntheticGrammar::clauses();
    numerics::Rng rng(seed);
    std::vector<TaskRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = clause_count(rng);
        std::vector<std::size_t> picks(count);
        for (auto& p : picks) p = rng.uniform_index(clauses.size());
        std::string context;
        for (auto p : picks) append_clause(context, clauses[p]);
        SpanRecord r;
        r.context = std::move(context);
        if (rng.uniform() < 1.0 / 3.0) {
            std::vector<std::size_t> absent;
            for (std::size_t c = 0; c < clauses.size(); ++c) {
                if (std::find(picks.begin(), picks.end(), c) == picks.end()) absent.push_back(c);
            }
            r.question = std::string(clauses[absent[rng.uniform_index(absent.size())]].subject);
        } else {
            const std::size_t chosen = picks[rng.uniform_index(count)];
            const std::size_t first =
                static_cast<std::size_t>(std::find(picks.begin(), picks.end(), chosen) - picks.begin());
            r.question = std::string(clauses[chosen].subject);
            r.answer = SpanIndices{3 * first + 1, 3 * first + 2};
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace layerlens::downstream
