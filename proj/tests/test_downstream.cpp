// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>

#include "layerlens/downstream/finetune.hpp"
#include "layerlens/downstream/metrics.hpp"
#include "layerlens/downstream/tasks.hpp"
#include "layerlens/error.hpp"
#include "layerlens/pretrain/grammar.hpp"
#include "layerlens/surgery/deepen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace layerlens;
using namespace layerlens::downstream;
using model::TaskKind;
using testing::tiny_config;

namespace {

toolkit::Vocabulary grammar_vocab() {
    const auto words = pretrain::SyntheticGrammar::words();
    return toolkit::Vocabulary::build(words, 80);
}

std::vector<LabeledExample> classification_data(std::size_t n, std::uint64_t seed) {
    return encode_records(synthetic_classification(n, seed), grammar_vocab());
}

model::ModelConfig toy_config() {
    model::ModelConfig c;
    c.vocab_size = 80;
    return c;
}

std::vector<LabeledExample> random_classification(numerics::Rng& rng, std::size_t n, std::size_t vocab,
                                                  std::size_t classes) {
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.emplace_back(ClassificationExample{oracle::random_tokens(rng, 1 + rng.uniform_index(8), vocab),
                                               std::nullopt, rng.uniform_index(classes)});
    }
    return out;
}

}  // namespace

TEST_CASE("span metric examples") {
    const std::vector<TokenId> the_cat{10, 11}, a_cat{12, 11};
    auto s = span_score(the_cat, the_cat);
    CHECK(s.exact_match == 1.0);
    CHECK(s.f1 == 1.0);
    s = span_score(a_cat, the_cat);
    CHECK(s.exact_match == 0.0);
    CHECK(s.f1 == doctest::Approx(0.5).epsilon(1e-12));
    s = span_score(std::nullopt, std::nullopt);
    CHECK(s.exact_match == 1.0);
    CHECK(s.f1 == 1.0);
    CHECK(span_score(std::nullopt, the_cat).f1 == 0.0);
    CHECK(span_score(the_cat, std::nullopt).f1 == 0.0);
    CHECK(span_score(std::vector<TokenId>{7}, the_cat).f1 == 0.0);
}

TEST_CASE("span score matches the sorted-merge oracle") {
    numerics::Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        auto draw = [&]() -> std::optional<TokenSequence> {
            if (rng.uniform() < 0.15) return std::nullopt;
            TokenSequence t(1 + rng.uniform_index(5));
            for (auto& v : t) v = static_cast<TokenId>(5 + rng.uniform_index(4));
            return t;
        };
        const auto p = draw(), g = draw();
        const auto s = span_score(p, g);
        const auto [em, f1] = oracle::em_f1(p, g);
        CHECK(s.exact_match == em);
        CHECK(std::abs(s.f1 - f1) < 1e-12);
    }
}

TEST_CASE("classification accuracy") {
    const std::vector<std::size_t> gold{0, 1, 1, 0};
    CHECK(classification_accuracy(gold, gold) == 1.0);
    CHECK(classification_accuracy(std::vector<std::size_t>{1, 1, 1, 1}, gold) == 0.5);
    CHECK_THROWS_AS(classification_accuracy(std::vector<std::size_t>{1}, gold), ShapeError);
    const auto data = classification_data(2000, 2);
    std::vector<std::size_t> labels, constant(data.size(), 1);
    for (const auto& e : data) labels.push_back(std::get<ClassificationExample>(e).label);
    CHECK(std::abs(classification_accuracy(constant, labels) - 0.5) < 0.05);
}

TEST_CASE("decode span picks the best pair or no answer") {
    const double ninf = -1e9;
    // positions: 0 = CLS, context at 2..4
    const std::vector<double> ls{-3, ninf, -1, -0.5, -4, ninf};
    const std::vector<double> le{-3, ninf, -2, -1, -0.2, ninf};
    CHECK(decode_span(ls, le, 2, 3, 0.0) == SpanIndices{1, 2});
    // null score -6 vs best -0.7: a threshold of -5.3 or less flips to no answer.
    CHECK(decode_span(ls, le, 2, 3, -5.2).has_value());
    CHECK_FALSE(decode_span(ls, le, 2, 3, -5.4).has_value());
    const std::vector<double> flat(4, -1.0);
    CHECK(decode_span(flat, flat, 1, 3, 1.0) == SpanIndices{0, 0});
    CHECK_THROWS_AS(decode_span(flat, flat, 2, 3, 0.0), ShapeError);
}

TEST_CASE("sum of probabilities and argmax") {
    const std::vector<std::vector<double>> d{{0.6, 0.4}, {0.2, 0.8}};
    const auto s = sum_probabilities(d);
    CHECK(s[0] == doctest::Approx(0.8));
    CHECK(s[1] == doctest::Approx(1.2));
    CHECK(downstream::argmax(s) == 1);
    CHECK(downstream::argmax(std::vector<double>{1, 3, 3}) == 1);
}

TEST_CASE("records round-trip through jsonl") {
    std::vector<TaskRecord> records{ClassificationRecord{"a b", std::nullopt, 1},
                                    ClassificationRecord{"a", std::string("b c"), 0},
                                    SpanRecord{"x y z", "q", SpanIndices{1, 2}}, SpanRecord{"x", "q", std::nullopt}};
    const auto path = std::filesystem::temp_directory_path() / "layerlens_records.jsonl";
    save_jsonl(records, path);
    const auto back = load_jsonl(path);
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(record_to_json(back[i]) == record_to_json(records[i]));
    CHECK(record_to_json(records[3])["answer_start"].is_null());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(record_from_json(nlohmann::json{{"text", "a"}}), DataError);
    const auto outside = record_from_json(
        nlohmann::json{{"context", "a b"}, {"question", "a"}, {"answer_start", 1}, {"answer_end", 2}});
    CHECK_THROWS_AS(encode_record(outside, toolkit::Vocabulary::build(std::vector<std::string>{"a b"}, 10)),
                    DataError);
}

TEST_CASE("span framing") {
    const SpanExample e{{10, 11, 12, 13}, {20, 21}, SpanIndices{2, 3}};
    auto f = frame(e, 32);
    CHECK(f.ids == TokenSequence{kCls, 20, 21, kSep, 10, 11, 12, 13, kSep});
    CHECK(f.context_offset == 4);
    CHECK(f.context_len == 4);
    CHECK(f.start_target == 6);
    CHECK(f.end_target == 7);
    // Truncation cuts the answer: it becomes a no-answer target.
    f = frame(e, 7);
    CHECK(f.ids.size() == 7);
    CHECK(f.start_target == 0);
    CHECK(f.end_target == 0);
    const SpanExample none{{10}, {20}, std::nullopt};
    CHECK(frame(none, 32).start_target == 0);
}

TEST_CASE("synthetic tasks") {
    const auto cls = synthetic_classification(400, 3);
    std::size_t positives = 0;
    for (const auto& r : cls) {
        const auto& c = std::get<ClassificationRecord>(r);
        const bool has = (" " + c.text + " ").find(" " + std::string(marker_word()) + " ") != std::string::npos;
        CHECK(has == (c.label == 1));
        positives += c.label;
    }
    CHECK(positives > 150);
    CHECK(positives < 250);
    const auto vocab = grammar_vocab();
    std::size_t unanswerable = 0;
    for (const auto& r : synthetic_span(300, 4)) {
        const auto e = std::get<SpanExample>(encode_record(r, vocab));
        CHECK_NOTHROW(validate(e));
        if (!e.answer) {
            ++unanswerable;
            continue;
        }
        CHECK(e.context[e.answer->first - 1] == e.question[0]);
    }
    CHECK(unanswerable > 70);
    CHECK(unanswerable < 130);
}

TEST_CASE("evaluators match brute-force recomputation") {
    numerics::Rng rng(5);
    const auto cfg = tiny_config(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = model::init_model(cfg, 100 + trial);
        const auto chead = model::init_task_head(TaskKind::Classification, 16, 3, 200 + trial);
        const auto data = random_classification(rng, 12, 24, 3);
        std::vector<std::pair<TokenSequence, std::size_t>> plain;
        for (const auto& e : data) {
            const auto& c = std::get<ClassificationExample>(e);
            plain.emplace_back(c.text, c.label);
        }
        CHECK(std::abs(evaluate_classification(m, chead, data) - oracle::classification_accuracy(m, chead, plain)) <
              1e-9);

        const auto shead = model::init_task_head(TaskKind::Span, 16, 0, 300 + trial);
        const auto cases = oracle::random_span_cases(rng, 12, 24);
        std::vector<LabeledExample> spans;
        for (const auto& c : cases) spans.emplace_back(SpanExample{c.context, c.question, c.answer});
        for (double threshold : {-0.5, 0.0, 0.5}) {
            const auto got = evaluate_span(m, shead, spans, threshold);
            const auto [em, f1] = oracle::span_metrics(m, shead, cases, threshold);
            CHECK(std::abs(got.exact_match - em) < 1e-9);
            CHECK(std::abs(got.f1 - f1) < 1e-9);
        }
    }
}

TEST_CASE("gold as prediction scores perfectly") {
    const auto vocab = grammar_vocab();
    const auto data = encode_records(synthetic_span(200, 6), vocab);
    std::vector<SpanExample> spans;
    std::vector<std::optional<SpanIndices>> gold;
    for (const auto& e : data) {
        spans.push_back(std::get<SpanExample>(e));
        gold.push_back(spans.back().answer);
    }
    const auto m = span_metrics(spans, gold);
    CHECK(m.exact_match == 1.0);
    CHECK(m.f1 == 1.0);
}

TEST_CASE("zero epochs leaves model and head unchanged") {
    const auto m = model::init_model(toy_config(), 7);
    const auto head = model::init_task_head(TaskKind::Classification, 32, 2, 8);
    FinetuneConfig fc;
    fc.epochs = 0;
    const auto r = finetune(m, head, classification_data(20, 9), {}, fc);
    CHECK(model::bitwise_equal(r.model, m));
    CHECK(numerics::bitwise_equal(r.head.weight, head.weight));
    CHECK(r.history.empty());
}

TEST_CASE("classification fine-tunes to high accuracy and deterministically") {
    const auto m = model::init_model(toy_config(), 10);
    const auto head = model::init_task_head(TaskKind::Classification, 32, 2, 11);
    const auto train = classification_data(1000, 12), dev = classification_data(200, 13);
    const FinetuneConfig fc;
    const auto r = finetune(m, head, train, dev, fc);
    REQUIRE(r.history.size() == 3);
    CHECK(r.history.back().dev.accuracy >= 0.95);
    CHECK(evaluate_classification(r.model, r.head, dev) == r.history.back().dev.accuracy);
    const auto again = finetune(m, head, train, dev, fc);
    CHECK(model::bitwise_equal(again.model, r.model));
    CHECK(numerics::bitwise_equal(again.head.weight, r.head.weight));
}

TEST_CASE("a deepened model fine-tunes under the same config") {
    const auto base = model::init_model(toy_config(), 14);
    const auto deep = surgery::deepen(base, surgery::plan_deepen(2, 3));
    const auto head = model::init_task_head(TaskKind::Classification, 32, 2, 15);
    FinetuneConfig fc;
    fc.epochs = 1;
    const auto r = finetune(deep, head, classification_data(200, 16), classification_data(50, 17), fc);
    CHECK(r.model.depth() == 3);
    CHECK(r.history.size() == 1);
}

TEST_CASE("span fine-tuning runs and reports EM and F1") {
    const auto m = model::init_model(toy_config(), 18);
    const auto head = model::init_task_head(TaskKind::Span, 32, 0, 19);
    const auto vocab = grammar_vocab();
    FinetuneConfig fc;
    fc.epochs = 1;
    const auto r = finetune(m, head, encode_records(synthetic_span(200, 20), vocab),
                            encode_records(synthetic_span(50, 21), vocab), fc);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].dev.kind == TaskKind::Span);
    CHECK(r.history[0].dev.f1 >= 0.0);
    CHECK(r.history[0].dev.f1 <= 1.0);
    CHECK(std::isfinite(r.history[0].train_loss));
}

TEST_CASE("head and data must agree") {
    const auto m = model::init_model(toy_config(), 22);
    const auto span_head = model::init_task_head(TaskKind::Span, 32, 0, 23);
    CHECK_THROWS_AS(finetune(m, span_head, classification_data(10, 24), {}, FinetuneConfig{}), ConfigError);
    FinetuneConfig bad;
    bad.lr = 0.0;
    const auto head = model::init_task_head(TaskKind::Classification, 32, 2, 25);
    CHECK_THROWS_AS(finetune(m, head, classification_data(10, 24), {}, bad), ConfigError);
}

TEST_CASE("ensemble invariants") {
    const auto cfg = tiny_config(2);
    const auto m = model::init_model(cfg, 26);
    const auto head = model::init_task_head(TaskKind::Classification, 16, 3, 27);
    numerics::Rng rng(28);
    const auto data = random_classification(rng, 40, 24, 3);
    const auto single = predict(m, head, data, 128);
    const std::vector<EnsembleMember> one{{&m, &head}};
    const auto via_one = ensemble_predict_all(one, data);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(via_one[i].label == single[i].label);
    const std::vector<EnsembleMember> three(3, EnsembleMember{&m, &head});
    const auto via_three = ensemble_predict_all(three, data);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(via_three[i].label == single[i].label);
    CHECK(ensemble_predict(three, data[0]).label == single[0].label);

    const auto m2 = model::init_model(cfg, 29);
    const auto head2 = model::init_task_head(TaskKind::Classification, 16, 3, 30);
    const std::vector<EnsembleMember> mixed{{&m, &head}, {&m2, &head2}};
    for (const auto& d : ensemble_distributions(mixed, data, 128)) {
        double s = 0.0;
        for (double p : d.classes) {
            CHECK(p >= 0.0);
            s += p;
        }
        CHECK(std::abs(s - 1.0) < 1e-5);
    }

    const auto span_head = model::init_task_head(TaskKind::Span, 16, 0, 31);
    const std::vector<EnsembleMember> bad{{&m, &head}, {&m, &span_head}};
    CHECK_THROWS_AS(ensemble_predict_all(bad, data), ConfigError);
    const auto two_class = model::init_task_head(TaskKind::Classification, 16, 2, 32);
    const std::vector<EnsembleMember> bad_classes{{&m, &head}, {&m, &two_class}};
    CHECK_THROWS_AS(ensemble_predict_all(bad_classes, data), ConfigError);
}

TEST_CASE("span ensembles sum start and end distributions") {
    const auto m = model::init_model(tiny_config(2), 33);
    const auto head = model::init_task_head(TaskKind::Span, 16, 0, 34);
    numerics::Rng rng(35);
    std::vector<LabeledExample> data;
    for (const auto& c : oracle::random_span_cases(rng, 20, 24))
        data.emplace_back(SpanExample{c.context, c.question, c.answer});
    const auto single = predict(m, head, data, 128);
    const std::vector<EnsembleMember> three(3, EnsembleMember{&m, &head});
    const auto ens = ensemble_predict_all(three, data);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(ens[i].span == single[i].span);
}

TEST_CASE("depth sweep emits one record per depth") {
    const auto base = model::init_model(toy_config(), 36);
    FinetuneConfig fc;
    fc.epochs = 1;
    const std::size_t depths[] = {2, 3};
    const std::uint64_t seeds[] = {1, 2};
    const auto sweep = depth_sweep(base, TaskKind::Classification, 2, classification_data(100, 37),
                                   classification_data(40, 38), depths, fc, seeds);
    REQUIRE(sweep.size() == 2);
    CHECK(sweep[1].depth == 3);
    CHECK(sweep[0].per_seed.size() == 2);
    CHECK(sweep[0].mean.accuracy ==
          doctest::Approx((sweep[0].per_seed[0].accuracy + sweep[0].per_seed[1].accuracy) / 2));
    const nlohmann::json j = sweep[0];
    CHECK(j["depth"] == 2);
}
