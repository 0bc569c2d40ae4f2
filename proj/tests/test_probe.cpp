// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "layerlens/error.hpp"
#include "layerlens/model/forward.hpp"
#include "layerlens/pretrain/grammar.hpp"
#include "layerlens/pretrain/pretrain.hpp"
#include "layerlens/probe/probe.hpp"
#include "layerlens/toolkit/checkpoint.hpp"
#include "layerlens/toolkit/corpus.hpp"
#include "support.hpp"

using namespace layerlens;
using probe::ProbeOptions;
using testing::random_sequences;
using testing::tiny_config;

namespace {

struct Trained {
    toolkit::PreparedCorpus corpus;
    model::Model model;
};

// The toy model pre-trained on the grammar corpus, built once.
const Trained& trained() {
    static const Trained t = [] {
        auto corpus = toolkit::prepare_corpus(pretrain::SyntheticGrammar::generate(2000, 3), 80, 64, 0.125);
        model::ModelConfig cfg;
        cfg.vocab_size = corpus.vocab.size();
        pretrain::PretrainConfig pc;
        pc.steps = 1500;
        pc.eval_every = 1500;
        auto r = pretrain::pretrain(model::init_model(cfg, 4), corpus.train, {}, pc, {});
        return Trained{std::move(corpus), std::move(r.model)};
    }();
    return t;
}

}  // namespace

TEST_CASE("token accuracy examples") {
    const TokenSequence gold{5, 6, 7};
    const std::vector<std::uint8_t> all{1, 1, 1};
    CHECK(probe::token_accuracy(gold, gold, all).accuracy == 1.0);
    const auto a = probe::token_accuracy(TokenSequence{5, 6, 8}, gold, all);
    CHECK(a.correct == 2);
    CHECK(a.scored == 3);
    CHECK(a.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(probe::token_accuracy(TokenSequence{5, 6}, gold, all), ShapeError);
    const auto empty = probe::token_accuracy(gold, gold, std::vector<std::uint8_t>(3, 0));
    CHECK(empty.scored == 0);
    CHECK(empty.accuracy == 0.0);
}

TEST_CASE("token accuracy matches a positionwise count") {
    numerics::Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(20);
        TokenSequence p(n), g(n);
        std::vector<std::uint8_t> mask(n);
        std::size_t hits = 0, total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = static_cast<TokenId>(rng.uniform_index(8));
            p[i] = rng.uniform() < 0.5 ? g[i] : static_cast<TokenId>(rng.uniform_index(8));
            mask[i] = rng.uniform() < 0.8;
            if (mask[i]) {
                ++total;
                hits += p[i] == g[i];
            }
        }
        const auto got = probe::token_accuracy(p, g, mask);
        CHECK(got.correct == hits);
        CHECK(got.scored == total);
        CHECK(got.accuracy == (total ? double(hits) / double(total) : 0.0));
    }
}

TEST_CASE("score mask excludes padding and optionally specials") {
    const TokenSequence gold{kCls, 5, kSep, 6, kSep, kPad};
    CHECK(probe::score_mask(gold) == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 0});
    CHECK(probe::score_mask(gold, true) == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0});
}

TEST_CASE("report shape and bounds") {
    const auto m = model::init_model(tiny_config(3), 2);
    const auto seqs = random_sequences(30, 24, 1, 9, 3);
    const auto r = probe::probe_layers(m, seqs);
    CHECK(r.per_layer_accuracy.size() == 4);
    CHECK(r.per_layer_pooled_accuracy.size() == 4);
    CHECK(r.n_sequences == 30);
    for (double a : r.per_layer_accuracy) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
    const nlohmann::json j = r;
    CHECK(j["per_layer_accuracy"].size() == 4);
    CHECK(j.contains("layer_0"));
}

TEST_CASE("probe averages per sentence against a direct recount") {
    const auto m = model::init_model(tiny_config(2), 4);
    const auto seqs = random_sequences(7, 24, 1, 9, 5);
    ProbeOptions opts;
    opts.batch_size = 3;
    const auto r = probe::probe_layers(m, seqs, opts);
    const auto stack = model::forward_all_layers(m, model::Batch::from_sequences(seqs), false);
    const std::size_t len = stack.layers[0].dim(1);
    for (std::size_t l = 0; l < stack.size(); ++l) {
        const auto pred = model::argmax_tokens(model::mlm_decode(m, stack.layers[l]));
        double sum = 0.0;
        std::size_t hits_all = 0, total_all = 0;
        for (std::size_t b = 0; b < seqs.size(); ++b) {
            std::size_t hits = 0, total = 0;
            for (std::size_t s = 1; s + 1 < seqs[b].size(); ++s) {
                ++total;
                hits += pred[b * len + s] == seqs[b][s];
            }
            sum += double(hits) / double(total);
            hits_all += hits;
            total_all += total;
        }
        CHECK(r.per_layer_accuracy[l] == doctest::Approx(sum / seqs.size()).epsilon(1e-12));
        CHECK(r.per_layer_pooled_accuracy[l] == doctest::Approx(double(hits_all) / total_all).epsilon(1e-12));
    }
    CHECK(r.final_layer_accuracy() == pretrain::reconstruction_accuracy(m, seqs));
}

TEST_CASE("sentences with nothing to score are skipped") {
    const auto m = model::init_model(tiny_config(1), 6);
    const std::vector<TokenSequence> seqs{{kCls, kSep}, {kCls, 7, kSep}};
    const auto r = probe::probe_layers(m, seqs);
    CHECK(r.n_sequences_skipped == 1);
    CHECK(r.n_tokens_scored == 1);  // per layer
    const std::vector<TokenSequence> only_empty{{kCls, kSep}};
    const auto e = probe::probe_layers(m, only_empty);
    CHECK(e.n_tokens_scored == 0);
    for (double a : e.per_layer_accuracy) CHECK(a == 0.0);
}

TEST_CASE("probing does not mutate the model") {
    const auto m = model::init_model(tiny_config(2), 7);
    const auto before = toolkit::checkpoint_digest(toolkit::Checkpoint(m));
    ProbeOptions opts;
    opts.include_special = true;
    (void)probe::probe_layers(m, random_sequences(5, 24, 2, 6, 8), opts);
    CHECK(toolkit::checkpoint_digest(toolkit::Checkpoint(m)) == before);
}

TEST_CASE("untrained model is near chance at every layer") {
    auto cfg = tiny_config(3);
    cfg.vocab_size = 80;
    cfg.max_seq_len = 32;
    const auto m = model::init_model(cfg, 9);
    const auto r = probe::probe_layers(m, random_sequences(200, 80, 10, 30, 10));
    for (double a : r.per_layer_accuracy) CHECK(a <= 3.0 / 80);
}

TEST_CASE("trained model reconstructs its domain") {
    const auto& t = trained();
    const auto r = probe::probe_layers(t.model, t.corpus.eval);
    CHECK(r.final_layer_accuracy() == pretrain::reconstruction_accuracy(t.model, t.corpus.eval));
    CHECK(r.final_layer_accuracy() >= 0.95);
    const auto rows = probe::decode_sentence(t.model, t.corpus.vocab, t.corpus.eval[0]);
    REQUIRE(rows.size() == 3);
    CHECK(rows.back() == t.corpus.vocab.decode(t.corpus.eval[0]));
}

TEST_CASE("decodes are kept per sentence and per layer") {
    const auto& t = trained();
    ProbeOptions opts;
    opts.keep_decodes = true;
    const auto seqs = std::span(t.corpus.eval).first(4);
    const auto r = probe::probe_layers(t.model, seqs, opts, &t.corpus.vocab);
    REQUIRE(r.decodes.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.decodes[i].size() == 3);
        CHECK(r.decodes[i] == probe::decode_sentence(t.model, t.corpus.vocab, seqs[i]));
    }
    const auto with = probe::decode_sentence(t.model, t.corpus.vocab, seqs[0], true);
    CHECK(with[0].size() == seqs[0].size());
}

TEST_CASE("deepened series") {
    const auto shared = model::init_model(tiny_config(2, true), 11);
    const auto seqs = random_sequences(20, 24, 3, 9, 12);
    const auto base = probe::probe_layers(shared, seqs);
    const std::size_t depths[] = {2, 4, 9};
    const auto series = probe::probe_deepened_series(shared, seqs, depths);
    REQUIRE(series.size() == 3);
    CHECK(series[0].final_layer_accuracy == base.final_layer_accuracy());
    for (const auto& p : series) {
        CHECK(p.final_layer_accuracy >= 0.0);
        CHECK(p.final_layer_accuracy <= 1.0);
    }
    CHECK(series[2].depth == 9);

    const auto untied = model::init_model(tiny_config(2), 13);
    const std::size_t ok[] = {2, 3, 4};
    CHECK(probe::probe_deepened_series(untied, seqs, ok)[0].final_layer_accuracy ==
          probe::probe_layers(untied, seqs).final_layer_accuracy());
    const std::size_t bad[] = {5};
    CHECK_THROWS_AS(probe::probe_deepened_series(untied, seqs, bad), RangeError);
}
