// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "layerlens/downstream/finetune.hpp"
#include "layerlens/downstream/metrics.hpp"
#include "layerlens/downstream/tasks.hpp"
#include "layerlens/model/forward.hpp"
#include "layerlens/pretrain/grammar.hpp"
#include "layerlens/pretrain/gradient_check.hpp"
#include "layerlens/pretrain/pretrain.hpp"
#include "layerlens/probe/probe.hpp"
#include "layerlens/surgery/deepen.hpp"
#include "layerlens/toolkit/checkpoint.hpp"
#include "layerlens/toolkit/corpus.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace layerlens;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Verdict&)>& body) {
    Verdict v;
    const auto start = Clock::now();
    try {
        body(v);
    } catch (const std::exception& e) {
        v.pass = false;
        v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "):" << v.detail.str()
              << " time=" << std::fixed << std::setprecision(1) << secs << "s" << std::endl;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

bool stacks_equal(const model::HiddenStateStack<float>& a, const model::HiddenStateStack<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!numerics::bitwise_equal(a.layers[i], b.layers[i])) return false;
    return true;
}

std::vector<std::uint8_t> bytes_of(const model::Model& m) { return toolkit::serialize(toolkit::Checkpoint(m)); }

model::ModelConfig toy_config(std::size_t vocab, bool shared) {
    model::ModelConfig c;  // 2 layers, d_model 32, 4 heads, d_ff 128
    c.vocab_size = vocab;
    c.share_layer_weights = shared;
    return c;
}

struct Toy {
    toolkit::PreparedCorpus corpus;
    std::optional<model::Model> model;
    std::optional<model::Model> shared;
    std::vector<pretrain::EvalPoint> history;
};

std::vector<downstream::LabeledExample> toy_classification(const toolkit::Vocabulary& vocab, std::size_t n,
                                                           std::uint64_t seed) {
    return downstream::encode_records(downstream::synthetic_classification(n, seed), vocab);
}

}  // namespace

int main() {
    Toy toy;
    toy.corpus = toolkit::prepare_corpus(pretrain::SyntheticGrammar::generate(4000, 11), 80, 64, 0.125);

    report(1, "gradient correctness", [](Verdict& v) {
        model::ModelConfig c;
        c.vocab_size = 24;
        c.d_model = 16;
        c.n_heads = 2;
        c.d_ff = 32;
        c.n_layers = 1;
        c.max_seq_len = 6;
        const auto t0 = Clock::now();
        const auto f32 = pretrain::check_mlm_gradients(c, 1, pretrain::Precision::Float32);
        const auto f64 = pretrain::check_mlm_gradients(c, 1, pretrain::Precision::Float64);
        const double secs = seconds_since(t0);
        v.detail << " f32 max_rel=" << std::scientific << std::setprecision(2) << f32.report.max_relative_error
                 << " f64 max_rel=" << f64.report.max_relative_error << " params=" << f64.report.n_checked;
        v.require(f32.report.max_relative_error < 1e-3, "32-bit < 1e-3");
        v.require(f64.report.max_relative_error < 1e-6, "64-bit < 1e-6");
        v.require(secs < 60.0, "runtime < 60 s");
    });

    report(2, "surgery identity and splice", [&](Verdict& v) {
        auto c = toy_config(toy.corpus.vocab.size(), false);
        c.n_layers = 4;
        const auto m = model::init_model(c, 2);
        const bool identity = bytes_of(surgery::deepen(m, surgery::plan_deepen(4, 4))) == bytes_of(m);
        const auto plan = surgery::plan_deepen(4, 6);
        const auto deep = surgery::deepen(m, plan);
        const auto batch = model::Batch::from_sequences(std::span(toy.corpus.eval).first(16));
        auto h = model::forward_all_layers(m, batch, false).layers[0];
        for (std::size_t src : {1U, 1U, 2U, 2U, 3U, 4U}) h = model::apply_layer(c, m.layer_at(src - 1), batch, h);
        const bool splice = numerics::bitwise_equal(h, model::forward_all_layers(deep, batch, false).final_layer());
        const bool collapse = bytes_of(surgery::collapse_duplicates(deep, plan)) == bytes_of(m);
        v.detail << " plan=" << nlohmann::json(plan.source_order).dump() << " identity=" << identity
                 << " splice=" << splice << " collapse=" << collapse;
        v.require(identity, "identity checkpoint bytes");
        v.require(plan.source_order == std::vector<std::size_t>{1, 1, 2, 2, 3, 4}, "plan 1,1,2,2,3,4");
        v.require(splice, "forward equals manual composition");
        v.require(collapse, "collapse restores checkpoint bytes");
    });

    report(3, "shared/unshared equivalence", [&](Verdict& v) {
        const auto batch = model::Batch::from_sequences(std::span(toy.corpus.eval).first(16));
        for (std::size_t k : {1U, 4U, 12U}) {
            auto c = toy_config(toy.corpus.vocab.size(), true);
            c.n_layers = k;
            const auto shared = model::init_model(c, 3);
            c.share_layer_weights = false;
            const model::Model unshared(c, shared.embeddings(),
                                        std::vector<model::EncoderLayerWeights<float>>(k, shared.stored_layers()[0]),
                                        shared.mlm_head());
            const bool eq = stacks_equal(model::forward_all_layers(shared, batch, false),
                                         model::forward_all_layers(unshared, batch, false));
            v.detail << " k=" << k << ":" << (eq ? "bit-identical" : "differs");
            v.require(eq, "k=" + std::to_string(k));
        }
    });

    report(4, "toy pre-training", [&](Verdict& v) {
        pretrain::PretrainConfig pc;
        pc.steps = 3000;
        pc.seed = 11;
        const auto t0 = Clock::now();
        auto r = pretrain::pretrain(model::init_model(toy_config(toy.corpus.vocab.size(), false), 11),
                                    toy.corpus.train, toy.corpus.eval, pc, {});
        const double secs = seconds_since(t0);
        const auto& last = r.history.back();
        v.detail << " vocab=" << toy.corpus.vocab.size() << " steps=" << last.step << std::setprecision(4)
                 << " masked_acc=" << last.masked_acc << " recon_acc=" << last.recon_acc
                 << " loss " << r.history.front().loss << "->" << last.loss;
        v.require(last.step <= 3000, "<= 3000 steps");
        v.require(last.masked_acc >= 0.90, "masked accuracy >= 0.90");
        v.require(last.recon_acc >= 0.95, "reconstruction >= 0.95");
        v.require(secs < 600.0, "runtime < 10 min");
        toy.history = r.history;
        toy.model = std::move(r.model);
    });

    report(5, "probing phenomenon", [&](Verdict& v) {
        if (!toy.model) throw std::runtime_error("criterion 4 produced no model");
        const auto r = probe::probe_layers(*toy.model, toy.corpus.eval);
        const double recon = pretrain::reconstruction_accuracy(*toy.model, toy.corpus.eval);
        const auto untrained = model::init_model(toy_config(toy.corpus.vocab.size(), false), 5);
        const auto u = probe::probe_layers(untrained, toy.corpus.eval);
        const double chance_bound = 3.0 / double(toy.corpus.vocab.size());
        v.detail << std::setprecision(4) << " trained=" << nlohmann::json(r.per_layer_accuracy).dump()
                 << " untrained=" << nlohmann::json(u.per_layer_accuracy).dump() << " bound=" << chance_bound;
        v.require(r.final_layer_accuracy() >= 0.95, "final layer >= 0.95");
        v.require(r.per_layer_accuracy[1] >= 0.60, "layer 1 >= 0.60");
        for (double a : u.per_layer_accuracy) v.require(a <= chance_bound, "untrained <= 3/vocab");
        v.require(r.final_layer_accuracy() == recon, "final layer equals reconstruction accuracy exactly");
    });

    report(6, "deepened probing", [&](Verdict& v) {
        pretrain::PretrainConfig pc;
        pc.steps = 1500;
        pc.seed = 6;
        pc.eval_every = 1500;
        auto r = pretrain::pretrain(model::init_model(toy_config(toy.corpus.vocab.size(), true), 6),
                                    toy.corpus.train, toy.corpus.eval, pc, {});
        toy.shared = std::move(r.model);
        const auto base = probe::probe_layers(*toy.shared, toy.corpus.eval);
        const std::size_t depths[] = {2, 4, 8};
        const auto series = probe::probe_deepened_series(*toy.shared, toy.corpus.eval, depths);
        nlohmann::json j = series;
        v.detail << std::setprecision(4) << " baseline=" << base.final_layer_accuracy() << " series=" << j.dump();
        v.require(series.size() == 3, "three points");
        v.require(series[0].final_layer_accuracy == base.final_layer_accuracy(), "depth n equals baseline exactly");
        for (const auto& p : series) {
            v.require(p.final_layer_accuracy >= 0.0 && p.final_layer_accuracy <= 1.0, "valid fraction");
        }
    });

    report(7, "masking statistics", [&](Verdict& v) {
        numerics::Rng rng(7);
        const pretrain::MaskingPolicy policy;
        std::size_t eligible = 0, selected = 0, masked = 0, random = 0, kept = 0;
        const std::size_t vocab = toy.corpus.vocab.size();
        // A random draw can coincide with the original token and then reads as kept.
        while (eligible < 200000) {
            for (const auto& s : toy.corpus.train) {
                const auto m = pretrain::mask_sequence(s, policy, vocab, rng);
                for (std::size_t i = 0; i < s.size(); ++i) {
                    if (!pretrain::maskable(s[i])) continue;
                    ++eligible;
                    if (!m.label_mask[i]) continue;
                    ++selected;
                    if (m.corrupted[i] == kMask) {
                        ++masked;
                    } else if (m.corrupted[i] == s[i]) {
                        ++kept;
                    } else {
                        ++random;
                    }
                }
                if (eligible >= 200000) break;
            }
        }
        const double n_content = double(vocab - kFirstContentId);
        const double sel = double(selected);
        const double rate = sel / double(eligible);
        const double f_mask = masked / sel, f_random = random / sel, f_kept = kept / sel;
        const double coincident = 0.1 / n_content;
        v.detail << std::setprecision(4) << " eligible=" << eligible << " select=" << rate << " mask=" << f_mask
                 << " random=" << f_random << " keep=" << f_kept << " (coincident random draws "
                 << coincident << ")";
        v.require(eligible >= 100000, ">= 1e5 eligible tokens");
        v.require(std::abs(rate - 0.15) <= 0.005, "selection 15% +- 0.5%");
        v.require(std::abs(f_mask - 0.8) <= 0.02, "mask 80% +- 2%");
        v.require(std::abs(f_random - (0.1 - coincident)) <= 0.02, "random 10% +- 2%");
        v.require(std::abs(f_kept - (0.1 + coincident)) <= 0.02, "keep 10% +- 2%");
    });

    report(8, "ensemble invariants", [&](Verdict& v) {
        if (!toy.model) throw std::runtime_error("criterion 4 produced no model");
        const auto& m = *toy.model;
        const auto head = model::init_task_head(model::TaskKind::Classification, 32, 2, 8);
        const auto data = toy_classification(toy.corpus.vocab, 100, 8);
        const auto single = downstream::predict(m, head, data, 128);
        const std::vector<downstream::EnsembleMember> three(3, downstream::EnsembleMember{&m, &head});
        const auto ens = downstream::ensemble_predict_all(three, data);
        std::size_t agree = 0;
        for (std::size_t i = 0; i < data.size(); ++i) agree += ens[i].label == single[i].label;
        std::size_t ones = 0;
        for (const auto& p : single) ones += p.label;

        // Two members whose class probabilities are [0.6, 0.4] and [0.2, 0.8].
        auto fixed_head = [](double p0) {
            auto h = model::TaskHead::zeros(model::TaskKind::Classification, 32, 2);
            h.bias[0] = static_cast<float>(std::log(p0));
            h.bias[1] = static_cast<float>(std::log(1.0 - p0));
            return h;
        };
        const auto h1 = fixed_head(0.6), h2 = fixed_head(0.2);
        const std::vector<downstream::EnsembleMember> pair{{&m, &h1}, {&m, &h2}};
        const auto dist = downstream::ensemble_distributions(pair, std::span(data).first(1), 128)[0].classes;
        const auto arith = downstream::ensemble_predict(pair, data[0]).label;
        const std::vector<std::vector<double>> raw{{0.6, 0.4}, {0.2, 0.8}};
        const auto summed = downstream::sum_probabilities(raw);
        v.detail << " k=3 agreement=" << agree << "/100 (single predicts class 1 on " << ones << ")"
                 << std::setprecision(6) << " pair mean=[" << dist[0] << "," << dist[1] << "] sum=[" << summed[0]
                 << "," << summed[1] << "] -> class " << arith;
        v.require(agree == 100, "k-copy argmax equals single model on all 100");
        v.require(std::abs(summed[0] - 0.8) < 1e-12 && std::abs(summed[1] - 1.2) < 1e-12, "sum [0.8, 1.2]");
        v.require(downstream::argmax(summed) == 1 && arith == 1, "class 1");
        v.require(std::abs(dist[0] - 0.4) < 1e-6 && std::abs(dist[1] - 0.6) < 1e-6, "mean [0.4, 0.6]");
    });

    report(9, "metric oracles", [&](Verdict& v) {
        numerics::Rng rng(9);
        double worst_tok = 0.0, worst_cls = 0.0, worst_em = 0.0, worst_f1 = 0.0;
        model::ModelConfig c;
        c.vocab_size = 24;
        c.d_model = 16;
        c.n_heads = 2;
        c.d_ff = 32;
        c.max_seq_len = 16;
        for (int inst = 0; inst < 50; ++inst) {
            // token_accuracy against a positionwise count
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
            const double want = total ? double(hits) / double(total) : 0.0;
            worst_tok = std::max(worst_tok, std::abs(probe::token_accuracy(p, g, mask).accuracy - want));

            const auto m = model::init_model(c, 900 + inst);
            const auto chead = model::init_task_head(model::TaskKind::Classification, 16, 3, 1900 + inst);
            std::vector<downstream::LabeledExample> cls;
            std::vector<std::pair<TokenSequence, std::size_t>> plain;
            for (int e = 0; e < 8; ++e) {
                auto text = oracle::random_tokens(rng, 1 + rng.uniform_index(8), 24);
                const std::size_t label = rng.uniform_index(3);
                plain.emplace_back(text, label);
                cls.emplace_back(downstream::ClassificationExample{text, std::nullopt, label});
            }
            worst_cls = std::max(worst_cls, std::abs(downstream::evaluate_classification(m, chead, cls) -
                                                     oracle::classification_accuracy(m, chead, plain)));

            const auto shead = model::init_task_head(model::TaskKind::Span, 16, 0, 2900 + inst);
            const auto cases = oracle::random_span_cases(rng, 8, 24);
            std::vector<downstream::LabeledExample> spans;
            for (const auto& sc : cases) spans.emplace_back(downstream::SpanExample{sc.context, sc.question, sc.answer});
            const double threshold = (double(rng.uniform_index(3)) - 1.0) * 0.5;
            const auto got = downstream::evaluate_span(m, shead, spans, threshold);
            const auto [em, f1] = oracle::span_metrics(m, shead, cases, threshold);
            worst_em = std::max(worst_em, std::abs(got.exact_match - em));
            worst_f1 = std::max(worst_f1, std::abs(got.f1 - f1));
        }
        const auto s = downstream::span_score(std::vector<TokenId>{10, 11}, std::vector<TokenId>{12, 11});
        v.detail << std::scientific << std::setprecision(1) << " max|diff| token=" << worst_tok
                 << " cls=" << worst_cls << " em=" << worst_em << " f1=" << worst_f1 << std::fixed
                 << std::setprecision(3) << " [a,cat]/[the,cat] EM=" << s.exact_match << " F1=" << s.f1;
        v.require(worst_tok < 1e-9 && worst_cls < 1e-9 && worst_em < 1e-9 && worst_f1 < 1e-9, "oracles within 1e-9");
        v.require(s.exact_match == 0.0 && std::abs(s.f1 - 0.5) < 1e-12, "F1 = 0.5 case");
    });

    report(10, "end-to-end sweep", [&](Verdict& v) {
        if (!toy.model) throw std::runtime_error("criterion 4 produced no model");
        const auto train = toy_classification(toy.corpus.vocab, 1000, 101);
        const auto dev = toy_classification(toy.corpus.vocab, 200, 102);
        const std::size_t n = toy.model->depth();
        const std::vector<std::size_t> depths{n, n + 1, 2 * n};
        const std::uint64_t seeds[] = {1};
        const downstream::FinetuneConfig config;  // identical defaults for every depth
        const auto t0 = Clock::now();
        const auto sweep = downstream::depth_sweep(*toy.model, model::TaskKind::Classification, 2, train, dev, depths,
                                                   config, seeds);
        const double secs = seconds_since(t0);
        v.detail << std::setprecision(4);
        for (const auto& p : sweep) v.detail << " depth " << p.depth << " acc=" << p.mean.accuracy;
        v.require(sweep.size() == 3, "three depths");
        for (const auto& p : sweep) v.require(p.mean.accuracy >= 0.90, "depth " + std::to_string(p.depth) + " >= 0.90");
        v.require(secs < 900.0, "runtime < 15 min");
    });

    report(11, "persistence and CLI determinism", [&](Verdict& v) {
        if (!toy.model) throw std::runtime_error("criterion 4 produced no model");
        const auto dir = std::filesystem::temp_directory_path() / "layerlens_acceptance";
        std::filesystem::create_directories(dir);
        bool roundtrip = true;
        const toolkit::Checkpoint plain(*toy.model, std::nullopt, toy.corpus.vocab);
        const toolkit::Checkpoint with_head(surgery::deepen_to(*toy.model, 3),
                                            model::init_task_head(model::TaskKind::Span, 32, 0, 11),
                                            toy.corpus.vocab);
        for (const auto* ck : {&plain, &with_head}) {
            toolkit::save_checkpoint(*ck, dir / "a.ckpt");
            toolkit::save_checkpoint(toolkit::load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
            roundtrip = roundtrip && toolkit::read_file(dir / "a.ckpt") == toolkit::read_file(dir / "b.ckpt");
        }
        std::string failed;
        const auto a = pipeline::run(LAYERLENS_BINARY, dir / "run_a", &failed);
        const auto b = a.empty() ? pipeline::Files{} : pipeline::run(LAYERLENS_BINARY, dir / "run_b", &failed);
        std::size_t identical = 0;
        for (const auto& [name, bytes] : a) identical += b.count(name) && b.at(name) == bytes;
        v.detail << " save-load-save identical=" << roundtrip << " pipeline files identical=" << identical << "/"
                 << a.size() << " over " << pipeline::commands().size() << " commands";
        if (!failed.empty()) v.detail << " failed command: " << failed;
        v.require(roundtrip, "checkpoint bytes identical");
        v.require(!a.empty() && a.size() == b.size() && identical == a.size(), "pipeline outputs identical");
        std::filesystem::remove_all(dir);
    });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
