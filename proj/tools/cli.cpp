// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>

#include "layerlens/downstream/finetune.hpp"
#include "layerlens/error.hpp"
#include "layerlens/model/forward.hpp"
#include "layerlens/pretrain/grammar.hpp"
#include "layerlens/pretrain/pretrain.hpp"
#include "layerlens/probe/probe.hpp"
#include "layerlens/surgery/deepen.hpp"
#include "layerlens/toolkit/checkpoint.hpp"
#include "layerlens/toolkit/corpus.hpp"

namespace layerlens::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

json config_section(const std::string& config_path, const char* section) {
    if (config_path.empty()) return json::object();
    const auto j = read_json_file(config_path);
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    return j.contains(section) ? j.at(section) : json::object();
}

pretrain::PretrainConfig pretrain_config_from(const json& j) {
    const pretrain::PretrainConfig d;
    pretrain::PretrainConfig c;
    c.steps = j.value("steps", d.steps);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr = j.value("lr", d.lr);
    c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
    c.seed = j.value("seed", d.seed);
    c.eval_every = j.value("eval_every", d.eval_every);
    return c;
}

pretrain::MaskingPolicy masking_from(const json& j) {
    const pretrain::MaskingPolicy d;
    pretrain::MaskingPolicy p;
    p.select_rate = j.value("select_rate", d.select_rate);
    p.mask_frac = j.value("mask_frac", d.mask_frac);
    p.random_frac = j.value("random_frac", d.random_frac);
    p.keep_frac = j.value("keep_frac", d.keep_frac);
    return p;
}

json eval_point_json(const pretrain::EvalPoint& p) {
    return {{"step", p.step}, {"loss", p.loss}, {"masked_acc", p.masked_acc}, {"recon_acc", p.recon_acc}};
}

const toolkit::Vocabulary& require_vocab(const toolkit::Checkpoint& ckpt, const std::string& path) {
    if (!ckpt.vocab) throw DataError("checkpoint '" + path + "' carries no vocabulary");
    return *ckpt.vocab;
}

std::vector<downstream::LabeledExample> load_task(const std::string& path, const toolkit::Vocabulary& vocab) {
    const auto records = downstream::load_jsonl(path);
    if (records.empty()) throw DataError("'" + path + "' holds no examples");
    return downstream::encode_records(records, vocab);
}

std::size_t infer_classes(std::span<const downstream::LabeledExample> data) {
    std::size_t max_label = 1;
    for (const auto& e : data) {
        if (const auto* c = std::get_if<downstream::ClassificationExample>(&e)) max_label = std::max(max_label, c->label);
    }
    return max_label + 1;
}

downstream::FinetuneConfig finetune_config(const std::string& config_path) {
    return config_section(config_path, "finetune").get<downstream::FinetuneConfig>();
}

std::string seed_path(const std::string& out, std::uint64_t seed) {
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + ".seed" + std::to_string(seed) + p.extension().string()))
        .string();
}

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string ckpt;
    std::string input;
    std::string train;
    std::string dev;
    std::string data;
    std::string metrics;
    std::string plan;
    std::string what = "corpus";
    std::size_t n = 4000;
    std::size_t layers = 0;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> epochs;
    std::optional<double> threshold;
    bool decodes = false;
    bool include_special = false;
    std::vector<std::size_t> depths;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> ckpts;
};

int cmd_gen_corpus(const Options& o, std::ostream& out) {
    const std::uint64_t seed = o.seed.value_or(11);
    if (o.what == "corpus") {
        toolkit::write_lines(pretrain::SyntheticGrammar::generate(o.n, seed), o.out);
    } else if (o.what == "classification") {
        downstream::save_jsonl(downstream::synthetic_classification(o.n, seed), o.out);
    } else if (o.what == "span") {
        downstream::save_jsonl(downstream::synthetic_span(o.n, seed), o.out);
    } else {
        throw ConfigError("--what must be corpus, classification or span");
    }
    out << json{{"written", o.out}, {"what", o.what}, {"n", o.n}, {"seed", seed}}.dump() << '\n';
    return 0;
}

int cmd_pretrain(const Options& o, std::ostream& out) {
    json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
    auto mcfg = cfg.value("model", json::object()).get<model::ModelConfig>();
    auto pcfg = pretrain_config_from(cfg.value("pretrain", json::object()));
    const auto policy = masking_from(cfg.value("masking", json::object()));
    if (o.seed) pcfg.seed = *o.seed;
    if (o.steps) pcfg.steps = *o.steps;
    const std::size_t vocab_max = cfg.value("vocab_max_size", mcfg.vocab_size);
    const double eval_fraction = cfg.value("eval_fraction", 0.125);

    const auto lines = toolkit::read_lines(o.input);
    auto corpus = toolkit::prepare_corpus(lines, vocab_max, mcfg.max_seq_len, eval_fraction);
    mcfg.vocab_size = corpus.vocab.size();
    std::ofstream metrics;
    if (!o.metrics.empty()) {
        metrics.open(o.metrics, std::ios::trunc);
        if (!metrics) throw DataError("cannot open '" + o.metrics + "' for writing");
    }
    auto result = pretrain::pretrain(model::init_model<float>(mcfg, pcfg.seed), corpus.train, corpus.eval, pcfg,
                                     policy, [&](const pretrain::EvalPoint& p) {
                                         if (metrics.is_open()) metrics << eval_point_json(p).dump() << '\n';
                                     });
    toolkit::save_checkpoint(toolkit::Checkpoint(std::move(result.model), std::nullopt, std::move(corpus.vocab)),
                             o.out);
    out << eval_point_json(result.history.back()).dump() << '\n';
    return 0;
}

int cmd_probe(const Options& o, std::ostream& out) {
    const auto ckpt = toolkit::load_checkpoint(o.ckpt);
    const auto& vocab = require_vocab(ckpt, o.ckpt);
    const auto seqs = toolkit::encode_lines(vocab, toolkit::read_lines(o.input), ckpt.model.config().max_seq_len);
    probe::ProbeOptions opts;
    opts.include_special = o.include_special;
    opts.keep_decodes = o.decodes;
    const auto report = probe::probe_layers(ckpt.model, seqs, opts, &vocab);
    json j = report;
    j["depth"] = ckpt.model.depth();
    j["shared_layers"] = ckpt.model.config().share_layer_weights;
    if (!o.depths.empty()) j["deepened_series"] = probe::probe_deepened_series(ckpt.model, seqs, o.depths, opts);
    write_json_file(o.out, j);
    out << json{{"final_layer_accuracy", report.final_layer_accuracy()},
                {"per_layer_accuracy", report.per_layer_accuracy}}
               .dump()
        << '\n';
    return 0;
}

int cmd_deepen(const Options& o, std::ostream& out) {
    auto ckpt = toolkit::load_checkpoint(o.ckpt);
    json plan_json;
    std::optional<model::Model> deeper;
    if (ckpt.model.config().share_layer_weights) {
        deeper = surgery::deepen_shared(ckpt.model, o.layers);
        plan_json = {{"target_depth", o.layers}, {"shared_layers", true}};
    } else {
        const auto plan = surgery::plan_deepen(ckpt.model.depth(), o.layers);
        deeper = surgery::deepen(ckpt.model, plan);
        plan_json = plan;
    }
    if (!o.plan.empty()) write_json_file(o.plan, plan_json);
    toolkit::save_checkpoint(toolkit::Checkpoint(std::move(*deeper), ckpt.head, ckpt.vocab), o.out);
    out << json{{"n_layers", o.layers}, {"plan", plan_json}}.dump() << '\n';
    return 0;
}

int cmd_finetune(const Options& o, std::ostream& out) {
    const auto ckpt = toolkit::load_checkpoint(o.ckpt);
    const auto& vocab = require_vocab(ckpt, o.ckpt);
    auto cfg = finetune_config(o.config);
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.threshold) cfg.no_answer_threshold = *o.threshold;
    std::vector<std::uint64_t> seeds = o.seeds;
    if (seeds.empty()) seeds.push_back(o.seed.value_or(cfg.seed));
    const auto train = load_task(o.train, vocab);
    const auto dev = o.dev.empty() ? std::vector<downstream::LabeledExample>{} : load_task(o.dev, vocab);
    const auto kind = downstream::common_kind(train);
    const std::size_t n_classes = kind == model::TaskKind::Classification ? infer_classes(train) : 0;

    json runs = json::array();
    std::vector<downstream::TaskMetrics> finals;
    for (std::uint64_t seed : seeds) {
        auto run_cfg = cfg;
        run_cfg.seed = seed;
        auto head = model::init_task_head(kind, ckpt.model.config().d_model, n_classes, seed);
        auto result = downstream::finetune(ckpt.model, std::move(head), train, dev, run_cfg);
        json run{{"seed", seed}, {"history", result.history}};
        if (!result.history.empty() && !dev.empty()) finals.push_back(result.history.back().dev);
        const std::string path = seeds.size() == 1 ? o.out : seed_path(o.out, seed);
        toolkit::save_checkpoint(toolkit::Checkpoint(std::move(result.model), std::move(result.head), vocab), path);
        run["checkpoint"] = path;
        runs.push_back(std::move(run));
    }
    json summary{{"config", cfg}, {"runs", runs}};
    if (!finals.empty()) summary["mean_dev"] = downstream::mean_metrics(finals);
    if (!o.metrics.empty()) write_json_file(o.metrics, summary);
    out << json{{"runs", runs.size()}, {"mean_dev", summary.value("mean_dev", json(nullptr))}}.dump() << '\n';
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const auto ckpt = toolkit::load_checkpoint(o.ckpt);
    if (!ckpt.head) throw DataError("checkpoint '" + o.ckpt + "' has no task head");
    const auto cfg = finetune_config(o.config);
    const auto data = load_task(o.data, require_vocab(ckpt, o.ckpt));
    const json metrics = downstream::evaluate(ckpt.model, *ckpt.head, data, cfg.max_seq_len,
                                              o.threshold.value_or(cfg.no_answer_threshold));
    if (!o.out.empty()) write_json_file(o.out, metrics);
    out << metrics.dump() << '\n';
    return 0;
}

int cmd_ensemble(const Options& o, std::ostream& out) {
    if (o.ckpts.empty()) throw ConfigError("--ckpts needs at least one checkpoint");
    std::vector<toolkit::Checkpoint> loaded;
    for (const auto& p : o.ckpts) {
        loaded.push_back(toolkit::load_checkpoint(p));
        if (!loaded.back().head) throw DataError("checkpoint '" + p + "' has no task head");
        if (loaded.back().vocab != loaded.front().vocab) {
            throw ConfigError("checkpoint '" + p + "' uses a different vocabulary");
        }
    }
    const auto cfg = finetune_config(o.config);
    const auto data = load_task(o.data, require_vocab(loaded.front(), o.ckpts.front()));
    std::vector<downstream::EnsembleMember> members;
    for (const auto& c : loaded) members.push_back({&c.model, &*c.head});
    const double threshold = o.threshold.value_or(cfg.no_answer_threshold);
    const auto predictions = downstream::ensemble_predict_all(members, data, cfg.max_seq_len, threshold);
    json j{{"members", o.ckpts}, {"ensemble", downstream::score(data, predictions)}};
    json singles = json::array();
    for (const auto& m : members) {
        singles.push_back(downstream::evaluate(*m.model, *m.head, data, cfg.max_seq_len, threshold));
    }
    j["individual"] = singles;
    if (!o.out.empty()) write_json_file(o.out, j);
    out << j["ensemble"].dump() << '\n';
    return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    const auto ckpt = toolkit::load_checkpoint(o.ckpt);
    const auto& vocab = require_vocab(ckpt, o.ckpt);
    auto cfg = finetune_config(o.config);
    if (o.epochs) cfg.epochs = *o.epochs;
    std::vector<std::uint64_t> seeds = o.seeds;
    if (seeds.empty()) seeds.push_back(o.seed.value_or(cfg.seed));
    const auto train = load_task(o.train, vocab);
    const auto dev = load_task(o.dev, vocab);
    const auto kind = downstream::common_kind(train);
    const std::size_t n_classes = kind == model::TaskKind::Classification ? infer_classes(train) : 0;
    std::vector<std::size_t> depths = o.depths;
    if (depths.empty()) depths.push_back(ckpt.model.depth());
    const auto series = downstream::depth_sweep(ckpt.model, kind, n_classes, train, dev, depths, cfg, seeds);
    const json j{{"base_depth", ckpt.model.depth()}, {"config", cfg}, {"series", series}};
    write_json_file(o.out, j);
    json brief = json::array();
    for (const auto& p : series) brief.push_back({{"depth", p.depth}, {"metric", p.mean.headline()}});
    out << brief.dump() << '\n';
    return 0;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"layerlens: probe, deepen, fine-tune and ensemble toy BERT-style encoders"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub, bool out_required) {
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        auto* out_opt = sub->add_option("--out", o.out, "output path");
        if (out_required) out_opt->required();
        sub->add_option("--seed", o.seed, "random seed");
    };

    auto* gen = app.add_subcommand("gen-corpus", "write synthetic corpus or task data");
    common(gen, true);
    gen->add_option("--what", o.what, "corpus, classification or span");
    gen->add_option("--n", o.n, "number of lines or examples");

    auto* pre = app.add_subcommand("pretrain", "masked-LM pre-training");
    common(pre, true);
    pre->add_option("--corpus", o.input, "one sentence per line")->required()->check(CLI::ExistingFile);
    pre->add_option("--metrics", o.metrics, "JSON-lines metrics output");
    pre->add_option("--steps", o.steps, "override pretrain.steps");

    auto* prb = app.add_subcommand("probe", "decode every layer through the MLM head");
    common(prb, true);
    prb->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
    prb->add_option("--input", o.input, "one sentence per line")->required()->check(CLI::ExistingFile);
    prb->add_flag("--decodes", o.decodes, "include per-sentence decodes");
    prb->add_flag("--include-special", o.include_special, "score [CLS] and [SEP]");
    prb->add_option("--deepen-depths", o.depths, "also probe deepened copies")->delimiter(',');

    auto* dp = app.add_subcommand("deepen", "duplicate layers");
    common(dp, true);
    dp->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
    dp->add_option("--layers", o.layers, "target depth")->required();
    dp->add_option("--plan", o.plan, "write the plan as JSON");

    auto* ft = app.add_subcommand("finetune", "fine-tune on a JSON-lines task");
    common(ft, true);
    ft->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
    ft->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
    ft->add_option("--dev", o.dev)->check(CLI::ExistingFile);
    ft->add_option("--metrics", o.metrics, "JSON history and per-seed metrics");
    ft->add_option("--seeds", o.seeds, "one run per seed")->delimiter(',');
    ft->add_option("--epochs", o.epochs);
    ft->add_option("--threshold", o.threshold, "no-answer threshold");

    auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
    common(ev, false);
    ev->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
    ev->add_option("--threshold", o.threshold, "no-answer threshold");

    auto* en = app.add_subcommand("ensemble", "probability-sum ensemble");
    common(en, false);
    en->add_option("--ckpts", o.ckpts)->required()->delimiter(',');
    en->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
    en->add_option("--threshold", o.threshold, "no-answer threshold");

    auto* sw = app.add_subcommand("sweep", "deepen, fine-tune and evaluate per depth");
    common(sw, true);
    sw->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
    sw->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
    sw->add_option("--dev", o.dev)->required()->check(CLI::ExistingFile);
    sw->add_option("--depths", o.depths)->delimiter(',');
    sw->add_option("--seeds", o.seeds)->delimiter(',');
    sw->add_option("--epochs", o.epochs);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        error_line(err, "usage", e.what());
        return 2;
    }

    try {
        if (*gen) return cmd_gen_corpus(o, out);
        if (*pre) return cmd_pretrain(o, out);
        if (*prb) return cmd_probe(o, out);
        if (*dp) return cmd_deepen(o, out);
        if (*ft) return cmd_finetune(o, out);
        if (*ev) return cmd_eval(o, out);
        if (*en) return cmd_ensemble(o, out);
        if (*sw) return cmd_sweep(o, out);
    } catch (const Error& e) {
        error_line(err, e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        error_line(err, "internal", e.what());
        return 1;
    }
    return 1;
}

}  // namespace layerlens::cli
