// SPDX-License-Identifier: Apache-2.0
#include "layerlens/downstream/finetune.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "layerlens/error.hpp"
#include "layerlens/numerics/adam.hpp"
#include "layerlens/surgery/deepen.hpp"

namespace layerlens::downstream {

namespace {

using model::TaskKind;
using numerics::Tensor;

constexpr std::size_t kEvalBatch = 64;

std::size_t effective_len(const model::Model& model, std::size_t max_seq_len) {
    return std::min(max_seq_len, model.config().max_seq_len);
}

std::vector<FramedExample> frame_all(std::span<const LabeledExample> examples, std::size_t max_seq_len) {
    std::vector<FramedExample> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(frame(e, max_seq_len));
    return out;
}

model::Batch batch_of(std::span<const FramedExample> framed, std::span<const std::size_t> order) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(order.size());
    for (auto i : order) seqs.push_back(framed[i].ids);
    return model::Batch::from_sequences(seqs);
}

void check_head(const model::TaskHead& head, TaskKind kind, std::span<const LabeledExample> data) {
    if (head.kind != kind) {
        throw ConfigError("task head is " + model::to_string(head.kind) + " but the data is " +
                          model::to_string(kind));
    }
    if (kind != TaskKind::Classification) return;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto label = std::get<ClassificationExample>(data[i]).label;
        if (label >= head.n_classes) {
            throw DataError("example " + std::to_string(i) + " has label " + std::to_string(label) + " but the head has " +
                            std::to_string(head.n_classes) + " classes");
        }
    }
}

/// Padded span positions get -inf so they never carry probability.
void mask_padding(Tensor& logits, const model::Batch& batch) {
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        if (batch.ids[r] == kPad) logits[r] = -std::numeric_limits<float>::infinity();
    }
}

/// Mean task loss of one batch; accumulates gradients into the two grad
/// holders.
float train_batch(const model::Model& model, const model::TaskHead& head, std::span<const FramedExample> framed,
                  std::span<const std::size_t> order, numerics::Rng& rng, model::Model& grads,
                  model::TaskHead& head_grads) {
    const auto batch = batch_of(framed, order);
    const auto trace = model::encode(model, batch, true, &rng);
    const auto& hidden = trace.stack.final_layer();
    auto logits = model::head_forward(head, hidden);
    model::TaskLogits<float> dlogits;
    float loss = 0.0F;
    const std::size_t b = order.size();
    if (head.kind == TaskKind::Classification) {
        std::vector<std::int32_t> targets(b);
        for (std::size_t i = 0; i < b; ++i) targets[i] = static_cast<std::int32_t>(framed[order[i]].label);
        const std::vector<std::uint8_t> all(b, 1);
        auto ce = numerics::softmax_cross_entropy(logits.classes, targets, all);
        loss = ce.loss;
        dlogits.classes = std::move(ce.dlogits);
    } else {
        mask_padding(logits.start, batch);
        mask_padding(logits.end, batch);
        std::vector<std::int32_t> starts(b);
        std::vector<std::int32_t> ends(b);
        for (std::size_t i = 0; i < b; ++i) {
            starts[i] = static_cast<std::int32_t>(framed[order[i]].start_target);
            ends[i] = static_cast<std::int32_t>(framed[order[i]].end_target);
        }
        const std::vector<std::uint8_t> all(b, 1);
        auto ce_start = numerics::softmax_cross_entropy(logits.start, starts, all);
        auto ce_end = numerics::softmax_cross_entropy(logits.end, ends, all);
        loss = 0.5F * (ce_start.loss + ce_end.loss);
        for (auto& v : ce_start.dlogits.data()) v *= 0.5F;
        for (auto& v : ce_end.dlogits.data()) v *= 0.5F;
        dlogits.start = std::move(ce_start.dlogits);
        dlogits.end = std::move(ce_end.dlogits);
    }
    const auto dhidden = model::head_backward(head, hidden, dlogits, head_grads);
    model::encoder_backward(model, trace, dhidden, grads);
    return loss;
}

std::vector<double> softmax_row(std::span<const float> logits) {
    double max = -std::numeric_limits<double>::infinity();
    for (float v : logits) max = std::max(max, static_cast<double>(v));
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(static_cast<double>(logits[i]) - max);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

void check_members(std::span<const EnsembleMember> members) {
    if (members.empty()) throw ConfigError("an ensemble needs at least one model");
    const auto& first = members.front();
    for (const auto& m : members) {
        if (m.model == nullptr || m.head == nullptr) throw ConfigError("ensemble member is missing a model or head");
        if (m.head->kind != first.head->kind || m.head->n_classes != first.head->n_classes) {
            throw ConfigError("ensemble members differ in task variant");
        }
        if (m.model->config().vocab_size != first.model->config().vocab_size) {
            throw ConfigError("ensemble members differ in vocabulary size");
        }
    }
}

}  // namespace

void FinetuneConfig::validate() const {
    if (batch_size == 0) throw ConfigError("fine-tune batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("fine-tune lr must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
    if (max_seq_len < 3) throw ConfigError("fine-tune max_seq_len must be at least 3");
}

void to_json(nlohmann::json& j, const FinetuneConfig& c) {
    j = {{"epochs", c.epochs},       {"batch_size", c.batch_size},
         {"lr", c.lr},               {"warmup_fraction", c.warmup_fraction},
         {"seed", c.seed},           {"max_seq_len", c.max_seq_len},
         {"no_answer_threshold", c.no_answer_threshold}};
}

void from_json(const nlohmann::json& j, FinetuneConfig& c) {
    const FinetuneConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr = j.value("lr", d.lr);
    c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
    c.seed = j.value("seed", d.seed);
    c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    c.no_answer_threshold = j.value("no_answer_threshold", d.no_answer_threshold);
}

void to_json(nlohmann::json& j, const TaskMetrics& m) {
    j = {{"task", model::to_string(m.kind)}, {"n", m.n}};
    if (m.kind == TaskKind::Classification) {
        j["accuracy"] = m.accuracy;
    } else {
        j["exact_match"] = m.exact_match;
        j["f1"] = m.f1;
    }
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
    j = {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"dev", r.dev}};
}

void to_json(nlohmann::json& j, const SweepPoint& p) {
    j = {{"depth", p.depth}, {"mean", p.mean}, {"seeds", p.seeds}, {"per_seed", p.per_seed}};
}

FinetuneResult finetune(model::Model model, model::TaskHead head, std::span<const LabeledExample> train,
                        std::span<const LabeledExample> dev, const FinetuneConfig& config) {
    config.validate();
    const auto kind = common_kind(train);
    check_head(head, kind, train);
    if (!dev.empty()) {
        if (common_kind(dev) != kind) throw DataError("train and dev sets differ in task kind");
        check_head(head, kind, dev);
    }
    const std::size_t max_len = effective_len(model, config.max_seq_len);
    const auto framed = frame_all(train, max_len);

    FinetuneResult result{std::move(model), std::move(head), {}};
    if (config.epochs == 0) return result;

    const std::size_t per_epoch = (framed.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = per_epoch * config.epochs;
    numerics::Rng rng(config.seed);
    auto grads = model::Model::zeros(result.model.config());
    auto head_grads = model::TaskHead::zeros(result.head.kind, result.model.config().d_model, result.head.n_classes);
    auto params = result.model.parameters();
    params.push_back(&result.head.weight);
    params.push_back(&result.head.bias);
    std::vector<const Tensor*> grad_ptrs;
    for (auto* g : grads.parameters()) grad_ptrs.push_back(g);
    grad_ptrs.push_back(&head_grads.weight);
    grad_ptrs.push_back(&head_grads.bias);
    numerics::AdamState adam;

    std::vector<std::size_t> order(framed.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            for (auto* g : grads.parameters()) g->fill(0.0F);
            head_grads.weight.fill(0.0F);
            head_grads.bias.fill(0.0F);
            const float loss = train_batch(result.model, result.head, framed,
                                           std::span<const std::size_t>(order).subspan(start, n), rng, grads,
                                           head_grads);
            if (!std::isfinite(loss)) {
                throw NumericError("fine-tuning loss became non-finite at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step + 1));
            }
            loss_sum += loss;
            adam.lr = config.lr * numerics::linear_warmup_decay(step, total_steps, config.warmup_fraction);
            numerics::adam_step<float>(params, grad_ptrs, adam);
            ++step;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(per_epoch);
        if (!dev.empty()) {
            record.dev = evaluate(result.model, result.head, dev, config.max_seq_len, config.no_answer_threshold);
        }
        result.history.push_back(record);
    }
    return result;
}

std::vector<TaskDistribution> predict_distributions(const model::Model& model, const model::TaskHead& head,
                                                    std::span<const LabeledExample> examples,
                                                    std::size_t max_seq_len) {
    std::vector<TaskDistribution> out;
    if (examples.empty()) return out;
    check_head(head, common_kind(examples), examples);
    const auto framed = frame_all(examples, effective_len(model, max_seq_len));
    out.reserve(examples.size());
    std::vector<std::size_t> order;
    for (std::size_t start = 0; start < framed.size(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, framed.size() - start);
        order.resize(n);
        std::iota(order.begin(), order.end(), start);
        const auto batch = batch_of(framed, order);
        const auto logits = model::task_forward(model, head, batch);
        for (std::size_t b = 0; b < n; ++b) {
            TaskDistribution d;
            if (head.kind == TaskKind::Classification) {
                d.classes = softmax_row(logits.classes.row(b));
            } else {
                const std::size_t len = framed[start + b].ids.size();
                d.start = softmax_row(logits.start.row(b).subspan(0, len));
                d.end = softmax_row(logits.end.row(b).subspan(0, len));
            }
            out.push_back(std::move(d));
        }
    }
    return out;
}

Prediction decide(const TaskDistribution& dist, const LabeledExample& example, std::size_t max_seq_len,
                  double no_answer_threshold) {
    Prediction p;
    if (kind_of(example) == TaskKind::Classification) {
        p.label = argmax(dist.classes);
        return p;
    }
    const auto framed = frame(example, max_seq_len);
    std::vector<double> log_start(dist.start.size());
    std::vector<double> log_end(dist.end.size());
    for (std::size_t i = 0; i < log_start.size(); ++i) log_start[i] = std::log(dist.start[i]);
    for (std::size_t i = 0; i < log_end.size(); ++i) log_end[i] = std::log(dist.end[i]);
    p.span = decode_span(log_start, log_end, framed.context_offset, framed.context_len, no_answer_threshold);
    return p;
}

std::vector<Prediction> predict(const model::Model& model, const model::TaskHead& head,
                                std::span<const LabeledExample> examples, std::size_t max_seq_len,
                                double no_answer_threshold) {
    const auto dists = predict_distributions(model, head, examples, max_seq_len);
    const std::size_t len = effective_len(model, max_seq_len);
    std::vector<Prediction> out;
    out.reserve(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) {
        out.push_back(decide(dists[i], examples[i], len, no_answer_threshold));
    }
    return out;
}

TaskMetrics score(std::span<const LabeledExample> examples, std::span<const Prediction> predictions) {
    if (examples.size() != predictions.size()) throw ShapeError("score: predictions and examples differ in count");
    TaskMetrics m;
    m.n = examples.size();
    if (examples.empty()) return m;
    m.kind = common_kind(examples);
    if (m.kind == TaskKind::Classification) {
        std::vector<std::size_t> predicted;
        std::vector<std::size_t> gold;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            predicted.push_back(predictions[i].label);
            gold.push_back(std::get<ClassificationExample>(examples[i]).label);
        }
        m.accuracy = classification_accuracy(predicted, gold);
        return m;
    }
    std::vector<SpanExample> spans;
    std::vector<std::optional<SpanIndices>> predicted;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        spans.push_back(std::get<SpanExample>(examples[i]));
        predicted.push_back(predictions[i].span);
    }
    const auto s = span_metrics(spans, predicted);
    m.exact_match = s.exact_match;
    m.f1 = s.f1;
    return m;
}

double evaluate_classification(const model::Model& model, const model::TaskHead& head,
                               std::span<const LabeledExample> data, std::size_t max_seq_len) {
    if (!data.empty() && common_kind(data) != TaskKind::Classification) {
        throw DataError("evaluate_classification needs classification data");
    }
    return score(data, predict(model, head, data, max_seq_len)).accuracy;
}

SpanMetrics evaluate_span(const model::Model& model, const model::TaskHead& head,
                          std::span<const LabeledExample> data, double no_answer_threshold,
                          std::size_t max_seq_len) {
    if (!data.empty() && common_kind(data) != TaskKind::Span) throw DataError("evaluate_span needs span data");
    const auto m = score(data, predict(model, head, data, max_seq_len, no_answer_threshold));
    return {m.exact_match, m.f1, m.n};
}

TaskMetrics evaluate(const model::Model& model, const model::TaskHead& head, std::span<const LabeledExample> data,
                     std::size_t max_seq_len, double no_answer_threshold) {
    auto m = score(data, predict(model, head, data, max_seq_len, no_answer_threshold));
    m.kind = head.kind;
    return m;
}

std::vector<TaskDistribution> ensemble_distributions(std::span<const EnsembleMember> members,
                                                     std::span<const LabeledExample> examples,
                                                     std::size_t max_seq_len) {
    check_members(members);
    std::vector<std::vector<TaskDistribution>> per_member;
    for (const auto& m : members) per_member.push_back(predict_distributions(*m.model, *m.head, examples, max_seq_len));
    const double k = static_cast<double>(members.size());
    std::vector<TaskDistribution> out(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto combine = [&](auto field) {
            std::vector<std::vector<double>> parts;
            for (const auto& dists : per_member) parts.push_back(dists[i].*field);
            auto sum = sum_probabilities(parts);
            for (auto& v : sum) v /= k;
            return sum;
        };
        if (kind_of(examples[i]) == TaskKind::Classification) {
            out[i].classes = combine(&TaskDistribution::classes);
        } else {
            out[i].start = combine(&TaskDistribution::start);
            out[i].end = combine(&TaskDistribution::end);
        }
    }
    return out;
}

std::vector<Prediction> ensemble_predict_all(std::span<const EnsembleMember> members,
                                             std::span<const LabeledExample> examples, std::size_t max_seq_len,
                                             double no_answer_threshold) {
    const auto dists = ensemble_distributions(members, examples, max_seq_len);
    std::size_t len = max_seq_len;
    for (const auto& m : members) len = effective_len(*m.model, len);
    std::vector<Prediction> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        out.push_back(decide(dists[i], examples[i], len, no_answer_threshold));
    }
    return out;
}

Prediction ensemble_predict(std::span<const EnsembleMember> members, const LabeledExample& example,
                            std::size_t max_seq_len, double no_answer_threshold) {
    return ensemble_predict_all(members, std::span<const LabeledExample>(&example, 1), max_seq_len,
                                no_answer_threshold)
        .front();
}

TaskMetrics mean_metrics(std::span<const TaskMetrics> runs) {
    TaskMetrics m;
    if (runs.empty()) return m;
    m.kind = runs.front().kind;
    m.n = runs.front().n;
    for (const auto& r : runs) {
        m.accuracy += r.accuracy;
        m.exact_match += r.exact_match;
        m.f1 += r.f1;
    }
    const double k = static_cast<double>(runs.size());
    m.accuracy /= k;
    m.exact_match /= k;
    m.f1 /= k;
    return m;
}

std::vector<SweepPoint> depth_sweep(const model::Model& base, model::TaskKind kind, std::size_t n_classes,
                                    std::span<const LabeledExample> train, std::span<const LabeledExample> dev,
                                    std::span<const std::size_t> depths, const FinetuneConfig& config,
                                    std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw ConfigError("depth_sweep needs at least one seed");
    if (dev.empty()) throw DataError("depth_sweep needs a dev set");
    std::vector<SweepPoint> out;
    for (std::size_t depth : depths) {
        SweepPoint point;
        point.depth = depth;
        for (std::uint64_t seed : seeds) {
            auto deeper = surgery::deepen_to(base, depth);
            auto head = model::init_task_head(kind, base.config().d_model, n_classes, seed);
            FinetuneConfig run = config;
            run.seed = seed;
            auto tuned = finetune(std::move(deeper), std::move(head), train, {}, run);
            point.seeds.push_back(seed);
            point.per_seed.push_back(
                evaluate(tuned.model, tuned.head, dev, config.max_seq_len, config.no_answer_threshold));
        }
        point.mean = mean_metrics(point.per_seed);
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace layerlens::downstream
