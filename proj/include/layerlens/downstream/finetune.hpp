// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerlens/downstream/metrics.hpp"
#include "layerlens/downstream/tasks.hpp"
#include "layerlens/model/task_head.hpp"

namespace layerlens::downstream {

struct FinetuneConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double warmup_fraction = 0.1;
    std::uint64_t seed = 1;
    /// Inputs are truncated to min(max_seq_len, the model's max_seq_len).
    std::size_t max_seq_len = 128;
    double no_answer_threshold = 0.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const FinetuneConfig& c);
void from_json(const nlohmann::json& j, FinetuneConfig& c);

/// Accuracy for classification; EM and F1 for span tasks.
struct TaskMetrics {
    model::TaskKind kind = model::TaskKind::Classification;
    double accuracy = 0.0;
    double exact_match = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;

    /// Accuracy or F1.
    double headline() const { return kind == model::TaskKind::Classification ? accuracy : f1; }
};

void to_json(nlohmann::json& j, const TaskMetrics& m);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean over the epoch's batches
    TaskMetrics dev;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct FinetuneResult {
    model::Model model;
    model::TaskHead head;
    std::vector<EpochRecord> history;
};

/// Trains every encoder, MLM-head and task-head weight with Adam under
/// linear warmup/decay. Deterministic in config.seed. Dev metrics are
/// recorded after each epoch when `dev` is nonempty.
FinetuneResult finetune(model::Model model, model::TaskHead head, std::span<const LabeledExample> train,
                        std::span<const LabeledExample> dev, const FinetuneConfig& config);

/// Per-example softmax distributions in double: class probabilities, or
/// start and end distributions over the framed positions.
struct TaskDistribution {
    std::vector<double> classes;
    std::vector<double> start;
    std::vector<double> end;
};

std::vector<TaskDistribution> predict_distributions(const model::Model& model, const model::TaskHead& head,
                                                    std::span<const LabeledExample> examples,
                                                    std::size_t max_seq_len);

struct Prediction {
    std::size_t label = 0;
    std::optional<SpanIndices> span;
};

/// Argmax class, or the decode_span result on log-probabilities.
Prediction decide(const TaskDistribution& dist, const LabeledExample& example, std::size_t max_seq_len,
                  double no_answer_threshold);

std::vector<Prediction> predict(const model::Model& model, const model::TaskHead& head,
                                std::span<const LabeledExample> examples, std::size_t max_seq_len,
                                double no_answer_threshold = 0.0);

TaskMetrics score(std::span<const LabeledExample> examples, std::span<const Prediction> predictions);

double evaluate_classification(const model::Model& model, const model::TaskHead& head,
                               std::span<const LabeledExample> data, std::size_t max_seq_len = 128);

SpanMetrics evaluate_span(const model::Model& model, const model::TaskHead& head,
                          std::span<const LabeledExample> data, double no_answer_threshold,
                          std::size_t max_seq_len = 128);

TaskMetrics evaluate(const model::Model& model, const model::TaskHead& head, std::span<const LabeledExample> data,
                     std::size_t max_seq_len = 128, double no_answer_threshold = 0.0);

struct EnsembleMember {
    const model::Model* model = nullptr;
    const model::TaskHead* head = nullptr;
};

/// Sums every member's probabilities and divides by the member count, then
/// decides as a single model would. Throws ConfigError when members differ
/// in task kind, class count or vocabulary size.
Prediction ensemble_predict(std::span<const EnsembleMember> members, const LabeledExample& example,
                            std::size_t max_seq_len = 128, double no_answer_threshold = 0.0);

std::vector<Prediction> ensemble_predict_all(std::span<const EnsembleMember> members,
                                             std::span<const LabeledExample> examples, std::size_t max_seq_len = 128,
                                             double no_answer_threshold = 0.0);

/// The averaged distributions ensemble_predict_all decides on.
std::vector<TaskDistribution> ensemble_distributions(std::span<const EnsembleMember> members,
                                                     std::span<const LabeledExample> examples,
                                                     std::size_t max_seq_len);

struct SweepPoint {
    std::size_t depth = 0;
    TaskMetrics mean;
    std::vector<std::uint64_t> seeds;
    std::vector<TaskMetrics> per_seed;
};

void to_json(nlohmann::json& j, const SweepPoint& p);

/// For every depth and seed: deepen `base`, attach a fresh head seeded with
/// the seed, fine-tune with `config` (only the seed changes) and evaluate on
/// `dev`. `mean` averages the per-seed metrics.
std::vector<SweepPoint> depth_sweep(const model::Model& base, model::TaskKind kind, std::size_t n_classes,
                                    std::span<const LabeledExample> train, std::span<const LabeledExample> dev,
                                    std::span<const std::size_t> depths, const FinetuneConfig& config,
                                    std::span<const std::uint64_t> seeds);

TaskMetrics mean_metrics(std::span<const TaskMetrics> runs);

}  // namespace layerlens::downstream
