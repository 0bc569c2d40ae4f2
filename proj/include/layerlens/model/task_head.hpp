// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "layerlens/model/forward.hpp"

namespace layerlens::model {

enum class TaskKind { Classification, Span };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// Linear head on top of the final hidden layer.
/// Classification: weight [d_model x n_classes] applied at position 0.
/// Span: weight [d_model x 2] applied at every position; column 0 scores
/// starts, column 1 ends.
template <typename T>
struct BasicTaskHead {
    TaskKind kind = TaskKind::Classification;
    std::size_t n_classes = 2;
    BasicTensor<T> weight;
    BasicTensor<T> bias;

    std::size_t outputs() const { return kind == TaskKind::Classification ? n_classes : 2; }

    static BasicTaskHead zeros(TaskKind kind, std::size_t d_model, std::size_t n_classes);
};

using TaskHead = BasicTaskHead<float>;

template <typename T = float>
BasicTaskHead<T> init_task_head(TaskKind kind, std::size_t d_model, std::size_t n_classes, std::uint64_t seed);

template <typename T>
struct TaskLogits {
    BasicTensor<T> classes;  // [batch x n_classes], classification only
    BasicTensor<T> start;    // [batch x seq], span only
    BasicTensor<T> end;      // [batch x seq], span only
};

template <typename T>
TaskLogits<T> head_forward(const BasicTaskHead<T>& head, const BasicTensor<T>& final_hidden);

/// Accumulates head gradients and returns dL/d(final hidden), shaped like it.
template <typename T>
BasicTensor<T> head_backward(const BasicTaskHead<T>& head, const BasicTensor<T>& final_hidden,
                             const TaskLogits<T>& dlogits, BasicTaskHead<T>& grads);

/// Eval-mode encoder followed by the task head.
template <typename T>
TaskLogits<T> task_forward(const BasicModel<T>& model, const BasicTaskHead<T>& head, const Batch& batch);

}  // namespace layerlens::model
