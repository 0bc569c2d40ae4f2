// SPDX-License-Identifier: Apache-2.0
#include "layerlens/model/task_head.hpp"

#include "layerlens/error.hpp"

namespace layerlens::model {

std::string to_string(TaskKind kind) { return kind == TaskKind::Classification ? "classification" : "span"; }

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "classification") return TaskKind::Classification;
    if (name == "span") return TaskKind::Span;
    throw ConfigError("unknown task kind '" + name + "'");
}

template <typename T>
BasicTaskHead<T> BasicTaskHead<T>::zeros(TaskKind kind, std::size_t d_model, std::size_t n_classes) {
    if (kind == TaskKind::Classification && n_classes < 2) throw ConfigError("classification needs >= 2 classes");
    BasicTaskHead<T> head;
    head.kind = kind;
    head.n_classes = kind == TaskKind::Classification ? n_classes : 0;
    head.weight = BasicTensor<T>({d_model, head.outputs()});
    head.bias = BasicTensor<T>({head.outputs()});
    return head;
}

template <typename T>
BasicTaskHead<T> init_task_head(TaskKind kind, std::size_t d_model, std::size_t n_classes, std::uint64_t seed) {
    auto head = BasicTaskHead<T>::zeros(kind, d_model, n_classes);
    numerics::Rng rng(seed);
    for (auto& v : head.weight.data()) v = static_cast<T>(rng.truncated_normal(0.02));
    return head;
}

template <typename T>
TaskLogits<T> head_forward(const BasicTaskHead<T>& head, const BasicTensor<T>& final_hidden) {
    if (final_hidden.rank() != 3 || final_hidden.dim(2) != head.weight.dim(0)) {
        throw ShapeError("task head expects [batch x seq x " + std::to_string(head.weight.dim(0)) + "], got " +
                         numerics::shape_to_string(final_hidden.dims()));
    }
    const std::size_t b = final_hidden.dim(0);
    const std::size_t s = final_hidden.dim(1);
    const std::size_t d = final_hidden.dim(2);
    TaskLogits<T> out;
    if (head.kind == TaskKind::Classification) {
        BasicTensor<T> pooled({b, d});
        for (std::size_t i = 0; i < b; ++i) {
            std::copy_n(&final_hidden[i * s * d], d, &pooled[i * d]);
        }
        out.classes = numerics::matmul(pooled, head.weight);
        numerics::add_row_bias(out.classes, head.bias);
        return out;
    }
    auto scores = numerics::matmul(final_hidden, head.weight);  // [b x s x 2]
    numerics::add_row_bias(scores, head.bias);
    out.start = BasicTensor<T>({b, s});
    out.end = BasicTensor<T>({b, s});
    for (std::size_t r = 0; r < b * s; ++r) {
        out.start[r] = scores[2 * r];
        out.end[r] = scores[2 * r + 1];
    }
    return out;
}

template <typename T>
BasicTensor<T> head_backward(const BasicTaskHead<T>& head, const BasicTensor<T>& final_hidden,
                             const TaskLogits<T>& dlogits, BasicTaskHead<T>& grads) {
    const std::size_t b = final_hidden.dim(0);
    const std::size_t s = final_hidden.dim(1);
    const std::size_t d = final_hidden.dim(2);
    BasicTensor<T> dhidden(final_hidden.dims());
    if (head.kind == TaskKind::Classification) {
        BasicTensor<T> pooled({b, d});
        for (std::size_t i = 0; i < b; ++i) std::copy_n(&final_hidden[i * s * d], d, &pooled[i * d]);
        numerics::add_inplace(grads.weight, numerics::matmul_transposed_a(pooled, dlogits.classes));
        numerics::add_inplace(grads.bias, numerics::sum_rows(dlogits.classes));
        const auto dpooled = numerics::matmul_transposed_b(dlogits.classes, head.weight);
        for (std::size_t i = 0; i < b; ++i) std::copy_n(&dpooled[i * d], d, &dhidden[i * s * d]);
        return dhidden;
    }
    BasicTensor<T> dscores({b * s, 2});
    for (std::size_t r = 0; r < b * s; ++r) {
        dscores[2 * r] = dlogits.start[r];
        dscores[2 * r + 1] = dlogits.end[r];
    }
    const auto flat = final_hidden.reshaped({b * s, d});
    numerics::add_inplace(grads.weight, numerics::matmul_transposed_a(flat, dscores));
    numerics::add_inplace(grads.bias, numerics::sum_rows(dscores));
    return numerics::matmul_transposed_b(dscores, head.weight).reshaped(final_hidden.dims());
}

template <typename T>
TaskLogits<T> task_forward(const BasicModel<T>& model, const BasicTaskHead<T>& head, const Batch& batch) {
    if (head.weight.dim(0) != model.config().d_model) {
        throw ShapeError("task head width " + std::to_string(head.weight.dim(0)) + " does not match d_model " +
                         std::to_string(model.config().d_model));
    }
    const auto stack = forward_all_layers(model, batch, false);
    return head_forward(head, stack.final_layer());
}

template struct BasicTaskHead<float>;
template struct BasicTaskHead<double>;
template BasicTaskHead<float> init_task_head<float>(TaskKind, std::size_t, std::size_t, std::uint64_t);
template BasicTaskHead<double> init_task_head<double>(TaskKind, std::size_t, std::size_t, std::uint64_t);
template TaskLogits<float> head_forward(const BasicTaskHead<float>&, const BasicTensor<float>&);
template TaskLogits<double> head_forward(const BasicTaskHead<double>&, const BasicTensor<double>&);
template BasicTensor<float> head_backward(const BasicTaskHead<float>&, const BasicTensor<float>&,
                                          const TaskLogits<float>&, BasicTaskHead<float>&);
template BasicTensor<double> head_backward(const BasicTaskHead<double>&, const BasicTensor<double>&,
                                           const TaskLogits<double>&, BasicTaskHead<double>&);
template TaskLogits<float> task_forward(const BasicModel<float>&, const BasicTaskHead<float>&, const Batch&);
template TaskLogits<double> task_forward(const BasicModel<double>&, const BasicTaskHead<double>&, const Batch&);

}  // namespace layerlens::model
