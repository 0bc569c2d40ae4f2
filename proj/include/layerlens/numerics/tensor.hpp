// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "layerlens/error.hpp"

namespace layerlens::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_to_string(const Shape& dims) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i != 0) out << 'x';
        out << dims[i];
    }
    out << ']';
    return out.str();
}

/// Dense row-major tensor. Owns its storage; copies are deep.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape dims) : dims_(std::move(dims)), data_(shape_size(dims_), T{0}) {
        check_dims();
    }

    BasicTensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != shape_size(dims_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match dims " + shape_to_string(dims_));
        }
    }

    static BasicTensor zeros(Shape dims) { return BasicTensor(std::move(dims)); }

    static BasicTensor full(Shape dims, T value) {
        BasicTensor t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Size of the last axis; a rank-0 tensor is treated as one column.
    std::size_t cols() const noexcept { return dims_.empty() ? 1 : dims_.back(); }
    /// Product of every axis except the last.
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const noexcept {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    /// Same data, new dims with the same element count.
    BasicTensor reshaped(Shape dims) const& {
        if (shape_size(dims) != size()) {
            throw ShapeError("cannot reshape " + shape_to_string(dims_) + " to " + shape_to_string(dims));
        }
        return BasicTensor(std::move(dims), data_);
    }
    BasicTensor reshaped(Shape dims) && {
        if (shape_size(dims) != size()) {
            throw ShapeError("cannot reshape " + shape_to_string(dims_) + " to " + shape_to_string(dims));
        }
        return BasicTensor(std::move(dims), std::move(data_));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(dims_, std::move(out));
    }

    bool same_shape(const BasicTensor& other) const noexcept { return dims_ == other.dims_; }

private:
    void check_dims() const {
        for (std::size_t d : dims_) {
            if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_to_string(dims_));
        }
    }

    Shape dims_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Equal dims and equal bit patterns in every element.
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return a.dims() == b.dims() &&
           (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0);
}

}  // namespace layerlens::numerics
