// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "layerlens/error.hpp"
#include "layerlens/numerics/tensor.hpp"

namespace layerlens::numerics {

struct GradCheckOptions {
    double step = 1e-5;
    /// Lower bound on the relative-error denominator. Elements whose analytic
    /// and numeric gradients are both below this are compared absolutely.
    double abs_floor = 1e-3;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_tensor = 0;
    std::size_t worst_element = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t n_checked = 0;
};

/// Relative error used by grad_check: |a - n| / max(|a|, |n|, floor).
inline double gradient_relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic[i]` against central differences (f(w+h) - f(w-h)) / 2h
/// of `loss_fn`, element by element over every tensor in `params`. Each
/// parameter is restored bit-exactly after probing.
template <typename T>
GradCheckReport grad_check(const std::function<T()>& loss_fn, std::span<BasicTensor<T>* const> params,
                           std::span<const BasicTensor<T>* const> analytic, GradCheckOptions options = {}) {
    if (!(options.step > 0.0)) throw RangeError("grad_check: step must be positive");
    if (params.size() != analytic.size()) throw ShapeError("grad_check: params and gradients differ in count");
    GradCheckReport report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = *params[t];
        const auto& g = *analytic[t];
        if (!p.same_shape(g)) {
            throw ShapeError("grad_check: gradient " + shape_to_string(g.dims()) + " does not match parameter " +
                             shape_to_string(p.dims()));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const T saved = p[i];
            // Divide by the perturbation actually representable in T.
            p[i] = static_cast<T>(static_cast<double>(saved) + options.step);
            const double w_plus = static_cast<double>(p[i]);
            const double plus = static_cast<double>(loss_fn());
            p[i] = static_cast<T>(static_cast<double>(saved) - options.step);
            const double w_minus = static_cast<double>(p[i]);
            const double minus = static_cast<double>(loss_fn());
            p[i] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw NumericError("grad_check: non-finite loss while perturbing tensor " + std::to_string(t) +
                                   " element " + std::to_string(i));
            }
            const double numeric = (plus - minus) / (w_plus - w_minus);
            const double a = static_cast<double>(g[i]);
            const double err = gradient_relative_error(a, numeric, options.abs_floor);
            ++report.n_checked;
            if (err > report.max_relative_error || report.n_checked == 1) {
                report.max_relative_error = err;
                report.worst_tensor = t;
                report.worst_element = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace layerlens::numerics
