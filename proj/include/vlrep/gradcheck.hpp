/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/params.hpp"
#include "vlrep/tape.hpp"

#include <functional>
#include <string>

namespace vlrep {

/// Builds a scalar on the binding's tape from the bound parameters.
using ScalarFn = std::function<Var(ParamBinding&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every trainable element of `params`.
/// Relative error is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
/// Throws EvaluationError if f is non-finite at any probe point.
GradCheckResult grad_check(const ScalarFn& f, ParamSet& params, double eps = 1e-5);

} // namespace vlrep
