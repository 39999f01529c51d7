/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/gradcheck.hpp"

#include "vlrep/error.hpp"

#include <algorithm>
#include <cmath>

namespace vlrep {
namespace {

double evaluate(const ScalarFn& f, ParamSet& params) {
    Tape tape;
    ParamBinding bind(tape, params);
    const Var out = f(bind);
    if (out.value().size() != 1) throw DimensionError("grad_check needs a scalar function");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw EvaluationError("function is not finite at a probe point");
    return v;
}

} // namespace

GradCheckResult grad_check(const ScalarFn& f, ParamSet& params, double eps) {
    if (!(eps > 0.0)) throw ArgumentError("grad_check eps must be positive");
    ParamSet grads = params.zeros_like();
    {
        Tape tape;
        ParamBinding bind(tape, params, &grads);
        const Var out = f(bind);
        if (out.value().size() != 1) throw DimensionError("grad_check needs a scalar function");
        if (!std::isfinite(out.value()[0])) throw EvaluationError("function is not finite at the base point");
        tape.backward(out);
    }
    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params.trainable(p)) continue;
        Tensor& t = params.tensor(p);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + eps;
            const double fp = evaluate(f, params);
            t[i] = orig - eps;
            const double fm = evaluate(f, params);
            t[i] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ad = grads.tensor(p)[i];
            const double rel = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-8});
            ++res.checked;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = params.name(p);
                res.worst_index = i;
                res.analytic = ad;
                res.numeric = fd;
            }
        }
    }
    return res;
}

} // namespace vlrep
