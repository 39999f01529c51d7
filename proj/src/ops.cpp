/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/ops.hpp"

#include "vlrep/error.hpp"
#include "vlrep/kernels.hpp"
#include "vlrep/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace vlrep::ops {
namespace {

Tape& same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw ArgumentError("operands recorded on different tapes");
    return a.tape();
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (t.requires_grad(v.id())) return true;
    return false;
}

void require_rank(Var v, std::size_t rank, const char* op) {
    if (v.value().rank() != rank)
        throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                             shape_str(v.shape()));
}

// Contribution of one group to the softmax-style gradient, shared by the
// grouped and scalar contrastive ops.
double group_value(const double* s, const ContrastiveGroup& g, std::vector<double>& prob) {
    const double pos = s[g.positive];
    double mx = pos;
    for (auto n : g.negatives) mx = std::max(mx, s[n]);
    prob.assign(g.negatives.size() + 1, 0.0);
    double z = std::exp(pos - mx);
    prob[0] = z;
    for (std::size_t k = 0; k < g.negatives.size(); ++k) {
        prob[k + 1] = std::exp(s[g.negatives[k]] - mx);
        z += prob[k + 1];
    }
    for (auto& p : prob) p /= z;
    if (mx == pos) {
        double tail = 0.0;
        for (auto n : g.negatives) tail += std::exp(s[n] - pos);
        return std::log1p(tail);
    }
    return mx + std::log(z) - pos;
}

} // namespace

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    kernels::axpy(1.0, b.value().data(), out.data(), out.size());
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        for (auto id : {ia, ib})
            if (tp.requires_grad(id)) kernels::axpy(1.0, g.data(), tp.grad_buffer(id).data(), g.size());
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    kernels::axpy(-1.0, b.value().data(), out.data(), out.size());
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        if (tp.requires_grad(ia)) kernels::axpy(1.0, g.data(), tp.grad_buffer(ia).data(), g.size());
        if (tp.requires_grad(ib)) kernels::axpy(-1.0, g.data(), tp.grad_buffer(ib).data(), g.size());
    });
}

Var scale(Var a, double c) {
    Tape& t = a.tape();
    Tensor out = a.value();
    for (auto& v : out.values()) v *= c;
    const auto ia = a.id();
    return t.push(std::move(out), t.requires_grad(ia), [ia, c](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        kernels::axpy(c, g.data(), tp.grad_buffer(ia).data(), g.size());
    });
}

Var sum(Var a) {
    Tape& t = a.tape();
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const auto ia = a.id();
    return t.push(Tensor::scalar(s), t.requires_grad(ia), [ia](Tape& tp, std::uint32_t self) {
        const double g = tp.upstream(self)[0];
        for (auto& v : tp.grad_buffer(ia).values()) v += g;
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ArgumentError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
    if (terms.empty() || terms.size() != weights.size()) throw ArgumentError("weighted_sum needs matching, nonempty lists");
    Tape& t = terms[0].tape();
    double s = 0.0;
    bool rg = false;
    std::vector<std::uint32_t> ids;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].value().size() != 1) throw DimensionError("weighted_sum terms must be scalars");
        s += weights[k] * terms[k].value()[0];
        rg = rg || t.requires_grad(terms[k].id());
        ids.push_back(terms[k].id());
    }
    std::vector<double> w(weights.begin(), weights.end());
    return t.push(Tensor::scalar(s), rg, [ids, w](Tape& tp, std::uint32_t self) {
        const double g = tp.upstream(self)[0];
        for (std::size_t k = 0; k < ids.size(); ++k)
            if (tp.requires_grad(ids[k]) && w[k] != 0.0) tp.grad_buffer(ids[k])[0] += w[k] * g;
    });
}

Var stack(std::span<const Var> terms) {
    if (terms.empty()) throw ArgumentError("stack of an empty list");
    Tape& t = terms[0].tape();
    Tensor out({terms.size()});
    bool rg = false;
    std::vector<std::uint32_t> ids;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].value().size() != 1) throw DimensionError("stack terms must be scalars");
        out[k] = terms[k].value()[0];
        rg = rg || t.requires_grad(terms[k].id());
        ids.push_back(terms[k].id());
    }
    return t.push(std::move(out), rg, [ids](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        for (std::size_t k = 0; k < ids.size(); ++k)
            if (tp.requires_grad(ids[k])) tp.grad_buffer(ids[k])[0] += g[k];
    });
}

Var select(Var a, std::size_t index) {
    Tape& t = a.tape();
    if (index >= a.value().size()) throw DimensionError("select index out of range");
    const auto ia = a.id();
    return t.push(Tensor::scalar(a.value()[index]), t.requires_grad(ia), [ia, index](Tape& tp, std::uint32_t self) {
        tp.grad_buffer(ia)[index] += tp.upstream(self)[0];
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = a.tape();
    Tensor out = a.value().reshaped(std::move(shape));
    const auto ia = a.id();
    return t.push(std::move(out), t.requires_grad(ia), [ia](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        kernels::axpy(1.0, g.data(), tp.grad_buffer(ia).data(), g.size());
    });
}

Var relu(Var x) {
    Tape& t = x.tape();
    Tensor out = x.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    const auto ix = x.id();
    return t.push(std::move(out), t.requires_grad(ix), [ix](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        const Tensor& y = tp.value_of(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) gx[i] += g[i];
    });
}

Var affine(Var x, Var w, Var b) {
    Tape& t = same_tape(x, w);
    same_tape(x, b);
    require_rank(x, 2, "affine input");
    require_rank(w, 2, "affine weight");
    const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[1];
    if (w.shape()[0] != in)
        throw DimensionError("affine: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    if (b.shape() != Shape{out_dim}) throw DimensionError("affine: bias " + shape_str(b.shape()));
    Tensor y({n, out_dim});
    for (std::size_t r = 0; r < n; ++r) std::copy(b.value().data(), b.value().data() + out_dim, y.data() + r * out_dim);
    kernels::gemm(n, out_dim, in, x.value().data(), w.value().data(), y.data(), true);
    const auto ix = x.id(), iw = w.id(), ib = b.id();
    return t.push(std::move(y), any_grad(t, {x, w, b}), [=](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        if (tp.requires_grad(ix))
            kernels::gemm_nt(n, in, out_dim, g.data(), tp.value_of(iw).data(), tp.grad_buffer(ix).data(), true);
        if (tp.requires_grad(iw))
            kernels::gemm_tn(in, out_dim, n, tp.value_of(ix).data(), g.data(), tp.grad_buffer(iw).data(), true);
        if (tp.requires_grad(ib)) {
            Tensor& gb = tp.grad_buffer(ib);
            for (std::size_t r = 0; r < n; ++r) kernels::axpy(1.0, g.data() + r * out_dim, gb.data(), out_dim);
        }
    });
}

Var conv2d(Var x, Var w, Var b, std::size_t kernel, std::size_t stride, std::size_t pad) {
    Tape& t = same_tape(x, w);
    same_tape(x, b);
    require_rank(x, 4, "conv2d input");
    require_rank(w, 2, "conv2d weight");
    if (stride == 0 || kernel == 0) throw ArgumentError("conv2d kernel and stride must be positive");
    const std::size_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], cin = x.shape()[3];
    const std::size_t cout = w.shape()[1];
    const std::size_t kdim = kernel * kernel * cin;
    if (w.shape()[0] != kdim)
        throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
    if (b.shape() != Shape{cout}) throw DimensionError("conv2d: bias " + shape_str(b.shape()));
    if (h + 2 * pad < kernel || wd + 2 * pad < kernel) throw DimensionError("conv2d: input smaller than kernel");
    const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
    const std::size_t wo = (wd + 2 * pad - kernel) / stride + 1;
    const std::size_t rows = n * ho * wo;

    auto patches = std::make_shared<std::vector<double>>(rows * kdim, 0.0);
    const double* xv = x.value().data();
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double* prow = patches->data() + ((img * ho + oy) * wo + ox) * kdim;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        const double* src = xv + ((img * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)) * cin;
                        std::copy(src, src + cin, prow + (ky * kernel + kx) * cin);
                    }
                }
            }

    Tensor y({n, ho, wo, cout});
    for (std::size_t r = 0; r < rows; ++r) std::copy(b.value().data(), b.value().data() + cout, y.data() + r * cout);
    kernels::gemm(rows, cout, kdim, patches->data(), w.value().data(), y.data(), true);

    const auto ixv = x.id(), iw = w.id(), ib = b.id();
    return t.push(std::move(y), any_grad(t, {x, w, b}), [=](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        if (tp.requires_grad(iw))
            kernels::gemm_tn(kdim, cout, rows, patches->data(), g.data(), tp.grad_buffer(iw).data(), true);
        if (tp.requires_grad(ib)) {
            Tensor& gb = tp.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, g.data() + r * cout, gb.data(), cout);
        }
        if (tp.requires_grad(ixv)) {
            std::vector<double> gpatch(rows * kdim, 0.0);
            kernels::gemm_nt(rows, kdim, cout, g.data(), tp.value_of(iw).data(), gpatch.data(), false);
            double* gx = tp.grad_buffer(ixv).data();
            for (std::size_t img = 0; img < n; ++img)
                for (std::size_t oy = 0; oy < ho; ++oy)
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const double* prow = gpatch.data() + ((img * ho + oy) * wo + ox) * kdim;
                        for (std::size_t ky = 0; ky < kernel; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kernel; ++kx) {
                                const std::ptrdiff_t ixx =
                                    static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                if (ixx < 0 || ixx >= static_cast<std::ptrdiff_t>(wd)) continue;
                                double* dst = gx + ((img * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ixx)) * cin;
                                kernels::axpy(1.0, prow + (ky * kernel + kx) * cin, dst, cin);
                            }
                        }
                    }
        }
    });
}

Var avg_pool_grid(Var x, std::size_t grid) {
    Tape& t = x.tape();
    require_rank(x, 4, "avg_pool_grid input");
    const std::size_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
    if (grid == 0 || h % grid != 0 || w % grid != 0)
        throw DimensionError("avg_pool_grid: grid " + std::to_string(grid) + " does not tile " + shape_str(x.shape()));
    const std::size_t ch = h / grid, cw = w / grid;
    const double inv = 1.0 / static_cast<double>(ch * cw);
    Tensor y({n, grid, grid, c});
    const double* xv = x.value().data();
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx)
                kernels::axpy(inv, xv + ((img * h + yy) * w + xx) * c,
                              y.data() + ((img * grid + yy / ch) * grid + xx / cw) * c, c);
    const auto ix = x.id();
    return t.push(std::move(y), t.requires_grad(ix), [=](Tape& tp, std::uint32_t self) {
        const double* g = tp.upstream(self).data();
        double* gx = tp.grad_buffer(ix).data();
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t yy = 0; yy < h; ++yy)
                for (std::size_t xx = 0; xx < w; ++xx)
                    kernels::axpy(inv, g + ((img * grid + yy / ch) * grid + xx / cw) * c,
                                  gx + ((img * h + yy) * w + xx) * c, c);
    });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormMode mode, const BatchNormState& state) {
    Tape& t = same_tape(x, gamma);
    same_tape(x, beta);
    if (x.value().rank() < 2) throw DimensionError("batch_norm expects rank >= 2, got " + shape_str(x.shape()));
    const std::size_t c = x.shape().back();
    const std::size_t m = x.value().size() / c;
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
        throw DimensionError("batch_norm: affine parameters must have shape (" + std::to_string(c) + ")");
    const double* xv = x.value().data();
    const double* gv = gamma.value().data();
    const double* bv = beta.value().data();

    std::vector<double> mu(c, 0.0), var(c, 0.0);
    if (mode == BatchNormMode::train) {
        if (m == 0) throw ArgumentError("batch_norm on an empty batch");
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) mu[j] += xv[r * c + j];
        for (auto& v : mu) v /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                const double d = xv[r * c + j] - mu[j];
                var[j] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(m);
        if (state.running_mean && state.running_var) {
            const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
            for (std::size_t j = 0; j < c; ++j) {
                (*state.running_mean)[j] = (1.0 - state.momentum) * (*state.running_mean)[j] + state.momentum * mu[j];
                (*state.running_var)[j] =
                    (1.0 - state.momentum) * (*state.running_var)[j] + state.momentum * var[j] * unbias;
            }
        }
    } else {
        if (!state.running_mean || !state.running_var) throw ArgumentError("inference batch_norm needs running statistics");
        for (std::size_t j = 0; j < c; ++j) {
            mu[j] = (*state.running_mean)[j];
            var[j] = (*state.running_var)[j];
        }
    }
    auto inv_std = std::make_shared<std::vector<double>>(c);
    for (std::size_t j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + state.eps);
    auto xhat = std::make_shared<Tensor>(x.shape());
    Tensor y(x.shape());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xv[r * c + j] - mu[j]) * (*inv_std)[j];
            (*xhat)[r * c + j] = h;
            y[r * c + j] = gv[j] * h + bv[j];
        }
    const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    const bool training = mode == BatchNormMode::train;
    return t.push(std::move(y), any_grad(t, {x, gamma, beta}), [=](Tape& tp, std::uint32_t self) {
        const double* g = tp.upstream(self).data();
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                sum_g[j] += g[r * c + j];
                sum_gx[j] += g[r * c + j] * (*xhat)[r * c + j];
            }
        if (tp.requires_grad(ig)) {
            Tensor& gg = tp.grad_buffer(ig);
            for (std::size_t j = 0; j < c; ++j) gg[j] += sum_gx[j];
        }
        if (tp.requires_grad(ib)) {
            Tensor& gb = tp.grad_buffer(ib);
            for (std::size_t j = 0; j < c; ++j) gb[j] += sum_g[j];
        }
        if (tp.requires_grad(ix)) {
            const double* gam = tp.value_of(ig).data();
            double* gx = tp.grad_buffer(ix).data();
            const double md = static_cast<double>(m);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t j = 0; j < c; ++j) {
                    const double k = gam[j] * (*inv_std)[j];
                    if (training)
                        gx[r * c + j] += k * (g[r * c + j] - sum_g[j] / md - (*xhat)[r * c + j] * sum_gx[j] / md);
                    else
                        gx[r * c + j] += k * g[r * c + j];
                }
        }
    });
}

Var gather_concat(std::span<const std::pair<Var, std::vector<std::uint32_t>>> parts) {
    if (parts.empty()) throw ArgumentError("gather_concat of no parts");
    Tape& t = parts[0].first.tape();
    const std::size_t m = parts[0].second.size();
    std::size_t width = 0;
    std::vector<std::size_t> offsets, widths;
    bool rg = false;
    for (const auto& [v, idx] : parts) {
        same_tape(parts[0].first, v);
        require_rank(v, 2, "gather_concat part");
        if (idx.size() != m) throw DimensionError("gather_concat: index lists differ in length");
        for (auto i : idx)
            if (i >= v.shape()[0]) throw DimensionError("gather_concat: row index out of range");
        offsets.push_back(width);
        widths.push_back(v.shape()[1]);
        width += v.shape()[1];
        rg = rg || t.requires_grad(v.id());
    }
    Tensor out({m, width});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& src = parts[k].first.value();
        for (std::size_t r = 0; r < m; ++r) {
            const auto row = src.row(parts[k].second[r]);
            std::copy(row.begin(), row.end(), out.data() + r * width + offsets[k]);
        }
    }
    std::vector<std::pair<std::uint32_t, std::vector<std::uint32_t>>> saved;
    for (const auto& [v, idx] : parts) saved.emplace_back(v.id(), idx);
    return t.push(std::move(out), rg, [=](Tape& tp, std::uint32_t self) {
        const double* g = tp.upstream(self).data();
        for (std::size_t k = 0; k < saved.size(); ++k) {
            if (!tp.requires_grad(saved[k].first)) continue;
            double* gs = tp.grad_buffer(saved[k].first).data();
            for (std::size_t r = 0; r < m; ++r)
                kernels::axpy(1.0, g + r * width + offsets[k], gs + saved[k].second[r] * widths[k], widths[k]);
        }
    });
}

Var pair_neg_l2(Var z, std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
    Tape& t = z.tape();
    require_rank(z, 2, "pair_neg_l2 input");
    const std::size_t rows = z.shape()[0], e = z.shape()[1];
    Tensor out({pairs.size()});
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (pairs[p].first >= rows || pairs[p].second >= rows) throw DimensionError("pair_neg_l2: row out of range");
        out[p] = -std::sqrt(kernels::sq_dist(z.value().row(pairs[p].first).data(), z.value().row(pairs[p].second).data(), e));
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> saved(pairs.begin(), pairs.end());
    const auto iz = z.id();
    return t.push(std::move(out), t.requires_grad(iz), [=](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        const Tensor& s = tp.value_of(self);
        const double* zv = tp.value_of(iz).data();
        double* gz = tp.grad_buffer(iz).data();
        for (std::size_t p = 0; p < saved.size(); ++p) {
            const double dist = -s[p];
            if (dist == 0.0 || g[p] == 0.0) continue;
            const double* a = zv + saved[p].first * e;
            const double* b = zv + saved[p].second * e;
            const double k = -g[p] / dist;
            for (std::size_t d = 0; d < e; ++d) {
                const double diff = a[d] - b[d];
                gz[saved[p].first * e + d] += k * diff;
                gz[saved[p].second * e + d] -= k * diff;
            }
        }
    });
}

Var neg_l2_sim(Var a, Var b) {
    Tape& t = same_tape(a, b);
    if (a.value().rank() != 1 || a.shape() != b.shape())
        throw DimensionError("neg_l2_sim needs identical 1-D shapes, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const std::size_t e = a.shape()[0];
    const double dist = std::sqrt(kernels::sq_dist(a.value().data(), b.value().data(), e));
    const auto ia = a.id(), ib = b.id();
    return t.push(Tensor::scalar(-dist), any_grad(t, {a, b}), [=](Tape& tp, std::uint32_t self) {
        const double g = tp.upstream(self)[0];
        if (dist == 0.0 || g == 0.0) return;
        const double* av = tp.value_of(ia).data();
        const double* bv = tp.value_of(ib).data();
        const double k = -g / dist;
        for (std::size_t d = 0; d < e; ++d) {
            const double diff = av[d] - bv[d];
            if (tp.requires_grad(ia)) tp.grad_buffer(ia)[d] += k * diff;
            if (tp.requires_grad(ib)) tp.grad_buffer(ib)[d] -= k * diff;
        }
    });
}

Var grouped_contrastive_nll(Var scores, std::span<const ContrastiveGroup> groups) {
    Tape& t = scores.tape();
    require_rank(scores, 1, "grouped_contrastive_nll scores");
    const std::size_t m = scores.shape()[0];
    Tensor out({groups.size()});
    std::vector<double> prob;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        if (g.negatives.empty()) throw ArgumentError("contrastive group without negatives");
        if (g.positive >= m) throw DimensionError("contrastive group index out of range");
        for (auto n : g.negatives)
            if (n >= m) throw DimensionError("contrastive group index out of range");
        out[gi] = group_value(scores.value().data(), g, prob);
    }
    std::vector<ContrastiveGroup> saved(groups.begin(), groups.end());
    const auto is = scores.id();
    return t.push(std::move(out), t.requires_grad(is), [=](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        const double* s = tp.value_of(is).data();
        double* gs = tp.grad_buffer(is).data();
        std::vector<double> p;
        for (std::size_t gi = 0; gi < saved.size(); ++gi) {
            if (g[gi] == 0.0) continue;
            group_value(s, saved[gi], p);
            gs[saved[gi].positive] += g[gi] * (p[0] - 1.0);
            for (std::size_t k = 0; k < saved[gi].negatives.size(); ++k) gs[saved[gi].negatives[k]] += g[gi] * p[k + 1];
        }
    });
}

Var contrastive_nll(Var positive, std::span<const Var> negatives) {
    if (negatives.empty()) throw ArgumentError("contrastive_nll needs at least one negative score");
    std::vector<Var> all{positive};
    all.insert(all.end(), negatives.begin(), negatives.end());
    ContrastiveGroup g{0, {}};
    for (std::uint32_t k = 1; k <= negatives.size(); ++k) g.negatives.push_back(k);
    return select(grouped_contrastive_nll(stack(all), std::span<const ContrastiveGroup>(&g, 1)), 0);
}

Var row_norms(Var z, NormKind kind) {
    Tape& t = z.tape();
    if (z.value().rank() < 1) throw DimensionError("row_norms on a scalar");
    const std::size_t rows = z.shape()[0];
    const std::size_t d = rows == 0 ? 0 : z.value().size() / rows;
    Tensor out({rows});
    const double* zv = z.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        switch (kind) {
        case NormKind::l1: out[r] = kernels::abs_sum(zv + r * d, d); break;
        case NormKind::l2: out[r] = std::sqrt(kernels::dot(zv + r * d, zv + r * d, d)); break;
        case NormKind::l2_squared: out[r] = kernels::dot(zv + r * d, zv + r * d, d); break;
        }
    }
    const auto iz = z.id();
    return t.push(std::move(out), t.requires_grad(iz), [=](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.upstream(self);
        const Tensor& nv = tp.value_of(self);
        const double* zz = tp.value_of(iz).data();
        double* gz = tp.grad_buffer(iz).data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                const double v = zz[r * d + j];
                switch (kind) {
                case NormKind::l1: gz[r * d + j] += g[r] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)); break;
                case NormKind::l2:
                    if (nv[r] > 0.0) gz[r * d + j] += g[r] * v / nv[r];
                    break;
                case NormKind::l2_squared: gz[r * d + j] += g[r] * 2.0 * v; break;
                }
            }
        }
    });
}

Var l1_norm(Var v) { return select(row_norms(reshape(v, {1, v.value().size()}), NormKind::l1), 0); }
Var l2_norm(Var v) { return select(row_norms(reshape(v, {1, v.value().size()}), NormKind::l2), 0); }

Var embed_mean(Var table, std::span<const std::vector<std::uint32_t>> tokens) {
    Tape& t = table.tape();
    require_rank(table, 2, "embed_mean table");
    const std::size_t vocab = table.shape()[0], l = table.shape()[1];
    Tensor out({tokens.size(), l});
    for (std::size_t s = 0; s < tokens.size(); ++s) {
        if (tokens[s].empty()) throw ArgumentError("embed_mean: empty token list");
        const double inv = 1.0 / static_cast<double>(tokens[s].size());
        for (auto tok : tokens[s]) {
            if (tok >= vocab) throw VocabularyError("token id " + std::to_string(tok) + " outside vocabulary");
            kernels::axpy(inv, table.value().data() + tok * l, out.data() + s * l, l);
        }
    }
    std::vector<std::vector<std::uint32_t>> saved(tokens.begin(), tokens.end());
    const auto it = table.id();
    return t.push(std::move(out), t.requires_grad(it), [=](Tape& tp, std::uint32_t self) {
        const double* g = tp.upstream(self).data();
        double* gt = tp.grad_buffer(it).data();
        for (std::size_t s = 0; s < saved.size(); ++s) {
            const double inv = 1.0 / static_cast<double>(saved[s].size());
            for (auto tok : saved[s]) kernels::axpy(inv, g + s * l, gt + tok * l, l);
        }
    });
}

Var mse_rows(Var pred, const Tensor& target) {
    Tape& t = pred.tape();
    require_same_shape(pred.value(), target, "mse_rows");
    if (pred.value().rank() < 1 || pred.shape()[0] == 0) throw DimensionError("mse_rows needs a nonempty batch");
    const double n = static_cast<double>(pred.shape()[0]);
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = pred.value()[i] - target[i];
        s += d * d;
    }
    const auto ip = pred.id();
    auto tgt = std::make_shared<Tensor>(target);
    return t.push(Tensor::scalar(s / n), t.requires_grad(ip), [=](Tape& tp, std::uint32_t self) {
        const double g = tp.upstream(self)[0];
        const Tensor& p = tp.value_of(ip);
        Tensor& gp = tp.grad_buffer(ip);
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - (*tgt)[i]) / n;
    });
}

} // namespace vlrep::ops
