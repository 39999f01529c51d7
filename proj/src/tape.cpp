/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/tape.hpp"

#include "vlrep/error.hpp"
#include "vlrep/kernels.hpp"

namespace vlrep {

const Tensor& Var::value() const { return tape_->value_of(id_); }

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Tensor value, Tensor* sink) {
    Var v = push(std::move(value), true, nullptr);
    nodes_[v.id()].sink = sink;
    return v;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var out) {
    if (out.value().size() != 1) throw DimensionError("backward() needs a scalar output, got " + shape_str(out.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    visits_ = 0;
    if (!nodes_[out.id()].requires_grad) return;
    grad_buffer(out.id())[0] = 1.0;
    for (std::int64_t id = out.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.empty()) continue;
        ++visits_;
        if (n.backward) n.backward(*this, static_cast<std::uint32_t>(id));
        if (n.sink) {
            require_same_shape(*n.sink, n.grad, "gradient sink");
            kernels::axpy(1.0, n.grad.data(), n.sink->data(), n.grad.size());
        }
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
    return n.grad;
}

ParamBinding::ParamBinding(Tape& tape, ParamSet& params, ParamSet* grads)
    : tape_(tape), params_(params), grads_(grads) {}

Var ParamBinding::operator()(std::string_view name) {
    std::string key(name);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const std::size_t idx = params_.index_of(name);
    bool differentiable = grads_ != nullptr && params_.trainable(idx);
    for (const auto& p : frozen_prefixes_)
        if (key.starts_with(p)) differentiable = false;
    Var v = differentiable ? tape_.leaf(params_.tensor(idx), &grads_->tensor(grads_->index_of(name)))
                           : tape_.constant(params_.tensor(idx));
    cache_.emplace(std::move(key), v);
    return v;
}

} // namespace vlrep
