/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/params.hpp"
#include "vlrep/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>

namespace vlrep {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
  public:
    Var() = default;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    std::uint32_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

/// Reverse-mode gradient recorder. Nodes are appended in evaluation order, so
/// creation order is a topological order and backward() walks it in reverse.
/// Not thread-safe; use one tape per thread.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

    Var constant(Tensor value);
    /// Differentiable input. If `sink` is non-null the gradient is added into it by backward().
    Var leaf(Tensor value, Tensor* sink = nullptr);

    /// Seeds d(out)/d(out) = 1 and propagates to every node that requires a gradient.
    void backward(Var out);

    /// Gradient accumulated for `v` by the last backward(); zeros if none reached it.
    Tensor grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t last_backward_visits() const noexcept { return visits_; }

    // Op-author interface.
    Var push(Tensor value, bool requires_grad, BackwardFn fn);
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
    const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
    /// Gradient buffer of node `id`, allocated as zeros on first use.
    Tensor& grad_buffer(std::uint32_t id);
    const Tensor& upstream(std::uint32_t id) const { return nodes_[id].grad; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        Tensor* sink = nullptr;
    };
    std::deque<Node> nodes_;
    std::size_t visits_ = 0;
};

/// Lazily exposes the tensors of a ParamSet as tape leaves. With a gradient
/// set, each leaf's gradient lands in the matching entry; without one, every
/// parameter is a constant (frozen).
class ParamBinding {
  public:
    ParamBinding(Tape& tape, ParamSet& params, ParamSet* grads = nullptr);

    Var operator()(std::string_view name);
    Tape& tape() { return tape_; }
    ParamSet& params() { return params_; }
    bool frozen() const { return grads_ == nullptr; }

    /// Names excluded from differentiation even when a gradient set is present.
    void freeze_prefix(std::string prefix) { frozen_prefixes_.push_back(std::move(prefix)); }

  private:
    Tape& tape_;
    ParamSet& params_;
    ParamSet* grads_;
    std::vector<std::string> frozen_prefixes_;
    std::unordered_map<std::string, Var> cache_;
};

} // namespace vlrep
