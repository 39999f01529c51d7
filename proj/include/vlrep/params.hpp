/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlrep {

/// Named tensors with stable insertion order. Entries flagged non-trainable
/// (batch-norm running statistics) are stored and serialized but never
/// touched by an optimizer.
class ParamSet {
  public:
    void add(std::string name, Tensor value, bool trainable = true);
    bool contains(std::string_view name) const;

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
    bool trainable(std::size_t i) const { return trainable_[i]; }
    std::size_t index_of(std::string_view name) const;

    /// Same names/shapes/flags, all values zero.
    ParamSet zeros_like() const;
    std::size_t numel() const;

    /// FNV-1a over names, shapes and raw value bytes.
    std::uint64_t hash() const;

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        return a.names_ == b.names_ && a.tensors_ == b.tensors_ && a.trainable_ == b.trainable_;
    }

  private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::vector<bool> trainable_;
    std::unordered_map<std::string, std::size_t> index_;
};

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace vlrep
