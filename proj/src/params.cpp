/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/params.hpp"

#include "vlrep/error.hpp"

namespace vlrep {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void ParamSet::add(std::string name, Tensor value, bool trainable) {
    if (index_.contains(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    trainable_.push_back(trainable);
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamSet::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

Tensor& ParamSet::at(std::string_view name) { return tensors_[index_of(name)]; }
const Tensor& ParamSet::at(std::string_view name) const { return tensors_[index_of(name)]; }

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()), trainable_[i]);
    return out;
}

std::size_t ParamSet::numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

std::uint64_t ParamSet::hash() const {
    std::uint64_t h = fnv1a(nullptr, 0);
    for (std::size_t i = 0; i < names_.size(); ++i) {
        h = fnv1a(names_[i].data(), names_[i].size(), h);
        for (auto d : tensors_[i].shape()) {
            const std::uint64_t d64 = d;
            h = fnv1a(&d64, sizeof d64, h);
        }
        h = fnv1a(tensors_[i].data(), tensors_[i].size() * sizeof(double), h);
    }
    return h;
}

} // namespace vlrep
