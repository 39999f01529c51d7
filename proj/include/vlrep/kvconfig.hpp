/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Plain-text `key = value` records. Used for config files, resolved run
// records and the config block embedded in checkpoints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vlrep {

class KvConfig {
  public:
    static KvConfig parse(const std::string& text);
    static KvConfig load(const std::filesystem::path& path);

    /// One `key = value` line per entry, keys sorted. parse(serialize()) round-trips.
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    bool has(const std::string& key) const { return values_.contains(key); }
    void erase(const std::string& key) { values_.erase(key); }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
    void set(const std::string& key, const std::vector<std::size_t>& value);
    void set(const std::string& key, const std::vector<std::string>& value);
    void set_doubles(const std::string& key, std::span<const double> value);

    /// Overwrites entries of this record with those of `other`.
    void merge(const KvConfig& other);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
    std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

} // namespace vlrep
