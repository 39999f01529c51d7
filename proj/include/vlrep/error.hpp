/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlrep {

/// Broad failure classes. The CLI maps each class to a process exit code.
enum class ErrorClass { config, data, numerical };

class Error : public std::runtime_error {
  public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
    ErrorClass error_class() const noexcept { return class_; }

  private:
    ErrorClass class_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error(ErrorClass::data, "dimension error: " + w) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorClass::config, "argument error: " + w) {}
};
struct BatchCompositionError : Error {
    explicit BatchCompositionError(const std::string& w) : Error(ErrorClass::data, "batch composition error: " + w) {}
};
struct VocabularyError : Error {
    explicit VocabularyError(const std::string& w) : Error(ErrorClass::data, "vocabulary error: " + w) {}
};
struct DegenerateClipError : Error {
    explicit DegenerateClipError(const std::string& w) : Error(ErrorClass::data, "degenerate clip: " + w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorClass::config, "configuration error: " + w) {}
};
struct ProtocolError : Error {
    explicit ProtocolError(const std::string& w) : Error(ErrorClass::config, "protocol error: " + w) {}
};
struct CollectionError : Error {
    explicit CollectionError(const std::string& w) : Error(ErrorClass::data, "collection error: " + w) {}
};
struct ProbeError : Error {
    explicit ProbeError(const std::string& w) : Error(ErrorClass::data, "probe error: " + w) {}
};
struct EvaluationError : Error {
    explicit EvaluationError(const std::string& w) : Error(ErrorClass::numerical, "evaluation error: " + w) {}
};

struct TrainingError : Error {
    TrainingError(std::int64_t step, const std::string& w)
        : Error(ErrorClass::numerical, "training error at step " + std::to_string(step) + ": " + w), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

  private:
    std::int64_t step_;
};

/// Malformed binary input. `offset` is the byte position where parsing failed.
struct FormatError : Error {
    FormatError(std::uint64_t offset, const std::string& w)
        : Error(ErrorClass::data, "format error at offset " + std::to_string(offset) + ": " + w), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

  private:
    std::uint64_t offset_;
};

struct VersionError : Error {
    VersionError(std::uint32_t found, std::uint32_t expected)
        : Error(ErrorClass::data, "version error: file has version " + std::to_string(found) + ", expected " +
                                      std::to_string(expected)) {}
};

} // namespace vlrep
