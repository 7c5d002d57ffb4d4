#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coder {

enum class ErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  TrailingBytes,
  RowCountMismatch,
  InvalidMetadata,
  InvariantViolation,
  DegenerateFeature,
  DimensionMismatch,
  EmptyInput,
  InvalidArgument,
  Parse,
  Gateway,
  CacheMiss,
  IdenticalClasses,
  PairStoreMiss,
  Manifest,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the toolkit; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by normalize_rows / build_coder when a row norm falls below the
// degenerate threshold.
class DegenerateFeatureError : public Error {
 public:
  DegenerateFeatureError(std::size_t row, const std::string& matrix)
      : Error(ErrorCode::DegenerateFeature,
              matrix + " row " + std::to_string(row) + " has near-zero norm"),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Raised by response parsers; keeps the raw model output for diagnostics.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw)
      : Error(ErrorCode::Parse, message), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace coder
