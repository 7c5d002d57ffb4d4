#include "coder/error.hpp"

#include <iostream>
#include <mutex>

#include "coder/log.hpp"

namespace coder {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::TrailingBytes: return "trailing-bytes";
    case ErrorCode::RowCountMismatch: return "row-count-mismatch";
    case ErrorCode::InvalidMetadata: return "invalid-metadata";
    case ErrorCode::InvariantViolation: return "invariant-violation";
    case ErrorCode::DegenerateFeature: return "degenerate-feature";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Gateway: return "gateway";
    case ErrorCode::CacheMiss: return "cache-miss";
    case ErrorCode::IdenticalClasses: return "identical-classes";
    case ErrorCode::PairStoreMiss: return "pair-store-miss";
    case ErrorCode::Manifest: return "manifest";
  }
  return "unknown";
}

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink next) {
  std::lock_guard lock(sink_mutex());
  auto prev = std::move(sink());
  sink() = std::move(next);
  return prev;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace coder
