#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace soda {

enum class ErrorCode {
  MissingField,
  CtrOutOfRange,
  SchemaMismatch,
  UnresolvableImage,
  PreprocessFailure,
  ParseError,
  EmptyInput,
  InvalidArgument,
  IdOutOfRange,
  DimensionMismatch,
  ShapeMismatch,
  EmptyDataset,
  DivergenceError,
  VersionMismatch,
  CorruptArtifact,
  TooFewValues,
  LengthMismatch,
  EmptyTestSet,
  EmptyTrainSet,
  EmptySpace,
  AllTrialsFailed,
  EmptyTrace,
  DimensionError,
  IoError,
  MissingPlaceholder,
  ExtractionFailed,
  AnalysisFailed,
  UnknownAdReference,
  UnknownBrand,
  ImageBackendError,
  BackendError,
  PreconditionFailed,
  NotFound,
  Conflict,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::CtrOutOfRange: return "CtrOutOfRange";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnresolvableImage: return "UnresolvableImage";
    case ErrorCode::PreprocessFailure: return "PreprocessFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptArtifact: return "CorruptArtifact";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::EmptySpace: return "EmptySpace";
    case ErrorCode::AllTrialsFailed: return "AllTrialsFailed";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::ExtractionFailed: return "ExtractionFailed";
    case ErrorCode::AnalysisFailed: return "AnalysisFailed";
    case ErrorCode::UnknownAdReference: return "UnknownAdReference";
    case ErrorCode::UnknownBrand: return "UnknownBrand";
    case ErrorCode::ImageBackendError: return "ImageBackendError";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
  }
  return "Unknown";
}

/// Base exception for every domain failure. The code is machine-readable,
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Violation {
  ErrorCode code;
  std::string field;
  std::string detail;
};

/// Raised by record validation; carries every violated field, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(violations.empty() ? ErrorCode::InvalidArgument : violations.front().code,
              describe(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

  bool has(ErrorCode code) const {
    for (const auto& v : violations_) {
      if (v.code == code) return true;
    }
    return false;
  }

 private:
  static std::string describe(const std::vector<Violation>& vs) {
    std::string out;
    for (const auto& v : vs) {
      if (!out.empty()) out += "; ";
      out += std::string(to_string(v.code)) + "(" + v.field + ")";
      if (!v.detail.empty()) out += ": " + v.detail;
    }
    return out;
  }

  std::vector<Violation> violations_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace soda
