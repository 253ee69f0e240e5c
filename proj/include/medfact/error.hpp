#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace medfact {

enum class ErrorCode {
  EmptyField,
  MissingGrounding,
  MissingQuestion,
  EmptyOutput,
  DuplicateId,
  EmptyGeneration,
  JudgeUnparseable,
  BackendFailure,
  InputTooLong,
  EmptyDocument,
  EmptyCorpus,
  DuplicateTitle,
  EmptyQuery,
  EmptyTopic,
  InvalidArgument,
  DatasetNotFound,
  MalformedRecord,
  MissingField,
  UnpairedItem,
  TooFewItems,
  TooFewPairs,
  NoOverlap,
  EmptyPayload,
  UnknownFormat,
  UnsupportedVersion,
  ConfigError,
  IoError,
};

// Stable machine-readable name, e.g. "MissingGrounding".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace medfact
