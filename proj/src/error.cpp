#include "medfact/error.hpp"

namespace medfact {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::MissingGrounding: return "MissingGrounding";
    case ErrorCode::MissingQuestion: return "MissingQuestion";
    case ErrorCode::EmptyOutput: return "EmptyOutput";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::JudgeUnparseable: return "JudgeUnparseable";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::InputTooLong: return "InputTooLong";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DuplicateTitle: return "DuplicateTitle";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::EmptyTopic: return "EmptyTopic";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::UnpairedItem: return "UnpairedItem";
    case ErrorCode::TooFewItems: return "TooFewItems";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyPayload: return "EmptyPayload";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace medfact
