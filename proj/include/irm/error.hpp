#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace irm {

enum class ErrorCode {
    MalformedRow,
    BadTimestamp,
    UnknownActivity,
    DuplicateEvent,
    EmptySession,
    SchemaMismatch,
    ShapeMismatch,
    UncalibratedModel,
    OutOfRange,
    InsufficientData,
    DuplicateAction,
    PolicyConfigError,
    StorageFull,
    CorruptSegment,
    InvalidRange,
    IllegalTransition,
    MissingFeedback,
    AlertNotFound,
    GeneratorTimeout,
    LabelMismatch,
    Precondition,
    ConfigError,
    NotFound,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure the engine reports carries a typed code so callers (pipeline,
// HTTP layer, CLI) can route it without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace irm
