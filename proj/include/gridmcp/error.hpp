#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridmcp {

enum class ErrorCode {
    InvalidCircuit,
    NotRadial,
    NoConvergence,
    SingularJacobian,
    EmptyPhasorSet,
    UnknownBus,
    UnknownDevice,
    TapOutOfRange,
    DuplicateDeviceId,
    InvalidArgument,
    SyntaxError,
    UnresolvedRedirect,
    UndefinedLineCode,
    PathEscapesWhitelist,
    ParseError,
    NonRadialCircuit,
    DuplicateName,
    UnknownShape,
    BuiltinImmutable,
    ShapeInUse,
    UnknownLoad,
    MalformedRow,
    NonFiniteValue,
    LimitsInverted,
    UnknownFormat,
    NoCircuitLoaded,
    NoQstsResult,
    UnsolvedCircuit,
    NonPositiveReactance,
    NoOvervoltage,
    NothingToMitigate,
    Unresolvable,
    NoUndervoltage,
    NoCandidates,
    UnknownSkill,
    SchemaViolation,
    UnknownTool,
    UnknownResource,
    AdapterUnavailable,
    MalformedModelOutput,
    MaxRoundsExceeded,
    CorruptRecord,
    NotFound,
    EngineBusy,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a stable error code. Every module throws this type;
/// the tool dispatcher turns it into a failure envelope.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace gridmcp
