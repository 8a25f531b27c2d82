#include "gridmcp/error.hpp"

namespace gridmcp {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidCircuit: return "InvalidCircuit";
    case ErrorCode::NotRadial: return "NotRadial";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::EmptyPhasorSet: return "EmptyPhasorSet";
    case ErrorCode::UnknownBus: return "UnknownBus";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::TapOutOfRange: return "TapOutOfRange";
    case ErrorCode::DuplicateDeviceId: return "DuplicateDeviceId";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnresolvedRedirect: return "UnresolvedRedirect";
    case ErrorCode::UndefinedLineCode: return "UndefinedLineCode";
    case ErrorCode::PathEscapesWhitelist: return "PathEscapesWhitelist";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonRadialCircuit: return "NonRadialCircuit";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownShape: return "UnknownShape";
    case ErrorCode::BuiltinImmutable: return "BuiltinImmutable";
    case ErrorCode::ShapeInUse: return "ShapeInUse";
    case ErrorCode::UnknownLoad: return "UnknownLoad";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::LimitsInverted: return "LimitsInverted";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::NoCircuitLoaded: return "NoCircuitLoaded";
    case ErrorCode::NoQstsResult: return "NoQstsResult";
    case ErrorCode::UnsolvedCircuit: return "UnsolvedCircuit";
    case ErrorCode::NonPositiveReactance: return "NonPositiveReactance";
    case ErrorCode::NoOvervoltage: return "NoOvervoltage";
    case ErrorCode::NothingToMitigate: return "NothingToMitigate";
    case ErrorCode::Unresolvable: return "Unresolvable";
    case ErrorCode::NoUndervoltage: return "NoUndervoltage";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::UnknownSkill: return "UnknownSkill";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::UnknownResource: return "UnknownResource";
    case ErrorCode::AdapterUnavailable: return "AdapterUnavailable";
    case ErrorCode::MalformedModelOutput: return "MalformedModelOutput";
    case ErrorCode::MaxRoundsExceeded: return "MaxRoundsExceeded";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::EngineBusy: return "EngineBusy";
    }
    return "Unknown";
}

} // namespace gridmcp
