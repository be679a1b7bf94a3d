#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace orvicon {

using UnixSeconds = std::int64_t;

enum class ErrorCode {
    // wire
    RangeError,
    FrameCorrupt,
    FrameMalformed,
    MessageMalformed,
    // sensorsim
    CellOutOfRange,
    InvalidModel,
    // gateway
    EmptyBatch,
    // provider
    DuplicateDevice,
    InvalidRegistration,
    UnknownDataset,
    InvalidWindow,
    BadSignature,
    MalformedBatch,
    StoreCorrupt,
    // dataspace
    CertificateNotApproved,
    CertificateExpired,
    DuplicateMember,
    NotEnrolled,
    InvalidPolicy,
    InvalidTransition,
    WrongActor,
    UnknownContract,
    ReplayedMessage,
    WindowViolation,
    ScopeViolation,
    RateExceeded,
    ContractExpired,
    ContractNotActive,
    // frost
    NoReadings,
    InsufficientData,
    // harness
    ConfigInvalid,
    Io,
    Transport,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure the library reports carries one of the codes above; callers
/// that need to branch on the kind of failure inspect code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::FrameCorrupt: return "FrameCorrupt";
    case ErrorCode::FrameMalformed: return "FrameMalformed";
    case ErrorCode::MessageMalformed: return "MessageMalformed";
    case ErrorCode::CellOutOfRange: return "CellOutOfRange";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DuplicateDevice: return "DuplicateDevice";
    case ErrorCode::InvalidRegistration: return "InvalidRegistration";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::MalformedBatch: return "MalformedBatch";
    case ErrorCode::StoreCorrupt: return "StoreCorrupt";
    case ErrorCode::CertificateNotApproved: return "CertificateNotApproved";
    case ErrorCode::CertificateExpired: return "CertificateExpired";
    case ErrorCode::DuplicateMember: return "DuplicateMember";
    case ErrorCode::NotEnrolled: return "NotEnrolled";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    case ErrorCode::WrongActor: return "WrongActor";
    case ErrorCode::UnknownContract: return "UnknownContract";
    case ErrorCode::ReplayedMessage: return "ReplayedMessage";
    case ErrorCode::WindowViolation: return "WindowViolation";
    case ErrorCode::ScopeViolation: return "ScopeViolation";
    case ErrorCode::RateExceeded: return "RateExceeded";
    case ErrorCode::ContractExpired: return "ContractExpired";
    case ErrorCode::ContractNotActive: return "ContractNotActive";
    case ErrorCode::NoReadings: return "NoReadings";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Transport: return "Transport";
    }
    return "Unknown";
}

inline std::optional<ErrorCode> error_code_from_string(std::string_view name) noexcept {
    for (int i = 0; i <= static_cast<int>(ErrorCode::Transport); ++i) {
        auto code = static_cast<ErrorCode>(i);
        if (to_string(code) == name) return code;
    }
    return std::nullopt;
}

}  // namespace orvicon
