#include "aida/error.hpp"

#include <utility>

namespace aida {
namespace {

constexpr std::pair<Errc, std::string_view> kNames[] = {
    {Errc::MalformedXml, "MalformedXml"},
    {Errc::ForbiddenConstruct, "ForbiddenConstruct"},
    {Errc::ForbiddenChar, "ForbiddenChar"},
    {Errc::NotNfc, "NotNfc"},
    {Errc::UnsupportedAlgorithm, "UnsupportedAlgorithm"},
    {Errc::IssuerNotAuthorized, "IssuerNotAuthorized"},
    {Errc::IssuerExpired, "IssuerExpired"},
    {Errc::PurposeMismatch, "PurposeMismatch"},
    {Errc::KeyCertMismatch, "KeyCertMismatch"},
    {Errc::OriginalInvalid, "OriginalInvalid"},
    {Errc::BadKeyStore, "BadKeyStore"},
    {Errc::BadPassphrase, "BadPassphrase"},
    {Errc::MissingField, "MissingField"},
    {Errc::PatternViolation, "PatternViolation"},
    {Errc::UnknownField, "UnknownField"},
    {Errc::ManualFieldMissing, "ManualFieldMissing"},
    {Errc::InputTypeMismatch, "InputTypeMismatch"},
    {Errc::IllegalTransition, "ILLEGAL_TRANSITION"},
    {Errc::Unmapped, "Unmapped"},
    {Errc::StructureInvalid, "StructureInvalid"},
    {Errc::DefinitionMismatch, "DefinitionMismatch"},
    {Errc::FrameTooLarge, "FrameTooLarge"},
    {Errc::MalformedFrame, "MalformedFrame"},
    {Errc::SchemaViolation, "SchemaViolation"},
    {Errc::Timeout, "Timeout"},
    {Errc::ConnectionClosed, "ConnectionClosed"},
    {Errc::BadResponseSignature, "BadResponseSignature"},
    {Errc::ReplaySuspect, "REPLAY_SUSPECT"},
    {Errc::Replay, "REPLAY"},
    {Errc::DeniedCommand, "DENIED_COMMAND"},
    {Errc::DeniedDoctype, "DENIED_DOCTYPE"},
    {Errc::DeniedPort, "DENIED_PORT"},
    {Errc::BadSignature, "BAD_SIGNATURE"},
    {Errc::UnknownRole, "UNKNOWN_ROLE"},
    {Errc::Duplicate, "DUPLICATE"},
    {Errc::InvalidDoc, "INVALID_DOC"},
    {Errc::UnknownType, "UNKNOWN_TYPE"},
    {Errc::UnknownAttribute, "UNKNOWN_ATTRIBUTE"},
    {Errc::StaticAttribute, "STATIC_ATTRIBUTE"},
    {Errc::Conflict, "CONFLICT"},
    {Errc::NotFound, "NOT_FOUND"},
    {Errc::VersionExists, "VERSION_EXISTS"},
    {Errc::CannotStopAdmin, "CANNOT_STOP_ADMIN"},
    {Errc::BadArgs, "BAD_ARGS"},
    {Errc::NotEnrolled, "NOT_ENROLLED"},
    {Errc::NoExamRights, "NO_EXAM_RIGHTS"},
    {Errc::PaymentDue, "PAYMENT_DUE"},
    {Errc::UnknownExam, "UNKNOWN_EXAM"},
    {Errc::UnknownUser, "UNKNOWN_USER"},
    {Errc::Io, "IO_ERROR"},
    {Errc::Internal, "INTERNAL"},
    // alias accepted on input only
    {Errc::IllegalTransition, "IllegalTransition"},
};

std::string make_message(Errc code, const std::string& detail) {
  std::string msg(to_string(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}

}  // namespace

std::string_view to_string(Errc code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "INTERNAL";
}

Errc errc_from_string(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return Errc::Internal;
}

Error::Error(Errc code, std::string detail)
    : std::runtime_error(make_message(code, detail)), code_(code), detail_(std::move(detail)) {}

}  // namespace aida
