#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aida {

// Every failure the platform can report. The string form (to_string) is the
// code that travels on the wire and is printed by the CLI, so renaming an
// enumerator is a protocol change.
enum class Errc {
  // xmlcore
  MalformedXml,
  ForbiddenConstruct,
  ForbiddenChar,
  NotNfc,
  // sigcrypt
  UnsupportedAlgorithm,
  IssuerNotAuthorized,
  IssuerExpired,
  PurposeMismatch,
  KeyCertMismatch,
  OriginalInvalid,
  BadKeyStore,
  BadPassphrase,
  // edoc
  MissingField,
  PatternViolation,
  UnknownField,
  ManualFieldMissing,
  InputTypeMismatch,
  IllegalTransition,
  // wysiwys
  Unmapped,
  StructureInvalid,
  DefinitionMismatch,
  // aprotocol
  FrameTooLarge,
  MalformedFrame,
  SchemaViolation,
  Timeout,
  ConnectionClosed,
  BadResponseSignature,
  // aplatform wire codes
  ReplaySuspect,
  Replay,
  DeniedCommand,
  DeniedDoctype,
  DeniedPort,
  BadSignature,
  UnknownRole,
  Duplicate,
  InvalidDoc,
  UnknownType,
  UnknownAttribute,
  StaticAttribute,
  Conflict,
  NotFound,
  VersionExists,
  CannotStopAdmin,
  BadArgs,
  // eas
  NotEnrolled,
  NoExamRights,
  PaymentDue,
  UnknownExam,
  UnknownUser,
  // generic
  Io,
  Internal,
};

std::string_view to_string(Errc code);
// Inverse of to_string; unknown names map to Errc::Internal.
Errc errc_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace aida
