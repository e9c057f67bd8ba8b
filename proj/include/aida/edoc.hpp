#pragma once

// E-docs: a type-bound body wrapped in a header and signed as a whole.
//
//   <SignedDoc><Content>
//     <edoc typeId="eEAC" version="1" defDigest="<bundle digest>" createdAt="..">
//       <eEAC>...</eEAC>
//     </edoc>
//   </Content><Signature>...</Signature></SignedDoc>
//
// docId is the sha256 hex of the canonical SignedDoc at store time.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aida/bundle.hpp"
#include "aida/cert.hpp"
#include "aida/envelope.hpp"

namespace aida::edoc {

struct EDoc {
  crypto::SignedDoc signed_doc;

  const xml::XNode& header() const { return signed_doc.content; }
  const xml::XNode& body() const;
  std::string type_id() const { return header().required_attr("typeId"); }
  int version() const;
  std::string def_digest() const { return header().required_attr("defDigest"); }
  Timestamp created_at() const;
  std::string doc_id() const;
  std::string canonical() const { return signed_doc.canonical(); }

  // Throws Error(InvalidDoc) when the content is not a well-formed header
  // around exactly one body element.
  static EDoc from_signed(crypto::SignedDoc signed_doc);
  static EDoc parse(std::string_view bytes);
};

// The header element that gets signed.
xml::XNode wrap(const DefinitionBundle& bundle, xml::XNode body, Timestamp created_at);
// Throws Error(InvalidDoc) unless `header` has the shape produced by wrap().
void check_header(const xml::XNode& header);

// Builds a body from field values keyed by field path. Throws
// Error(UnknownField), Error(PatternViolation) or Error(MissingField); the
// detail carries the offending path.
xml::XNode assemble(const xml::TypeDef& def, const std::map<std::string, std::string>& values);

// Derives a draft output body. `manual` is keyed by target path. Throws
// Error(InputTypeMismatch), Error(ManualFieldMissing) with the rule's label as
// detail, Error(UnknownField) for manual values no rule asks for, plus any
// assemble() error.
xml::XNode apply_rules(const ProcessingRules& rules, const std::string& input_type, const xml::XNode& input_body,
                       const std::map<std::string, std::string>& manual, const xml::TypeDef& output_def);

struct AttributeSet {
  std::map<std::string, std::string> statics;
  std::map<std::string, std::string> dynamic;

  const std::string& status() const;
  std::optional<std::string> get(const std::string& name) const;
  bool is_static(const std::string& name) const { return statics.contains(name); }

  // Fresh attributes for a newly stored document of the given type.
  static AttributeSet initial(const TypeMeta& meta);

  // <attributes><static name value/>..<dynamic name value/>..</attributes>
  xml::XNode to_xml() const;
  static AttributeSet from_xml(const xml::XNode& node);
};

// Throws Error(IllegalTransition) "<from> -> <to>" when the edge is absent.
AttributeSet transition_status(const AttributeSet& attrs, const std::string& to, const TransitionTable& table);

struct RevocationRecord {
  std::string doc_id;
  std::string reason;
  Timestamp revoked_at{};
  crypto::SignedDoc signed_doc;

  // Signature valid, purpose platform, chain ok at revoked_at.
  bool verify(const crypto::TrustStore& trust) const;

  static RevocationRecord from_signed(crypto::SignedDoc signed_doc);
  static RevocationRecord parse(std::string_view bytes);
};

RevocationRecord make_revocation(const std::string& doc_id, const std::string& reason, Timestamp at,
                                 const crypto::PrivateKey& platform_key, const crypto::MiniCert& platform_cert);

struct ValidityReport {
  bool structure = false;
  bool def_binding = false;
  bool signatures = false;
  bool status = false;
  bool revoked = false;
  bool within_validity_period = false;
  std::string status_value;
  std::string signer;
  std::string chain;
  std::vector<std::string> details;

  bool valid() const {
    return structure && def_binding && signatures && status && !revoked && within_validity_period;
  }
  xml::XNode to_xml() const;
  static ValidityReport from_xml(const xml::XNode& node);
};

// Report-style: never throws for a parsed document. `attrs` is null for a
// document that was never stored; its status is then the type's initial one.
ValidityReport validate_edoc(const EDoc& doc, const crypto::TrustStore& trust,
                             const std::vector<RevocationRecord>& revocations, Timestamp at,
                             const DefinitionRegistry& defs, const AttributeSet* attrs = nullptr);

}  // namespace aida::edoc
