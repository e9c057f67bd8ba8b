#pragma once

// Trustworthy rendering. A document is either shown completely, one line per
// text value, or refused; there is no partial render.
//
// Serialized form (UTF-8, LF-terminated lines):
//
//   Document-Type: eEAC/1
//   Definition: <bundle digest>
//   ...more header lines...
//   <empty line>
//   Student ID: s123456
//   ...one line per text node / attribute value, in mapping order...

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aida/bundle.hpp"
#include "aida/edoc.hpp"
#include "aida/envelope.hpp"
#include "aida/error.hpp"

namespace aida::wysiwys {

struct DisplayLine {
  std::string label;
  std::string value;
  bool operator==(const DisplayLine&) const = default;
};

struct DisplayForm {
  std::vector<DisplayLine> header;
  std::vector<DisplayLine> body;

  std::string serialize() const;
  // sha256 hex of serialize().
  std::string render_digest() const;

  // <DisplayForm renderDigest=".."><Header label="..">v</Header>..<Line label="..">v</Line>..</DisplayForm>
  xml::XNode to_xml() const;
  // Throws Error(MalformedXml) when renderDigest does not match the lines.
  static DisplayForm from_xml(const xml::XNode& node);
};

struct Rejection {
  Errc code = Errc::Internal;
  std::string detail;

  xml::XNode to_xml() const;
};

// Characters a display value may not contain: the parser's forbidden set,
// line breaks and tabs (LF, CR, TAB, U+0085, U+2028, U+2029) and C1 controls.
bool is_displayable(std::string_view value);

// Body lines only. Throws Error(StructureInvalid), Error(Unmapped) naming the
// path, or Error(ForbiddenChar).
std::vector<DisplayLine> render_body(const xml::XNode& body, const xml::TypeDef& def,
                                     const edoc::DisplayMapping& mapping);

// Form with a minimal header (type, UNSIGNED). Same errors as render_body.
DisplayForm build_display(const xml::XNode& body, const xml::TypeDef& def, const edoc::DisplayMapping& mapping);

// The only way to obtain bytes for signing. Holds the rendered form and the
// exact canonical header+body that a signature will cover.
class RenderedDraft {
 public:
  const DisplayForm& form() const { return form_; }
  const std::string& bytes() const { return bytes_; }
  const xml::XNode& content() const { return content_; }
  const std::string& type_id() const { return type_id_; }

 private:
  friend RenderedDraft render_to_sign(const xml::XNode&, const edoc::DefinitionBundle&);
  RenderedDraft() = default;
  DisplayForm form_;
  std::string bytes_;
  xml::XNode content_;
  std::string type_id_;
};

// `header` is an unsigned <edoc> header around a draft body. Throws
// Error(InvalidDoc), Error(UnknownType), Error(DefinitionMismatch) or any
// render_body error.
RenderedDraft render_to_sign(const xml::XNode& header, const edoc::DefinitionRegistry& defs);
// Same, for a header that must bind to `bundle`.
RenderedDraft render_to_sign(const xml::XNode& header, const edoc::DefinitionBundle& bundle);

// Parse + render_to_sign, with every failure folded into a Rejection.
std::variant<RenderedDraft, Rejection> prepare(std::string_view draft_bytes, const edoc::DefinitionRegistry& defs);

// Signs exactly draft.bytes(). Error(PurposeMismatch) unless cert has sign.
crypto::SignedDoc sign_rendered(const RenderedDraft& draft, const crypto::PrivateKey& key,
                                const crypto::MiniCert& cert, Timestamp now);

struct VerifiedRender {
  crypto::EnvelopeReport report;
  std::variant<DisplayForm, Rejection> result;

  bool rendered() const { return std::holds_alternative<DisplayForm>(result); }
  const DisplayForm* form() const { return std::get_if<DisplayForm>(&result); }
  const Rejection* rejection() const { return std::get_if<Rejection>(&result); }
};

// Always returns the envelope report. The form carries a
// "Signature: VALID" or "Signature: INVALID" banner.
VerifiedRender verify_and_render(const crypto::SignedDoc& signed_doc, const edoc::DefinitionRegistry& defs,
                                 const crypto::TrustStore& trust, Timestamp at);

}  // namespace aida::wysiwys
