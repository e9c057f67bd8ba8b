#pragma once

// Strict XML subset used for every document, message and config file.
//
// Accepted: elements, attributes ("..." or '...'), character data, the five
// predefined entities and numeric character references. Rejected anywhere:
// comments, processing instructions (including the XML declaration), CDATA,
// DOCTYPE, namespaces (':' in names), invisible/control characters and input
// that is not Unicode NFC.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aida::xml {

struct XNode {
  enum class Kind : std::uint8_t { Element, Text };

  Kind kind = Kind::Element;
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<XNode> children;
  std::string text;

  static XNode element(std::string name);
  static XNode make_text(std::string value);
  // <name>value</name>
  static XNode leaf(std::string name, std::string value);

  bool is_element() const { return kind == Kind::Element; }
  bool is_text() const { return kind == Kind::Text; }

  std::optional<std::string> attr(std::string_view attr_name) const;
  // Throws Error(MalformedXml) naming the element when the attribute is absent.
  const std::string& required_attr(std::string_view attr_name) const;
  XNode& set_attr(std::string attr_name, std::string value);

  XNode& add(XNode child);
  XNode& add_text(std::string value);

  const XNode* child(std::string_view child_name) const;
  XNode* child(std::string_view child_name);
  std::vector<const XNode*> children_named(std::string_view child_name) const;
  std::vector<const XNode*> element_children() const;

  // Concatenation of the direct text children.
  std::string inner_text() const;
  // Text of the named direct child, or nullopt when that child is missing.
  std::optional<std::string> child_text(std::string_view child_name) const;

  bool operator==(const XNode&) const = default;
};

bool is_valid_name(std::string_view name);

// True for C0 controls other than TAB/LF/CR, DEL, U+200B..U+200F,
// U+202A..U+202E, U+2060 and U+FEFF.
bool is_forbidden_codepoint(char32_t cp);

// Decodes UTF-8; throws Error(MalformedXml) on invalid sequences.
std::vector<char32_t> decode_utf8(std::string_view bytes);
void append_utf8(std::string& out, char32_t cp);

// First forbidden code point in a UTF-8 string, if any.
std::optional<char32_t> find_forbidden(std::string_view utf8);
bool is_nfc(std::string_view utf8);

XNode parse(std::string_view bytes);

// Deterministic canonical form: attributes sorted by code point, whitespace-only
// text dropped inside elements that have element children, & < > " escaped,
// empty elements as <a></a>, no declaration.
std::string a_canon(const XNode& node);

// Indented rendering for hand-edited files. Only elements without text
// children are indented, so parse(pretty(n)) canonicalizes to a_canon(n).
std::string pretty(const XNode& node);

// Throws Error(ForbiddenChar / MalformedXml / NotNfc) if the tree breaks an
// XNode invariant. parse() output always passes.
void check_invariants(const XNode& node);

}  // namespace aida::xml
