#pragma once

#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "aida/xml.hpp"

namespace aida::xml {

struct AttrSpec {
  bool required = false;
  std::optional<std::string> pattern;
  std::shared_ptr<const std::regex> regex;
};

struct ElementSpec {
  bool required = true;
  bool repeatable = false;
  bool text_allowed = false;
  // Children and text accepted as-is (still subject to XNode invariants);
  // attributes are checked as usual. Used only by
  // protocol envelopes that carry nested documents.
  bool opaque = false;
  std::optional<std::string> text_pattern;
  std::shared_ptr<const std::regex> text_regex;
  // Child element names in definition order; derived from the path set.
  std::vector<std::string> allowed_children;
  std::map<std::string, AttrSpec> attributes;
};

// Closed structure definition for one e-doc type. Keys of `elements` are
// absolute paths such as "/eEAC/student/id".
struct TypeDef {
  std::string type_id;
  int version = 1;
  std::string root;
  std::map<std::string, ElementSpec> elements;
  // Paths in the order they were declared.
  std::vector<std::string> order;

  // Adds (or replaces) a path. Call finalize() once all paths are in.
  ElementSpec& define(const std::string& path, ElementSpec spec = {});
  // Derives allowed_children, compiles patterns, checks reachability.
  // Throws Error(MalformedXml) on an inconsistent definition.
  void finalize();

  const ElementSpec* find(const std::string& path) const;
  bool has_path(const std::string& path) const;
  // Paths that may carry text, in declaration order.
  std::vector<std::string> text_paths() const;

  static TypeDef from_xml(const XNode& node);
  XNode to_xml() const;
};

struct Violation {
  enum class Kind {
    WrongRoot,
    UnknownElement,
    UnknownAttribute,
    MissingRequired,
    MissingAttribute,
    NotRepeatable,
    TextNotAllowed,
    PatternMismatch,
  };
  Kind kind;
  std::string path;
  std::string detail;
};

std::string_view to_string(Violation::Kind kind);

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate_structure(const XNode& node, const TypeDef& def);

// Full-string match of a compiled pattern against a UTF-8 value.
bool matches(const std::regex& re, const std::string& value);

}  // namespace aida::xml
