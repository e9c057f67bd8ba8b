#pragma once

// Definition bundles: everything the platform knows about one version of one
// e-doc type. On disk a bundle is a directory
//
//   defs/<typeId>/<version>/typedef.xml   structure (xml::TypeDef)
//                           display.xml   label/order/format mapping
//                           meta.xml      lifecycle, validity, summary, attributes
//                           rules.xml     processing rules (optional)
//
// Documents bind to a bundle by (typeId, version, bundle digest).

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aida/typedef.hpp"
#include "aida/xml.hpp"

namespace aida::edoc {

enum class DisplayFormat { Text, Date, Number };
std::string_view to_string(DisplayFormat f);
DisplayFormat display_format_from(std::string_view tag);

struct DisplayEntry {
  // Element path ("/eEAC/student/id") or attribute path ("/eEAC/student/@lang").
  std::string path;
  std::string label;
  DisplayFormat format = DisplayFormat::Text;
};

struct DisplayMapping {
  std::string type_id;
  int version = 1;
  std::vector<DisplayEntry> entries;

  const DisplayEntry* find(const std::string& path) const;
  xml::XNode to_xml() const;
  static DisplayMapping from_xml(const xml::XNode& node);
};

struct TransitionTable {
  std::set<std::pair<std::string, std::string>> edges;

  bool allowed(const std::string& from, const std::string& to) const { return edges.contains({from, to}); }
  std::set<std::string> states() const;
  // Throws Error(MalformedXml) on a self-loop or a cycle.
  void check() const;
};

struct TypeMeta {
  std::string type_id;
  int version = 1;
  std::string initial_status;
  std::set<std::string> valid_statuses;
  TransitionTable transitions;
  // Content paths holding the validity window, when the type declares one.
  std::optional<std::string> not_before_path;
  std::optional<std::string> not_after_path;
  std::vector<std::string> summary_paths;
  std::map<std::string, std::string> statics;
  // Dynamic attributes besides `status`, with their initial values.
  std::map<std::string, std::string> dynamics;

  bool has_validity() const { return not_before_path.has_value(); }
  xml::XNode to_xml() const;
  static TypeMeta from_xml(const xml::XNode& node);
};

struct RuleItem {
  enum class Kind { Copy, Const, Manual };
  Kind kind = Kind::Copy;
  std::string from;   // Copy
  std::string to;
  std::string value;  // Const
  std::string label;  // Manual
};

struct ProcessingRules {
  std::string input_type;
  std::string output_type;
  std::vector<RuleItem> rules;

  std::vector<const RuleItem*> manual() const;
  // Every required field of `output` is targeted by exactly one rule, no
  // field is targeted twice, targets are fields of `output` and copy sources
  // are fields of `input`. Throws Error(MalformedXml).
  void check(const xml::TypeDef& input, const xml::TypeDef& output) const;

  xml::XNode to_xml() const;
  static ProcessingRules from_xml(const xml::XNode& node);
};

struct DefinitionBundle {
  xml::TypeDef def;
  DisplayMapping display;
  TypeMeta meta;
  std::optional<ProcessingRules> rules;

  const std::string& type_id() const { return def.type_id; }
  int version() const { return def.version; }

  // <bundle><typedef/><display/><meta/>[<rules/>]</bundle>
  xml::XNode to_xml() const;
  static DefinitionBundle from_xml(const xml::XNode& node);
  // sha256 hex of a_canon(to_xml()).
  std::string digest() const;

  // Internal consistency (ids agree, mapped and meta paths exist, transition
  // table acyclic, rules target this type). Throws Error(MalformedXml).
  void check() const;

  static DefinitionBundle load_dir(const std::filesystem::path& dir);
  void save_dir(const std::filesystem::path& dir) const;
};

// Fields a document can carry: text-bearing element paths and attribute
// paths ("/r/a/@x"), in definition order.
std::vector<std::string> field_paths(const xml::TypeDef& def);
// True when the path's element and all its ancestors are required (and, for
// attribute paths, the attribute is required).
bool is_required_field(const xml::TypeDef& def, const std::string& path);

// Values found at a field path. Attribute paths use "/@name" as last step.
std::vector<std::string> values_at(const xml::XNode& root, const std::string& path);

class DefinitionRegistry {
 public:
  // Throws Error(VersionExists) if (typeId, version) is already present and
  // Error(MalformedXml) if the bundle or its rules are inconsistent.
  void add(DefinitionBundle bundle);
  const DefinitionBundle* find(const std::string& type_id, int version) const;
  const DefinitionBundle* latest(const std::string& type_id) const;
  std::vector<std::string> type_ids() const;
  const std::map<std::pair<std::string, int>, DefinitionBundle>& all() const { return bundles_; }

  // defs/<typeId>/<version>/ for every bundle under `root`.
  static DefinitionRegistry load_tree(const std::filesystem::path& root);

 private:
  std::map<std::pair<std::string, int>, DefinitionBundle> bundles_;
};

}  // namespace aida::edoc
