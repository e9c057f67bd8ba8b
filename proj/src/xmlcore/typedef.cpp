#include "aida/typedef.hpp"

#include <algorithm>

#include "aida/error.hpp"

namespace aida::xml {
namespace {

std::string parent_of(const std::string& path) {
  const auto slash = path.rfind('/');
  return slash == 0 ? std::string{} : path.substr(0, slash);
}

std::string leaf_of(const std::string& path) { return path.substr(path.rfind('/') + 1); }

std::shared_ptr<const std::regex> compile(const std::string& pattern, const std::string& where) {
  try {
    return std::make_shared<const std::regex>(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(Errc::MalformedXml, "bad pattern for " + where + ": " + e.what());
  }
}

bool parse_bool(const XNode& n, std::string_view attr, bool fallback) {
  auto v = n.attr(attr);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw Error(Errc::MalformedXml, "attribute '" + std::string(attr) + "' must be true or false");
}

bool whitespace_only(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

class Validator {
 public:
  explicit Validator(const TypeDef& def) : def_(def) {}

  ValidationReport run(const XNode& node) {
    if (!node.is_element() || node.name != def_.root) {
      add(Violation::Kind::WrongRoot, "/" + node.name, "expected root <" + def_.root + ">");
      return std::move(report_);
    }
    visit(node, "/" + node.name);
    return std::move(report_);
  }

 private:
  void add(Violation::Kind kind, std::string path, std::string detail) {
    report_.violations.push_back({kind, std::move(path), std::move(detail)});
  }

  void visit(const XNode& node, const std::string& path) {
    const ElementSpec* spec = def_.find(path);
    if (spec == nullptr) {
      add(Violation::Kind::UnknownElement, path, "element not in definition");
      return;
    }
    for (const auto& [name, value] : node.attrs) {
      auto it = spec->attributes.find(name);
      if (it == spec->attributes.end()) {
        add(Violation::Kind::UnknownAttribute, path + "/@" + name, "attribute not in definition");
        continue;
      }
      if (it->second.regex && !matches(*it->second.regex, value)) {
        add(Violation::Kind::PatternMismatch, path + "/@" + name, "value does not match " + *it->second.pattern);
      }
    }
    for (const auto& [name, aspec] : spec->attributes) {
      if (aspec.required && !node.attr(name)) {
        add(Violation::Kind::MissingAttribute, path + "/@" + name, "required attribute absent");
      }
    }
    if (spec->opaque) return;

    std::string text;
    for (const auto& c : node.children) {
      if (c.is_text()) text += c.text;
    }
    if (!spec->text_allowed) {
      if (!whitespace_only(text)) add(Violation::Kind::TextNotAllowed, path, "element may not carry text");
    } else if (spec->text_regex && !matches(*spec->text_regex, text)) {
      add(Violation::Kind::PatternMismatch, path, "value does not match " + *spec->text_pattern);
    }

    std::map<std::string, int> counts;
    for (const auto& c : node.children) {
      if (!c.is_element()) continue;
      const std::string child_path = path + "/" + c.name;
      if (++counts[c.name] == 2) {
        const ElementSpec* cs = def_.find(child_path);
        if (cs != nullptr && !cs->repeatable) {
          add(Violation::Kind::NotRepeatable, child_path, "element may appear once");
        }
      }
      visit(c, child_path);
    }
    for (const auto& child_name : spec->allowed_children) {
      const ElementSpec* cs = def_.find(path + "/" + child_name);
      if (cs->required && counts[child_name] == 0) {
        add(Violation::Kind::MissingRequired, path + "/" + child_name, "required element absent");
      }
    }
  }

  const TypeDef& def_;
  ValidationReport report_;
};

}  // namespace

ElementSpec& TypeDef::define(const std::string& path, ElementSpec spec) {
  if (!elements.contains(path)) order.push_back(path);
  auto& slot = elements[path];
  slot = std::move(spec);
  return slot;
}

void TypeDef::finalize() {
  if (!is_valid_name(root)) throw Error(Errc::MalformedXml, "typedef root '" + root + "' is not a valid name");
  if (!elements.contains("/" + root)) throw Error(Errc::MalformedXml, "typedef lacks root path /" + root);
  for (auto& [path, spec] : elements) spec.allowed_children.clear();
  for (const auto& path : order) {
    if (path.empty() || path.front() != '/') throw Error(Errc::MalformedXml, "path '" + path + "' is not absolute");
    if (!is_valid_name(leaf_of(path))) throw Error(Errc::MalformedXml, "path '" + path + "' has an invalid name");
    auto& spec = elements.at(path);
    if (spec.text_pattern) spec.text_regex = compile(*spec.text_pattern, path);
    for (auto& [name, aspec] : spec.attributes) {
      if (!is_valid_name(name)) throw Error(Errc::MalformedXml, "invalid attribute name '" + name + "'");
      if (aspec.pattern) aspec.regex = compile(*aspec.pattern, path + "/@" + name);
    }
    const std::string parent = parent_of(path);
    if (parent.empty()) {
      if (path != "/" + root) throw Error(Errc::MalformedXml, "path '" + path + "' is not under the root");
      continue;
    }
    auto it = elements.find(parent);
    if (it == elements.end()) throw Error(Errc::MalformedXml, "path '" + path + "' is unreachable from the root");
    it->second.allowed_children.push_back(leaf_of(path));
  }
}

const ElementSpec* TypeDef::find(const std::string& path) const {
  auto it = elements.find(path);
  return it == elements.end() ? nullptr : &it->second;
}

bool TypeDef::has_path(const std::string& path) const { return elements.contains(path); }

std::vector<std::string> TypeDef::text_paths() const {
  std::vector<std::string> out;
  for (const auto& p : order) {
    if (elements.at(p).text_allowed) out.push_back(p);
  }
  return out;
}

TypeDef TypeDef::from_xml(const XNode& node) {
  if (node.name != "typedef") throw Error(Errc::MalformedXml, "expected <typedef>");
  TypeDef def;
  def.type_id = node.required_attr("typeId");
  def.root = node.required_attr("root");
  try {
    def.version = std::stoi(node.required_attr("version"));
  } catch (const std::logic_error&) {
    throw Error(Errc::MalformedXml, "typedef version is not an integer");
  }
  if (def.version < 1) throw Error(Errc::MalformedXml, "typedef version must be >= 1");
  for (const XNode* e : node.children_named("element")) {
    ElementSpec spec;
    spec.required = parse_bool(*e, "required", true);
    spec.repeatable = parse_bool(*e, "repeatable", false);
    spec.text_allowed = parse_bool(*e, "text", false);
    spec.opaque = parse_bool(*e, "opaque", false);
    spec.text_pattern = e->attr("pattern");
    if (spec.text_pattern) spec.text_allowed = true;
    for (const XNode* a : e->children_named("attribute")) {
      AttrSpec as;
      as.required = parse_bool(*a, "required", false);
      as.pattern = a->attr("pattern");
      spec.attributes[a->required_attr("name")] = std::move(as);
    }
    const std::string& path = e->required_attr("path");
    if (def.elements.contains(path)) throw Error(Errc::MalformedXml, "duplicate path '" + path + "'");
    def.define(path, std::move(spec));
  }
  def.finalize();
  return def;
}

XNode TypeDef::to_xml() const {
  XNode n = XNode::element("typedef");
  n.set_attr("typeId", type_id);
  n.set_attr("version", std::to_string(version));
  n.set_attr("root", root);
  for (const auto& path : order) {
    const ElementSpec& spec = elements.at(path);
    XNode e = XNode::element("element");
    e.set_attr("path", path);
    if (!spec.required) e.set_attr("required", "false");
    if (spec.repeatable) e.set_attr("repeatable", "true");
    if (spec.text_allowed) e.set_attr("text", "true");
    if (spec.opaque) e.set_attr("opaque", "true");
    if (spec.text_pattern) e.set_attr("pattern", *spec.text_pattern);
    for (const auto& [name, as] : spec.attributes) {
      XNode a = XNode::element("attribute");
      a.set_attr("name", name);
      if (as.required) a.set_attr("required", "true");
      if (as.pattern) a.set_attr("pattern", *as.pattern);
      e.add(std::move(a));
    }
    n.add(std::move(e));
  }
  return n;
}

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::WrongRoot: return "WrongRoot";
    case Violation::Kind::UnknownElement: return "UnknownElement";
    case Violation::Kind::UnknownAttribute: return "UnknownAttribute";
    case Violation::Kind::MissingRequired: return "MissingRequired";
    case Violation::Kind::MissingAttribute: return "MissingAttribute";
    case Violation::Kind::NotRepeatable: return "NotRepeatable";
    case Violation::Kind::TextNotAllowed: return "TextNotAllowed";
    case Violation::Kind::PatternMismatch: return "PatternMismatch";
  }
  return "Unknown";
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += std::string(to_string(v.kind)) + " " + v.path;
  }
  return out;
}

ValidationReport validate_structure(const XNode& node, const TypeDef& def) { return Validator(def).run(node); }

bool matches(const std::regex& re, const std::string& value) { return std::regex_match(value, re); }

}  // namespace aida::xml
