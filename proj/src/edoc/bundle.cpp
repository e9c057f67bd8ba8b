#include "aida/bundle.hpp"

#include <algorithm>
#include <sstream>

#include "aida/common.hpp"
#include "aida/crypto.hpp"
#include "aida/error.hpp"

namespace aida::edoc {

using xml::XNode;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::MalformedXml, what); }

int parse_version(const XNode& n) {
  const std::string& v = n.required_attr("version");
  if (v.empty() || v.size() > 9 || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    bad("<" + n.name + "> version '" + v + "' is not a positive integer");
  }
  const int out = std::stoi(v);
  if (out < 1) bad("<" + n.name + "> version must be >= 1");
  return out;
}

void expect(const XNode& n, std::string_view name) {
  if (!n.is_element() || n.name != name) bad("expected <" + std::string(name) + ">, got <" + n.name + ">");
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// "/a/b/@x" -> ("/a/b", "x"); element paths -> (path, "").
std::pair<std::string, std::string> split_attr(const std::string& path) {
  const auto at = path.rfind("/@");
  if (at == std::string::npos) return {path, {}};
  return {path.substr(0, at), path.substr(at + 2)};
}

void collect(const XNode& node, const std::vector<std::string>& steps, std::size_t i, const std::string& attr,
             std::vector<std::string>& out) {
  if (i == steps.size()) {
    if (attr.empty()) {
      out.push_back(node.inner_text());
    } else if (auto v = node.attr(attr)) {
      out.push_back(*v);
    }
    return;
  }
  for (const XNode* c : node.children_named(steps[i])) collect(*c, steps, i + 1, attr, out);
}

}  // namespace

std::string_view to_string(DisplayFormat f) {
  switch (f) {
    case DisplayFormat::Text: return "text";
    case DisplayFormat::Date: return "date";
    case DisplayFormat::Number: return "number";
  }
  return "text";
}

DisplayFormat display_format_from(std::string_view tag) {
  if (tag == "text") return DisplayFormat::Text;
  if (tag == "date") return DisplayFormat::Date;
  if (tag == "number") return DisplayFormat::Number;
  bad("unknown display format '" + std::string(tag) + "'");
}

const DisplayEntry* DisplayMapping::find(const std::string& path) const {
  for (const auto& e : entries) {
    if (e.path == path) return &e;
  }
  return nullptr;
}

XNode DisplayMapping::to_xml() const {
  XNode n = XNode::element("display");
  n.set_attr("typeId", type_id);
  n.set_attr("version", std::to_string(version));
  for (const auto& e : entries) {
    XNode& x = n.add(XNode::element("entry"));
    x.set_attr("path", e.path);
    x.set_attr("label", e.label);
    x.set_attr("format", std::string(to_string(e.format)));
  }
  return n;
}

DisplayMapping DisplayMapping::from_xml(const XNode& node) {
  expect(node, "display");
  DisplayMapping m;
  m.type_id = node.required_attr("typeId");
  m.version = parse_version(node);
  for (const XNode* e : node.children_named("entry")) {
    DisplayEntry d;
    d.path = e->required_attr("path");
    d.label = e->required_attr("label");
    d.format = display_format_from(e->attr("format").value_or("text"));
    if (d.label.empty()) bad("display entry for " + d.path + " has an empty label");
    if (m.find(d.path) != nullptr) bad("display path " + d.path + " mapped twice");
    m.entries.push_back(std::move(d));
  }
  return m;
}

std::set<std::string> TransitionTable::states() const {
  std::set<std::string> out;
  for (const auto& [from, to] : edges) {
    out.insert(from);
    out.insert(to);
  }
  return out;
}

void TransitionTable::check() const {
  for (const auto& [from, to] : edges) {
    if (from == to) bad("self-loop transition on '" + from + "'");
  }
  // Kahn's algorithm: a leftover node means a cycle.
  std::map<std::string, int> indegree;
  for (const auto& s : states()) indegree[s] = 0;
  for (const auto& e : edges) ++indegree[e.second];
  std::vector<std::string> ready;
  for (const auto& [s, d] : indegree) {
    if (d == 0) ready.push_back(s);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::string s = ready.back();
    ready.pop_back();
    ++seen;
    for (const auto& [from, to] : edges) {
      if (from == s && --indegree[to] == 0) ready.push_back(to);
    }
  }
  if (seen != indegree.size()) bad("transition table contains a cycle");
}

XNode TypeMeta::to_xml() const {
  XNode n = XNode::element("meta");
  n.set_attr("typeId", type_id);
  n.set_attr("version", std::to_string(version));
  n.set_attr("initialStatus", initial_status);
  std::string valid;
  for (const auto& s : valid_statuses) valid += (valid.empty() ? "" : " ") + s;
  n.set_attr("validStatuses", valid);
  for (const auto& [from, to] : transitions.edges) {
    n.add(XNode::element("transition")).set_attr("from", from).set_attr("to", to);
  }
  if (has_validity()) {
    n.add(XNode::element("validity")).set_attr("notBefore", *not_before_path).set_attr("notAfter", *not_after_path);
  }
  for (const auto& p : summary_paths) n.add(XNode::element("summary")).set_attr("path", p);
  for (const auto& [k, v] : statics) n.add(XNode::element("static")).set_attr("name", k).set_attr("value", v);
  for (const auto& [k, v] : dynamics) n.add(XNode::element("dynamic")).set_attr("name", k).set_attr("default", v);
  return n;
}

TypeMeta TypeMeta::from_xml(const XNode& node) {
  expect(node, "meta");
  TypeMeta m;
  m.type_id = node.required_attr("typeId");
  m.version = parse_version(node);
  m.initial_status = node.required_attr("initialStatus");
  for (auto& s : split_ws(node.attr("validStatuses").value_or(""))) m.valid_statuses.insert(std::move(s));
  for (const XNode* t : node.children_named("transition")) {
    m.transitions.edges.emplace(t->required_attr("from"), t->required_attr("to"));
  }
  if (const XNode* v = node.child("validity")) {
    m.not_before_path = v->required_attr("notBefore");
    m.not_after_path = v->required_attr("notAfter");
  }
  for (const XNode* s : node.children_named("summary")) m.summary_paths.push_back(s->required_attr("path"));
  for (const XNode* s : node.children_named("static")) m.statics[s->required_attr("name")] = s->required_attr("value");
  for (const XNode* d : node.children_named("dynamic")) {
    m.dynamics[d->required_attr("name")] = d->attr("default").value_or("");
  }
  if (m.dynamics.contains("status") || m.statics.contains("status")) bad("'status' is reserved");
  for (const auto& [k, v] : m.statics) {
    if (m.dynamics.contains(k)) bad("attribute '" + k + "' declared both static and dynamic");
  }
  m.transitions.check();
  return m;
}

std::vector<const RuleItem*> ProcessingRules::manual() const {
  std::vector<const RuleItem*> out;
  for (const auto& r : rules) {
    if (r.kind == RuleItem::Kind::Manual) out.push_back(&r);
  }
  return out;
}

void ProcessingRules::check(const xml::TypeDef& input, const xml::TypeDef& output) const {
  if (input.type_id != input_type) bad("rules input type " + input_type + " does not match " + input.type_id);
  if (output.type_id != output_type) bad("rules output type " + output_type + " does not match " + output.type_id);
  const auto in_fields = field_paths(input);
  const auto out_fields = field_paths(output);
  auto has = [](const std::vector<std::string>& v, const std::string& p) {
    return std::find(v.begin(), v.end(), p) != v.end();
  };
  std::map<std::string, int> covered;
  for (const auto& r : rules) {
    if (!has(out_fields, r.to)) bad("rule target " + r.to + " is not a field of " + output_type);
    if (++covered[r.to] > 1) bad("field " + r.to + " is targeted by more than one rule");
    if (r.kind == RuleItem::Kind::Copy && !has(in_fields, r.from)) {
      bad("copy source " + r.from + " is not a field of " + input_type);
    }
    if (r.kind == RuleItem::Kind::Manual && r.label.empty()) bad("manual rule for " + r.to + " has no label");
  }
  for (const auto& f : out_fields) {
    if (is_required_field(output, f) && !covered.contains(f)) bad("required field " + f + " is not covered by a rule");
  }
}

XNode ProcessingRules::to_xml() const {
  XNode n = XNode::element("rules");
  n.set_attr("inputType", input_type);
  n.set_attr("outputType", output_type);
  for (const auto& r : rules) {
    switch (r.kind) {
      case RuleItem::Kind::Copy:
        n.add(XNode::element("copy")).set_attr("from", r.from).set_attr("to", r.to);
        break;
      case RuleItem::Kind::Const:
        n.add(XNode::element("const")).set_attr("to", r.to).set_attr("value", r.value);
        break;
      case RuleItem::Kind::Manual:
        n.add(XNode::element("manual")).set_attr("to", r.to).set_attr("label", r.label);
        break;
    }
  }
  return n;
}

ProcessingRules ProcessingRules::from_xml(const XNode& node) {
  expect(node, "rules");
  ProcessingRules p;
  p.input_type = node.required_attr("inputType");
  p.output_type = node.required_attr("outputType");
  for (const XNode* c : node.element_children()) {
    RuleItem r;
    r.to = c->required_attr("to");
    if (c->name == "copy") {
      r.kind = RuleItem::Kind::Copy;
      r.from = c->required_attr("from");
    } else if (c->name == "const") {
      r.kind = RuleItem::Kind::Const;
      r.value = c->required_attr("value");
    } else if (c->name == "manual") {
      r.kind = RuleItem::Kind::Manual;
      r.label = c->required_attr("label");
    } else {
      bad("unknown rule <" + c->name + ">");
    }
    p.rules.push_back(std::move(r));
  }
  return p;
}

XNode DefinitionBundle::to_xml() const {
  XNode n = XNode::element("bundle");
  n.add(def.to_xml());
  n.add(display.to_xml());
  n.add(meta.to_xml());
  if (rules) n.add(rules->to_xml());
  return n;
}

DefinitionBundle DefinitionBundle::from_xml(const XNode& node) {
  expect(node, "bundle");
  const XNode* t = node.child("typedef");
  const XNode* d = node.child("display");
  const XNode* m = node.child("meta");
  if (t == nullptr || d == nullptr || m == nullptr) bad("<bundle> needs typedef, display and meta");
  DefinitionBundle b;
  b.def = xml::TypeDef::from_xml(*t);
  b.display = DisplayMapping::from_xml(*d);
  b.meta = TypeMeta::from_xml(*m);
  if (const XNode* r = node.child("rules")) b.rules = ProcessingRules::from_xml(*r);
  b.check();
  return b;
}

std::string DefinitionBundle::digest() const { return crypto::sha256_hex(xml::a_canon(to_xml())); }

void DefinitionBundle::check() const {
  auto same_id = [&](const std::string& id, int v, const char* what) {
    if (id != def.type_id || v != def.version) {
      bad(std::string(what) + " is for " + id + "/" + std::to_string(v) + ", typedef is " + def.type_id + "/" +
          std::to_string(def.version));
    }
  };
  same_id(display.type_id, display.version, "display mapping");
  same_id(meta.type_id, meta.version, "meta");
  const auto fields = field_paths(def);
  auto is_field = [&](const std::string& p) { return std::find(fields.begin(), fields.end(), p) != fields.end(); };
  for (const auto& e : display.entries) {
    if (!is_field(e.path)) bad("display path " + e.path + " is not a field of " + def.type_id);
  }
  for (const auto& p : meta.summary_paths) {
    if (!is_field(p)) bad("summary path " + p + " is not a field of " + def.type_id);
  }
  if (meta.has_validity() && (!is_field(*meta.not_before_path) || !is_field(*meta.not_after_path))) {
    bad("validity paths are not fields of " + def.type_id);
  }
  if (meta.initial_status.empty()) bad("meta lacks an initial status");
  if (rules && rules->output_type != def.type_id) bad("rules in bundle " + def.type_id + " produce " + rules->output_type);
}

DefinitionBundle DefinitionBundle::load_dir(const std::filesystem::path& dir) {
  XNode n = XNode::element("bundle");
  n.add(xml::parse(read_file(dir / "typedef.xml")));
  n.add(xml::parse(read_file(dir / "display.xml")));
  n.add(xml::parse(read_file(dir / "meta.xml")));
  if (std::filesystem::exists(dir / "rules.xml")) n.add(xml::parse(read_file(dir / "rules.xml")));
  return from_xml(n);
}

void DefinitionBundle::save_dir(const std::filesystem::path& dir) const {
  write_file_atomic(dir / "typedef.xml", xml::pretty(def.to_xml()));
  write_file_atomic(dir / "display.xml", xml::pretty(display.to_xml()));
  write_file_atomic(dir / "meta.xml", xml::pretty(meta.to_xml()));
  if (rules) write_file_atomic(dir / "rules.xml", xml::pretty(rules->to_xml()));
}

std::vector<std::string> field_paths(const xml::TypeDef& def) {
  std::vector<std::string> out;
  for (const auto& p : def.order) {
    const auto& spec = def.elements.at(p);
    if (spec.opaque) continue;
    if (spec.text_allowed) out.push_back(p);
    for (const auto& [name, as] : spec.attributes) out.push_back(p + "/@" + name);
  }
  return out;
}

bool is_required_field(const xml::TypeDef& def, const std::string& path) {
  auto [elem, attr] = split_attr(path);
  const auto* spec = def.find(elem);
  if (spec == nullptr) return false;
  if (!attr.empty()) {
    auto it = spec->attributes.find(attr);
    if (it == spec->attributes.end() || !it->second.required) return false;
  }
  for (std::string p = elem; !p.empty(); p = p.substr(0, p.rfind('/'))) {
    const auto* s = def.find(p);
    if (s == nullptr || !s->required) return false;
  }
  return true;
}

std::vector<std::string> values_at(const XNode& root, const std::string& path) {
  auto [elem, attr] = split_attr(path);
  std::vector<std::string> steps;
  std::string cur;
  for (std::size_t i = 1; i <= elem.size(); ++i) {
    if (i == elem.size() || elem[i] == '/') {
      steps.push_back(cur);
      cur.clear();
    } else {
      cur += elem[i];
    }
  }
  std::vector<std::string> out;
  if (steps.empty() || steps.front() != root.name) return out;
  collect(root, steps, 1, attr, out);
  return out;
}

void DefinitionRegistry::add(DefinitionBundle bundle) {
  bundle.check();
  const auto key = std::make_pair(bundle.type_id(), bundle.version());
  if (bundles_.contains(key)) {
    throw Error(Errc::VersionExists, bundle.type_id() + " version " + std::to_string(bundle.version()));
  }
  if (bundle.rules) {
    if (const DefinitionBundle* in = latest(bundle.rules->input_type)) bundle.rules->check(in->def, bundle.def);
  }
  bundles_.emplace(key, std::move(bundle));
}

const DefinitionBundle* DefinitionRegistry::find(const std::string& type_id, int version) const {
  auto it = bundles_.find({type_id, version});
  return it == bundles_.end() ? nullptr : &it->second;
}

const DefinitionBundle* DefinitionRegistry::latest(const std::string& type_id) const {
  const DefinitionBundle* out = nullptr;
  for (const auto& [key, b] : bundles_) {
    if (key.first == type_id) out = &b;
  }
  return out;
}

std::vector<std::string> DefinitionRegistry::type_ids() const {
  std::vector<std::string> out;
  for (const auto& [key, b] : bundles_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

DefinitionRegistry DefinitionRegistry::load_tree(const std::filesystem::path& root) {
  DefinitionRegistry reg;
  if (!std::filesystem::exists(root)) return reg;
  std::vector<std::filesystem::path> dirs;
  for (const auto& type_dir : std::filesystem::directory_iterator(root)) {
    if (!type_dir.is_directory()) continue;
    for (const auto& ver_dir : std::filesystem::directory_iterator(type_dir.path())) {
      if (ver_dir.is_directory()) dirs.push_back(ver_dir.path());
    }
  }
  // Bundles without rules first, so rule checks can see their input types.
  std::sort(dirs.begin(), dirs.end(), [](const auto& a, const auto& b) {
    const bool ra = std::filesystem::exists(a / "rules.xml");
    const bool rb = std::filesystem::exists(b / "rules.xml");
    return ra != rb ? rb : a < b;
  });
  for (const auto& d : dirs) reg.add(DefinitionBundle::load_dir(d));
  return reg;
}

}  // namespace aida::edoc
