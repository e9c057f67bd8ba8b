#include "aida/edoc.hpp"

#include <algorithm>

#include "aida/error.hpp"

namespace aida::edoc {

using xml::XNode;

namespace {

std::pair<std::string, std::string> split_attr(const std::string& path) {
  const auto at = path.rfind("/@");
  if (at == std::string::npos) return {path, {}};
  return {path.substr(0, at), path.substr(at + 2)};
}

std::string leaf_of(const std::string& path) { return path.substr(path.rfind('/') + 1); }

bool is_hex64(const std::string& s) {
  return s.size() == 64 &&
         std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

class Assembler {
 public:
  Assembler(const xml::TypeDef& def, const std::map<std::string, std::string>& values) : def_(def), values_(values) {}

  XNode run() {
    const auto fields = field_paths(def_);
    for (const auto& [path, value] : values_) {
      if (std::find(fields.begin(), fields.end(), path) == fields.end()) throw Error(Errc::UnknownField, path);
      const auto [elem, attr] = split_attr(path);
      const auto& spec = *def_.find(elem);
      const std::regex* re = attr.empty() ? spec.text_regex.get() : spec.attributes.at(attr).regex.get();
      if (re != nullptr && !xml::matches(*re, value)) throw Error(Errc::PatternViolation, path);
    }
    return build("/" + def_.root);
  }

 private:
  bool has_value_below(const std::string& path) const {
    const std::string prefix = path + "/";
    for (auto it = values_.lower_bound(prefix); it != values_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      return true;
    }
    return false;
  }

  XNode build(const std::string& path) {
    const auto& spec = *def_.find(path);
    XNode node = XNode::element(leaf_of(path));
    for (const auto& [name, as] : spec.attributes) {
      auto it = values_.find(path + "/@" + name);
      if (it != values_.end()) {
        node.set_attr(name, it->second);
      } else if (as.required) {
        throw Error(Errc::MissingField, path + "/@" + name);
      }
    }
    if (spec.text_allowed) {
      auto it = values_.find(path);
      if (it == values_.end()) throw Error(Errc::MissingField, path);
      if (!it->second.empty()) node.add_text(it->second);
    }
    for (const auto& child : spec.allowed_children) {
      const std::string cp = path + "/" + child;
      const auto& cs = *def_.find(cp);
      if (cs.required || values_.contains(cp) || has_value_below(cp)) node.add(build(cp));
    }
    return node;
  }

  const xml::TypeDef& def_;
  const std::map<std::string, std::string>& values_;
};

}  // namespace

const XNode& EDoc::body() const { return *header().element_children().front(); }

int EDoc::version() const { return std::stoi(header().required_attr("version")); }

Timestamp EDoc::created_at() const { return parse_ts(header().required_attr("createdAt")); }

std::string EDoc::doc_id() const { return crypto::sha256_hex(canonical()); }

EDoc EDoc::from_signed(crypto::SignedDoc signed_doc) {
  check_header(signed_doc.content);
  return EDoc{std::move(signed_doc)};
}

EDoc EDoc::parse(std::string_view bytes) { return from_signed(crypto::SignedDoc::parse(bytes)); }

XNode wrap(const DefinitionBundle& bundle, XNode body, Timestamp created_at) {
  XNode h = XNode::element("edoc");
  h.set_attr("typeId", bundle.type_id());
  h.set_attr("version", std::to_string(bundle.version()));
  h.set_attr("defDigest", bundle.digest());
  h.set_attr("createdAt", format_ts(created_at));
  h.add(std::move(body));
  return h;
}

void check_header(const XNode& h) {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidDoc, why); };
  if (!h.is_element() || h.name != "edoc") fail("content is not an <edoc> header");
  for (const auto& [name, value] : h.attrs) {
    if (name != "typeId" && name != "version" && name != "defDigest" && name != "createdAt") {
      fail("unexpected header attribute '" + name + "'");
    }
  }
  const auto type_id = h.attr("typeId");
  const auto version = h.attr("version");
  const auto digest = h.attr("defDigest");
  const auto created = h.attr("createdAt");
  if (!type_id || !version || !digest || !created) fail("header needs typeId, version, defDigest and createdAt");
  if (version->empty() || version->size() > 9 ||
      !std::all_of(version->begin(), version->end(), [](char c) { return c >= '0' && c <= '9'; }) ||
      std::stoi(*version) < 1) {
    fail("header version is not a positive integer");
  }
  if (!is_hex64(*digest)) fail("defDigest is not a sha256 hex digest");
  if (!is_timestamp(*created)) fail("createdAt is not a UTC timestamp");
  try {
    parse_ts(*created);
  } catch (const Error&) {
    fail("createdAt is not a valid calendar time");
  }
  if (h.element_children().size() != 1) fail("header must hold exactly one body element");
  for (const auto& c : h.children) {
    if (c.is_text()) fail("text directly inside the header");
  }
}

XNode assemble(const xml::TypeDef& def, const std::map<std::string, std::string>& values) {
  XNode out = Assembler(def, values).run();
  const auto report = xml::validate_structure(out, def);
  if (!report.ok()) throw Error(Errc::PatternViolation, report.summary());
  return out;
}

XNode apply_rules(const ProcessingRules& rules, const std::string& input_type, const XNode& input_body,
                  const std::map<std::string, std::string>& manual, const xml::TypeDef& output_def) {
  if (input_type != rules.input_type) {
    throw Error(Errc::InputTypeMismatch, "rules take " + rules.input_type + ", got " + input_type);
  }
  if (output_def.type_id != rules.output_type) {
    throw Error(Errc::InputTypeMismatch, "rules produce " + rules.output_type + ", definition is " + output_def.type_id);
  }
  for (const auto& [path, value] : manual) {
    const bool asked = std::any_of(rules.rules.begin(), rules.rules.end(), [&](const RuleItem& r) {
      return r.kind == RuleItem::Kind::Manual && r.to == path;
    });
    if (!asked) throw Error(Errc::UnknownField, path);
  }
  std::map<std::string, std::string> values;
  for (const auto& r : rules.rules) {
    switch (r.kind) {
      case RuleItem::Kind::Copy: {
        const auto found = values_at(input_body, r.from);
        if (!found.empty()) values[r.to] = found.front();
        break;
      }
      case RuleItem::Kind::Const:
        values[r.to] = r.value;
        break;
      case RuleItem::Kind::Manual: {
        auto it = manual.find(r.to);
        if (it == manual.end() || it->second.empty()) throw Error(Errc::ManualFieldMissing, r.label);
        values[r.to] = it->second;
        break;
      }
    }
  }
  return assemble(output_def, values);
}

const std::string& AttributeSet::status() const {
  auto it = dynamic.find("status");
  if (it == dynamic.end()) throw Error(Errc::Internal, "attribute set without status");
  return it->second;
}

std::optional<std::string> AttributeSet::get(const std::string& name) const {
  if (auto it = statics.find(name); it != statics.end()) return it->second;
  if (auto it = dynamic.find(name); it != dynamic.end()) return it->second;
  return std::nullopt;
}

AttributeSet AttributeSet::initial(const TypeMeta& meta) {
  AttributeSet a;
  a.statics = meta.statics;
  a.dynamic = meta.dynamics;
  a.dynamic["status"] = meta.initial_status;
  return a;
}

XNode AttributeSet::to_xml() const {
  XNode n = XNode::element("attributes");
  for (const auto& [k, v] : statics) n.add(XNode::element("static")).set_attr("name", k).set_attr("value", v);
  for (const auto& [k, v] : dynamic) n.add(XNode::element("dynamic")).set_attr("name", k).set_attr("value", v);
  return n;
}

AttributeSet AttributeSet::from_xml(const XNode& node) {
  if (node.name != "attributes") throw Error(Errc::MalformedXml, "expected <attributes>");
  AttributeSet a;
  for (const XNode* s : node.children_named("static")) a.statics[s->required_attr("name")] = s->required_attr("value");
  for (const XNode* d : node.children_named("dynamic")) a.dynamic[d->required_attr("name")] = d->required_attr("value");
  if (!a.dynamic.contains("status")) throw Error(Errc::MalformedXml, "<attributes> without status");
  return a;
}

AttributeSet transition_status(const AttributeSet& attrs, const std::string& to, const TransitionTable& table) {
  const std::string& from = attrs.status();
  if (!table.allowed(from, to)) throw Error(Errc::IllegalTransition, from + " -> " + to);
  AttributeSet out = attrs;
  out.dynamic["status"] = to;
  return out;
}

bool RevocationRecord::verify(const crypto::TrustStore& trust) const {
  const auto report = crypto::verify_envelope(signed_doc, trust, revoked_at);
  return report.ok() && report.purpose == crypto::Purpose::Platform;
}

RevocationRecord RevocationRecord::from_signed(crypto::SignedDoc signed_doc) {
  const XNode& c = signed_doc.content;
  if (c.name != "Revocation") throw Error(Errc::MalformedXml, "expected <Revocation>");
  RevocationRecord r;
  r.doc_id = c.required_attr("docId");
  r.reason = c.required_attr("reason");
  r.revoked_at = parse_ts(c.required_attr("revokedAt"));
  r.signed_doc = std::move(signed_doc);
  return r;
}

RevocationRecord RevocationRecord::parse(std::string_view bytes) {
  return from_signed(crypto::SignedDoc::parse(bytes));
}

RevocationRecord make_revocation(const std::string& doc_id, const std::string& reason, Timestamp at,
                                 const crypto::PrivateKey& platform_key, const crypto::MiniCert& platform_cert) {
  XNode c = XNode::element("Revocation");
  c.set_attr("docId", doc_id);
  c.set_attr("reason", reason);
  c.set_attr("revokedAt", format_ts(at));
  return RevocationRecord::from_signed(
      crypto::sign_envelope(std::move(c), platform_key, platform_cert, crypto::Purpose::Platform, at));
}

XNode ValidityReport::to_xml() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  XNode n = XNode::element("ValidityReport");
  n.set_attr("valid", b(valid()));
  n.set_attr("structure", b(structure));
  n.set_attr("defBinding", b(def_binding));
  n.set_attr("signatures", b(signatures));
  n.set_attr("status", b(status));
  n.set_attr("revoked", b(revoked));
  n.set_attr("withinValidityPeriod", b(within_validity_period));
  n.set_attr("statusValue", status_value);
  n.set_attr("signer", signer);
  n.set_attr("chain", chain);
  for (const auto& d : details) n.add(XNode::leaf("Detail", d));
  return n;
}

ValidityReport ValidityReport::from_xml(const XNode& node) {
  if (node.name != "ValidityReport") throw Error(Errc::MalformedXml, "expected <ValidityReport>");
  auto b = [&](std::string_view name) { return node.required_attr(name) == "true"; };
  ValidityReport r;
  r.structure = b("structure");
  r.def_binding = b("defBinding");
  r.signatures = b("signatures");
  r.status = b("status");
  r.revoked = b("revoked");
  r.within_validity_period = b("withinValidityPeriod");
  r.status_value = node.required_attr("statusValue");
  r.signer = node.required_attr("signer");
  r.chain = node.required_attr("chain");
  for (const XNode* d : node.children_named("Detail")) r.details.push_back(d->inner_text());
  return r;
}

ValidityReport validate_edoc(const EDoc& doc, const crypto::TrustStore& trust,
                             const std::vector<RevocationRecord>& revocations, Timestamp at,
                             const DefinitionRegistry& defs, const AttributeSet* attrs) {
  ValidityReport r;
  const DefinitionBundle* bundle = defs.find(doc.type_id(), doc.version());
  if (bundle == nullptr) {
    r.details.push_back("no definition " + doc.type_id() + "/" + std::to_string(doc.version()));
  } else {
    const auto sr = xml::validate_structure(doc.body(), bundle->def);
    r.structure = sr.ok();
    if (!r.structure) r.details.push_back("structure: " + sr.summary());
    r.def_binding = bundle->digest() == doc.def_digest();
    if (!r.def_binding) r.details.push_back("defDigest does not match the registered definition");
  }

  const auto env = crypto::verify_envelope(doc.signed_doc, trust, at);
  r.signer = env.signer;
  r.chain = std::string(crypto::to_string(env.chain.status));
  r.signatures = env.ok() && env.purpose == crypto::Purpose::Sign;
  if (!env.signature_valid) r.details.push_back("signature: " + env.detail);
  if (!env.chain.ok()) r.details.push_back("chain: " + std::string(crypto::to_string(env.chain.status)));
  if (env.purpose != crypto::Purpose::Sign) r.details.push_back("document not signed with a signing certificate");

  if (attrs != nullptr) {
    r.status_value = attrs->status();
  } else if (bundle != nullptr) {
    r.status_value = bundle->meta.initial_status;
  }
  r.status = bundle != nullptr && bundle->meta.valid_statuses.contains(r.status_value);
  if (!r.status) r.details.push_back("status '" + r.status_value + "' is not a valid status");

  const std::string id = doc.doc_id();
  r.revoked = std::any_of(revocations.begin(), revocations.end(),
                          [&](const RevocationRecord& rec) { return rec.doc_id == id; });
  if (r.revoked) r.details.push_back("document revoked");

  if (bundle == nullptr) {
    r.within_validity_period = false;
  } else if (!bundle->meta.has_validity()) {
    r.within_validity_period = true;
  } else {
    const auto nb = values_at(doc.body(), *bundle->meta.not_before_path);
    const auto na = values_at(doc.body(), *bundle->meta.not_after_path);
    if (nb.size() == 1 && na.size() == 1 && is_timestamp(nb[0]) && is_timestamp(na[0])) {
      try {
        r.within_validity_period = parse_ts(nb[0]) <= at && at <= parse_ts(na[0]);
      } catch (const Error&) {
        r.within_validity_period = false;
      }
    }
    if (!r.within_validity_period) r.details.push_back("outside the validity period");
  }
  return r;
}

}  // namespace aida::edoc
