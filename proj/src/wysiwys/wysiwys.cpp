#include "aida/wysiwys.hpp"

#include <regex>

#include "aida/crypto.hpp"

namespace aida::wysiwys {

using xml::XNode;

namespace {

bool is_ws(const std::string& s) {
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
  }
  return true;
}

bool has_element_child(const XNode& n) {
  for (const auto& c : n.children) {
    if (c.is_element()) return true;
  }
  return false;
}

void check_format(const edoc::DisplayEntry& e, const std::string& value, const std::string& path) {
  static const std::regex kDate(R"([0-9]{4}-[0-9]{2}-[0-9]{2}(T[0-9]{2}:[0-9]{2}:[0-9]{2}Z)?)");
  static const std::regex kNumber(R"(-?[0-9]+(\.[0-9]+)?)");
  switch (e.format) {
    case edoc::DisplayFormat::Text:
      return;
    case edoc::DisplayFormat::Date:
      if (!std::regex_match(value, kDate)) throw Error(Errc::StructureInvalid, path + ": value is not a date");
      return;
    case edoc::DisplayFormat::Number:
      if (!std::regex_match(value, kNumber)) throw Error(Errc::StructureInvalid, path + ": value is not a number");
      return;
  }
}

class BodyRenderer {
 public:
  explicit BodyRenderer(const edoc::DisplayMapping& mapping) : mapping_(mapping), buckets_(mapping.entries.size()) {}

  std::vector<DisplayLine> run(const XNode& body) {
    walk(body, "/" + body.name);
    std::vector<DisplayLine> out;
    for (auto& b : buckets_) {
      for (auto& l : b) out.push_back(std::move(l));
    }
    return out;
  }

 private:
  void emit(const std::string& path, const std::string& value) {
    std::size_t idx = 0;
    while (idx < mapping_.entries.size() && mapping_.entries[idx].path != path) ++idx;
    if (idx == mapping_.entries.size()) throw Error(Errc::Unmapped, path);
    if (!is_displayable(value)) throw Error(Errc::ForbiddenChar, path);
    const auto& entry = mapping_.entries[idx];
    check_format(entry, value, path);
    buckets_[idx].push_back({entry.label, value});
  }

  void walk(const XNode& node, const std::string& path) {
    for (const auto& [name, value] : node.attrs) emit(path + "/@" + name, value);
    const bool drop_ws = has_element_child(node);
    std::string run;
    bool in_run = false;
    auto flush = [&] {
      if (in_run && !(drop_ws && is_ws(run))) emit(path, run);
      run.clear();
      in_run = false;
    };
    for (const auto& c : node.children) {
      if (c.is_text()) {
        run += c.text;
        in_run = true;
        continue;
      }
      flush();
      walk(c, path + "/" + c.name);
    }
    flush();
  }

  const edoc::DisplayMapping& mapping_;
  std::vector<std::vector<DisplayLine>> buckets_;
};

// Rejects undisplayable values before structure checks, so a smuggled
// character is reported as such even when it also breaks a pattern.
void scan_values(const XNode& node, const std::string& path) {
  for (const auto& [name, value] : node.attrs) {
    if (!is_displayable(value)) throw Error(Errc::ForbiddenChar, path + "/@" + name);
  }
  const bool drop_ws = has_element_child(node);
  std::string run;
  auto flush = [&] {
    if (!run.empty() && !(drop_ws && is_ws(run)) && !is_displayable(run)) throw Error(Errc::ForbiddenChar, path);
    run.clear();
  };
  for (const auto& c : node.children) {
    if (c.is_text()) {
      run += c.text;
      continue;
    }
    flush();
    scan_values(c, path + "/" + c.name);
  }
  flush();
}

std::string type_label(const XNode& header) {
  return header.required_attr("typeId") + "/" + header.required_attr("version");
}

}  // namespace

std::string DisplayForm::serialize() const {
  std::string out;
  for (const auto& l : header) out += l.label + ": " + l.value + "\n";
  out += "\n";
  for (const auto& l : body) out += l.label + ": " + l.value + "\n";
  return out;
}

std::string DisplayForm::render_digest() const { return crypto::sha256_hex(serialize()); }

XNode DisplayForm::to_xml() const {
  XNode n = XNode::element("DisplayForm");
  n.set_attr("renderDigest", render_digest());
  for (const auto& l : header) n.add(XNode::leaf("Header", l.value)).set_attr("label", l.label);
  for (const auto& l : body) n.add(XNode::leaf("Line", l.value)).set_attr("label", l.label);
  return n;
}

DisplayForm DisplayForm::from_xml(const XNode& node) {
  if (node.name != "DisplayForm") throw Error(Errc::MalformedXml, "expected <DisplayForm>");
  DisplayForm f;
  for (const XNode* h : node.children_named("Header")) f.header.push_back({h->required_attr("label"), h->inner_text()});
  for (const XNode* l : node.children_named("Line")) f.body.push_back({l->required_attr("label"), l->inner_text()});
  if (f.render_digest() != node.required_attr("renderDigest")) {
    throw Error(Errc::MalformedXml, "renderDigest does not match the form lines");
  }
  return f;
}

XNode Rejection::to_xml() const {
  XNode n = XNode::element("Rejection");
  n.set_attr("code", std::string(to_string(code)));
  n.set_attr("detail", detail);
  return n;
}

bool is_displayable(std::string_view value) {
  std::vector<char32_t> cps;
  try {
    cps = xml::decode_utf8(value);
  } catch (const Error&) {
    return false;
  }
  for (char32_t cp : cps) {
    if (xml::is_forbidden_codepoint(cp)) return false;
    if (cp == 0x09 || cp == 0x0A || cp == 0x0D || cp == 0x2028 || cp == 0x2029) return false;
    if (cp >= 0x80 && cp <= 0x9F) return false;
  }
  return xml::is_nfc(value);
}

std::vector<DisplayLine> render_body(const XNode& body, const xml::TypeDef& def, const edoc::DisplayMapping& mapping) {
  try {
    xml::check_invariants(body);
  } catch (const Error& e) {
    if (e.code() == Errc::ForbiddenChar) throw;
    throw Error(Errc::StructureInvalid, e.detail());
  }
  scan_values(body, "/" + body.name);
  const auto report = xml::validate_structure(body, def);
  if (!report.ok()) throw Error(Errc::StructureInvalid, report.summary());
  for (const auto& e : mapping.entries) {
    if (e.label.empty() || !is_displayable(e.label)) throw Error(Errc::StructureInvalid, "bad label for " + e.path);
  }
  return BodyRenderer(mapping).run(body);
}

DisplayForm build_display(const XNode& body, const xml::TypeDef& def, const edoc::DisplayMapping& mapping) {
  DisplayForm f;
  f.body = render_body(body, def, mapping);
  f.header.push_back({"Document-Type", def.type_id + "/" + std::to_string(def.version)});
  f.header.push_back({"Signature", "UNSIGNED"});
  return f;
}

RenderedDraft render_to_sign(const XNode& header, const edoc::DefinitionRegistry& defs) {
  edoc::check_header(header);
  const auto* bundle = defs.find(header.required_attr("typeId"), std::stoi(header.required_attr("version")));
  if (bundle == nullptr) throw Error(Errc::UnknownType, type_label(header));
  return render_to_sign(header, *bundle);
}

RenderedDraft render_to_sign(const XNode& header, const edoc::DefinitionBundle& bundle) {
  edoc::check_header(header);
  if (header.required_attr("typeId") != bundle.type_id() ||
      header.required_attr("version") != std::to_string(bundle.version())) {
    throw Error(Errc::DefinitionMismatch, type_label(header));
  }
  if (header.required_attr("defDigest") != bundle.digest()) {
    throw Error(Errc::DefinitionMismatch, "defDigest does not match the registered " + type_label(header));
  }
  const XNode& body = *header.element_children().front();
  RenderedDraft d;
  d.form_.body = render_body(body, bundle.def, bundle.display);
  d.content_ = header;
  d.bytes_ = xml::a_canon(header);
  d.type_id_ = bundle.type_id();
  d.form_.header = {
      {"Document-Type", type_label(header)},
      {"Definition", header.required_attr("defDigest")},
      {"Created-At", header.required_attr("createdAt")},
      {"Content-Digest", crypto::sha256_hex(d.bytes_)},
      {"Signature", "UNSIGNED"},
  };
  return d;
}

std::variant<RenderedDraft, Rejection> prepare(std::string_view draft_bytes, const edoc::DefinitionRegistry& defs) {
  try {
    return render_to_sign(xml::parse(draft_bytes), defs);
  } catch (const Error& e) {
    return Rejection{e.code(), e.detail()};
  }
}

crypto::SignedDoc sign_rendered(const RenderedDraft& draft, const crypto::PrivateKey& key,
                                const crypto::MiniCert& cert, Timestamp now) {
  crypto::SignedDoc s = crypto::sign_envelope(draft.content(), key, cert, crypto::Purpose::Sign, now);
  if (s.signature.digest_value != crypto::digest(s.signature.digest_alg, draft.bytes())) {
    throw Error(Errc::Internal, "signed bytes differ from rendered bytes");
  }
  return s;
}

VerifiedRender verify_and_render(const crypto::SignedDoc& signed_doc, const edoc::DefinitionRegistry& defs,
                                 const crypto::TrustStore& trust, Timestamp at) {
  VerifiedRender out;
  out.report = crypto::verify_envelope(signed_doc, trust, at);
  try {
    const auto doc = edoc::EDoc::from_signed(signed_doc);
    const auto* bundle = defs.find(doc.type_id(), doc.version());
    if (bundle == nullptr) throw Error(Errc::UnknownType, type_label(doc.header()));
    if (bundle->digest() != doc.def_digest()) {
      throw Error(Errc::DefinitionMismatch, "defDigest does not match the registered " + type_label(doc.header()));
    }
    DisplayForm f;
    f.body = render_body(doc.body(), bundle->def, bundle->display);
    const auto& r = out.report;
    f.header = {
        {"Document-Type", type_label(doc.header())},
        {"Definition", doc.def_digest()},
        {"Created-At", doc.header().required_attr("createdAt")},
        {"Content-Digest", crypto::sha256_hex(xml::a_canon(doc.header()))},
        {"Signature", r.ok() ? "VALID" : "INVALID"},
        {"Signer", r.signer},
        {"Chain", std::string(crypto::to_string(r.chain.status))},
        {"Signed-At", format_ts(r.timestamp)},
    };
    for (const auto& c : r.counter_signatures) {
      f.header.push_back({"Counter-Signature", std::string(c.signature_valid && c.chain.ok() ? "VALID" : "INVALID") +
                                                   " " + c.signer + " " + format_ts(c.timestamp)});
    }
    for (auto& l : f.header) {
      if (!is_displayable(l.value)) throw Error(Errc::ForbiddenChar, "header " + l.label);
    }
    out.result = std::move(f);
  } catch (const Error& e) {
    out.result = Rejection{e.code(), e.detail()};
  }
  return out;
}

}  // namespace aida::wysiwys
