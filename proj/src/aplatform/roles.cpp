#include <algorithm>

#include "aida/aplatform.hpp"
#include "aida/error.hpp"

namespace aida::platform {

using xml::XNode;

const std::vector<std::string>& command_catalog() {
  static const std::vector<std::string> kCatalog = {
      "CreateEdoc",    "StoreEdoc",     "GetEdoc",      "SearchEdocs",   "SetAttribute",
      "RevokeEdoc",    "ValidateEdoc",  "CounterSign",  "GetDefinition", "Acknowledge",
      "PutDefinition", "SetRoleMap",    "PortControl",  "GetLog",
  };
  return kCatalog;
}

bool is_admin_command(const std::string& name) {
  return name == "PutDefinition" || name == "SetRoleMap" || name == "PortControl" || name == "GetLog";
}

XNode RoleMap::to_xml() const {
  XNode n = XNode::element("rolemap");
  for (const auto& [key, e] : entries) {
    XNode& r = n.add(XNode::element("role"));
    r.set_attr("key", key);
    r.set_attr("name", e.name);
    for (const auto& c : e.commands) r.add(XNode::leaf("command", c));
    for (const auto& t : e.edoc_types) r.add(XNode::leaf("type", t));
  }
  return n;
}

RoleMap RoleMap::from_xml(const XNode& node) {
  if (node.name != "rolemap") throw Error(Errc::MalformedXml, "expected <rolemap>");
  RoleMap m;
  for (const XNode* r : node.children_named("role")) {
    RoleEntry e;
    e.name = r->attr("name").value_or("");
    for (const XNode* c : r->children_named("command")) e.commands.insert(c->inner_text());
    for (const XNode* t : r->children_named("type")) e.edoc_types.insert(t->inner_text());
    if (!m.entries.emplace(r->required_attr("key"), std::move(e)).second) {
      throw Error(Errc::MalformedXml, "role key listed twice: " + r->required_attr("key"));
    }
  }
  return m;
}

std::optional<Errc> authorize(const RoleMap& map, const std::string& role_key, const std::string& command,
                              const std::optional<std::string>& doc_type) {
  const auto it = map.entries.find(role_key);
  if (it == map.entries.end()) return Errc::UnknownRole;
  if (!it->second.commands.contains(command)) return Errc::DeniedCommand;
  if (doc_type && !it->second.edoc_types.contains(*doc_type)) return Errc::DeniedDoctype;
  return std::nullopt;
}

std::optional<Errc> authorize(const crypto::SignedDoc& signed_msg, const proto::AMessage& msg, const RoleMap& map,
                              const crypto::TrustStore& trust, Timestamp at,
                              const std::optional<std::string>& doc_type) {
  const auto report = crypto::verify_envelope(signed_msg, trust, at);
  if (!report.ok() || report.purpose != crypto::Purpose::Role || msg.direction() != proto::Direction::Command) {
    return Errc::BadSignature;
  }
  return authorize(map, signed_msg.signature.signer.subject_key.key_id(), msg.command().name, doc_type);
}

std::optional<std::string> UserMap::find(const std::string& key_id) const {
  const auto it = users.find(key_id);
  if (it == users.end()) return std::nullopt;
  return it->second;
}

XNode UserMap::to_xml() const {
  XNode n = XNode::element("usermap");
  for (const auto& [key, org] : users) {
    XNode& u = n.add(XNode::element("user"));
    u.set_attr("key", key);
    u.set_attr("orgId", org);
  }
  return n;
}

UserMap UserMap::from_xml(const XNode& node) {
  if (node.name != "usermap") throw Error(Errc::MalformedXml, "expected <usermap>");
  UserMap m;
  for (const XNode* u : node.children_named("user")) m.users[u->required_attr("key")] = u->required_attr("orgId");
  return m;
}

UserMap UserMap::load(const fs::path& path) { return from_xml(xml::parse(read_file(path))); }

bool Receipt::verify(const crypto::TrustStore& trust, const std::string& stored_bytes) const {
  const auto report = crypto::verify_envelope(signed_doc, trust, stored_at);
  if (!report.ok() || report.purpose != crypto::Purpose::Platform) return false;
  if (crypto::sha256_hex(stored_bytes) != doc_id) return false;
  try {
    const auto doc = edoc::EDoc::parse(stored_bytes);
    return crypto::sha256_hex(xml::a_canon(doc.header())) == content_digest;
  } catch (const Error&) {
    return false;
  }
}

Receipt Receipt::from_signed(crypto::SignedDoc signed_doc) {
  const XNode& c = signed_doc.content;
  if (c.name != "Receipt") throw Error(Errc::MalformedXml, "expected <Receipt>");
  Receipt r;
  r.doc_id = c.required_attr("docId");
  r.content_digest = c.required_attr("contentDigest");
  r.stored_at = parse_ts(c.required_attr("storedAt"));
  r.signed_doc = std::move(signed_doc);
  return r;
}

Receipt make_receipt(const edoc::EDoc& doc, Timestamp at, const crypto::PrivateKey& key,
                     const crypto::MiniCert& cert) {
  XNode c = XNode::element("Receipt");
  c.set_attr("docId", doc.doc_id());
  c.set_attr("contentDigest", crypto::sha256_hex(xml::a_canon(doc.header())));
  c.set_attr("storedAt", format_ts(at));
  return Receipt::from_signed(crypto::sign_envelope(std::move(c), key, cert, crypto::Purpose::Platform, at));
}

XNode LogEntry::to_xml() const {
  XNode n = XNode::element("LogEntry");
  n.set_attr("seq", std::to_string(seq));
  n.set_attr("timestamp", format_ts(timestamp));
  n.set_attr("roleKey", role_key);
  n.set_attr("command", command);
  if (!doc_id.empty()) n.set_attr("docId", doc_id);
  n.set_attr("outcome", outcome);
  return n;
}

LogEntry LogEntry::from_xml(const XNode& node) {
  if (node.name != "LogEntry") throw Error(Errc::MalformedXml, "expected <LogEntry>");
  LogEntry e;
  const std::string& seq = node.required_attr("seq");
  if (seq.empty() || !std::all_of(seq.begin(), seq.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(Errc::MalformedXml, "bad seq");
  }
  e.seq = std::stoull(seq);
  e.timestamp = parse_ts(node.required_attr("timestamp"));
  e.role_key = node.required_attr("roleKey");
  e.command = node.required_attr("command");
  e.doc_id = node.attr("docId").value_or("");
  e.outcome = node.required_attr("outcome");
  return e;
}

}  // namespace aida::platform
