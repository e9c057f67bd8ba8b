#include "aida/cert.hpp"

#include <algorithm>
#include <functional>

#include "aida/error.hpp"

namespace aida::crypto {

using xml::XNode;

namespace {

constexpr int kMaxChainDepth = 8;

std::string body_bytes(const MiniCert& c) { return xml::a_canon(c.body_xml()); }

bool signature_links(const MiniCert& child, const MiniCert& parent) {
  return child.issuer == parent.subject && child.issuer_sig_alg == parent.subject_key.alg &&
         parent.subject_key.verify(body_bytes(child), child.issuer_signature);
}

std::uint64_t parse_serial(const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(Errc::MalformedXml, "certificate serial is not a decimal integer");
  }
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw Error(Errc::MalformedXml, "certificate serial out of range");
  }
}

}  // namespace

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::Auth: return "auth";
    case Purpose::Sign: return "sign";
    case Purpose::Role: return "role";
    case Purpose::Platform: return "platform";
    case Purpose::Issuer: return "issuer";
  }
  return "?";
}

Purpose purpose_from(std::string_view tag) {
  if (tag == "auth") return Purpose::Auth;
  if (tag == "sign") return Purpose::Sign;
  if (tag == "role") return Purpose::Role;
  if (tag == "platform") return Purpose::Platform;
  if (tag == "issuer") return Purpose::Issuer;
  throw Error(Errc::BadArgs, "unknown purpose '" + std::string(tag) + "'");
}

std::optional<std::string> MiniCert::extension(const std::string& name) const {
  auto it = extensions.find(name);
  if (it == extensions.end()) return std::nullopt;
  return it->second;
}

XNode MiniCert::body_xml() const {
  XNode n = XNode::element("MiniCert");
  n.set_attr("serial", std::to_string(serial));
  n.set_attr("subject", subject);
  n.set_attr("issuer", issuer);
  n.set_attr("notBefore", format_ts(not_before));
  n.set_attr("notAfter", format_ts(not_after));
  n.add(XNode::leaf("SubjectKey", to_hex(subject_key.raw))).set_attr("alg", std::string(to_string(subject_key.alg)));
  for (Purpose p : purposes) n.add(XNode::leaf("Purpose", std::string(to_string(p))));
  for (const auto& [k, v] : extensions) n.add(XNode::leaf("Extension", v)).set_attr("name", k);
  return n;
}

XNode MiniCert::to_xml() const {
  XNode n = body_xml();
  n.add(XNode::leaf("IssuerSignature", to_hex(issuer_signature)))
      .set_attr("alg", std::string(to_string(issuer_sig_alg)));
  return n;
}

MiniCert MiniCert::from_xml(const XNode& node) {
  if (node.name != "MiniCert") throw Error(Errc::MalformedXml, "expected <MiniCert>");
  MiniCert c;
  c.serial = parse_serial(node.required_attr("serial"));
  c.subject = node.required_attr("subject");
  c.issuer = node.required_attr("issuer");
  c.not_before = parse_ts(node.required_attr("notBefore"));
  c.not_after = parse_ts(node.required_attr("notAfter"));
  const XNode* key = node.child("SubjectKey");
  if (key == nullptr) throw Error(Errc::MalformedXml, "certificate lacks <SubjectKey>");
  c.subject_key.alg = sig_alg_from(key->required_attr("alg"));
  c.subject_key.raw = from_hex(key->inner_text());
  for (const XNode* p : node.children_named("Purpose")) c.purposes.insert(purpose_from(p->inner_text()));
  for (const XNode* e : node.children_named("Extension")) c.extensions[e->required_attr("name")] = e->inner_text();
  if (const XNode* sig = node.child("IssuerSignature")) {
    c.issuer_sig_alg = sig_alg_from(sig->required_attr("alg"));
    c.issuer_signature = from_hex(sig->inner_text());
  }
  for (const XNode* child : node.element_children()) {
    const auto& n = child->name;
    if (n != "SubjectKey" && n != "Purpose" && n != "Extension" && n != "IssuerSignature") {
      throw Error(Errc::MalformedXml, "unexpected <" + n + "> in certificate");
    }
  }
  return c;
}

std::string MiniCert::digest() const { return sha256_hex(xml::a_canon(to_xml())); }

MiniCert load_cert(const std::filesystem::path& path) { return MiniCert::from_xml(xml::parse(read_file(path))); }

void save_cert(const std::filesystem::path& path, const MiniCert& cert) {
  write_file_atomic(path, xml::a_canon(cert.to_xml()));
}

MiniCert issue_cert(MiniCert body, const PrivateKey& issuer_key, const MiniCert& issuer_cert, Timestamp now) {
  if (body.purposes.empty()) throw Error(Errc::BadArgs, "certificate needs at least one purpose");
  if (body.not_before >= body.not_after) throw Error(Errc::BadArgs, "notBefore must precede notAfter");
  if (!issuer_cert.has(Purpose::Issuer)) {
    throw Error(Errc::IssuerNotAuthorized, "'" + issuer_cert.subject + "' lacks the issuer purpose");
  }
  if (!issuer_cert.within(now)) throw Error(Errc::IssuerExpired, "'" + issuer_cert.subject + "' is outside its validity");
  if (issuer_key.public_key() != issuer_cert.subject_key) {
    throw Error(Errc::KeyCertMismatch, "issuer key does not match issuer certificate");
  }
  body.issuer = issuer_cert.subject;
  body.issuer_sig_alg = issuer_key.alg();
  body.issuer_signature = issuer_key.sign(body_bytes(body));
  return body;
}

MiniCert self_sign(MiniCert body, const PrivateKey& key) {
  if (body.not_before >= body.not_after) throw Error(Errc::BadArgs, "notBefore must precede notAfter");
  body.purposes.insert(Purpose::Issuer);
  body.issuer = body.subject;
  body.subject_key = key.public_key();
  body.issuer_sig_alg = key.alg();
  body.issuer_signature = key.sign(body_bytes(body));
  return body;
}

void TrustStore::add_anchor(MiniCert cert) {
  if (!cert.has(Purpose::Issuer) || !signature_links(cert, cert)) {
    throw Error(Errc::BadArgs, "anchor '" + cert.subject + "' is not a self-signed issuer certificate");
  }
  anchors.push_back(std::move(cert));
}

void TrustStore::add_intermediate(MiniCert cert) { intermediates.push_back(std::move(cert)); }

void TrustStore::merge(const TrustStore& other) {
  for (const auto& a : other.anchors) {
    if (std::find(anchors.begin(), anchors.end(), a) == anchors.end()) anchors.push_back(a);
  }
  for (const auto& i : other.intermediates) {
    if (std::find(intermediates.begin(), intermediates.end(), i) == intermediates.end()) intermediates.push_back(i);
  }
  revoked.insert(other.revoked.begin(), other.revoked.end());
}

XNode TrustStore::to_xml() const {
  XNode n = XNode::element("TrustStore");
  for (const auto& a : anchors) n.add(XNode::element("Anchor")).add(a.to_xml());
  for (const auto& i : intermediates) n.add(XNode::element("Intermediate")).add(i.to_xml());
  for (const auto& [issuer, serial] : revoked) {
    n.add(XNode::element("Revoked")).set_attr("issuer", issuer).set_attr("serial", std::to_string(serial));
  }
  return n;
}

TrustStore TrustStore::from_xml(const XNode& node) {
  if (node.name != "TrustStore") throw Error(Errc::MalformedXml, "expected <TrustStore>");
  TrustStore t;
  for (const XNode* a : node.children_named("Anchor")) {
    const XNode* c = a->child("MiniCert");
    if (c == nullptr) throw Error(Errc::MalformedXml, "<Anchor> without certificate");
    t.add_anchor(MiniCert::from_xml(*c));
  }
  for (const XNode* i : node.children_named("Intermediate")) {
    const XNode* c = i->child("MiniCert");
    if (c == nullptr) throw Error(Errc::MalformedXml, "<Intermediate> without certificate");
    t.add_intermediate(MiniCert::from_xml(*c));
  }
  for (const XNode* r : node.children_named("Revoked")) {
    t.revoke(r->required_attr("issuer"), parse_serial(r->required_attr("serial")));
  }
  return t;
}

TrustStore TrustStore::load(const std::filesystem::path& path) { return from_xml(xml::parse(read_file(path))); }

void TrustStore::save(const std::filesystem::path& path) const { write_file_atomic(path, xml::pretty(to_xml())); }

std::string_view to_string(ChainStatus s) {
  switch (s) {
    case ChainStatus::Ok: return "Ok";
    case ChainStatus::UntrustedRoot: return "UntrustedRoot";
    case ChainStatus::Expired: return "Expired";
    case ChainStatus::Revoked: return "Revoked";
    case ChainStatus::BadSignature: return "BadSignature";
  }
  return "?";
}

ChainResult verify_chain(const MiniCert& cert, Timestamp at, const TrustStore& trust) {
  // Depth-first search for a signature-valid path to an anchor; then check
  // revocation and validity windows along it.
  bool saw_bad_signature = false;
  std::vector<MiniCert> path;

  std::function<bool(const MiniCert&, int)> build = [&](const MiniCert& current, int depth) -> bool {
    path.push_back(current);
    for (const auto& anchor : trust.anchors) {
      if (anchor == current) return true;
    }
    if (depth < kMaxChainDepth) {
      auto try_issuers = [&](const std::vector<MiniCert>& pool) {
        for (const auto& candidate : pool) {
          if (candidate.subject != current.issuer || !candidate.has(Purpose::Issuer)) continue;
          if (candidate == current) continue;
          if (!signature_links(current, candidate)) {
            saw_bad_signature = true;
            continue;
          }
          if (build(candidate, depth + 1)) return true;
        }
        return false;
      };
      if (try_issuers(trust.anchors) || try_issuers(trust.intermediates)) return true;
    }
    path.pop_back();
    return false;
  };

  ChainResult result;
  if (!build(cert, 0)) {
    result.status = saw_bad_signature ? ChainStatus::BadSignature : ChainStatus::UntrustedRoot;
    result.detail = saw_bad_signature ? "issuer signature does not verify for '" + cert.subject + "'"
                                      : "no path from '" + cert.subject + "' to a trust anchor";
    return result;
  }
  result.path = path;
  for (const auto& link : path) {
    if (trust.is_revoked(link)) {
      result.status = ChainStatus::Revoked;
      result.detail = "'" + link.subject + "' (serial " + std::to_string(link.serial) + ") is revoked";
      return result;
    }
  }
  for (const auto& link : path) {
    if (!link.within(at)) {
      result.status = ChainStatus::Expired;
      result.detail = "'" + link.subject + "' is outside its validity window at " + format_ts(at);
      return result;
    }
  }
  result.status = ChainStatus::Ok;
  return result;
}

}  // namespace aida::crypto
