#include "aida/envelope.hpp"

#include "aida/error.hpp"

namespace aida::crypto {

using xml::XNode;

namespace {

std::string counter_coverage_bytes(const SignedDoc& doc, std::size_t index) {
  std::string bytes = xml::a_canon(doc.content);
  bytes += xml::a_canon(doc.signature.to_xml(false));
  for (std::size_t i = 0; i < index; ++i) bytes += xml::a_canon(doc.signature.counter_signatures[i].to_xml(false));
  return bytes;
}

bool check_block(const SignatureBlock& block, std::string_view covered, std::string* why) {
  auto fail = [&](const char* reason) {
    if (why != nullptr) *why = reason;
    return false;
  };
  if (block.digest_value.size() != digest_size(block.digest_alg)) return fail("digest length does not match algorithm");
  if (block.cert_digest != block.signer.digest()) return fail("signer certificate does not match SignedInfo");
  if (block.sig_alg != block.signer.subject_key.alg) return fail("signature algorithm does not match signer key");
  if (!block.signer.has(block.purpose)) return fail("signer certificate lacks the signature purpose");
  if (digest(block.digest_alg, covered) != block.digest_value) return fail("digest mismatch");
  if (!block.signer.subject_key.verify(xml::a_canon(block.signed_info()), block.signature_value)) {
    return fail("signature value does not verify");
  }
  return true;
}

SignatureBlock make_block(std::string_view covered, const PrivateKey& key, const MiniCert& cert, Purpose purpose,
                          Timestamp now, DigestAlg digest_alg, std::string coverage) {
  if (!cert.has(purpose)) {
    throw Error(Errc::PurposeMismatch,
                "certificate '" + cert.subject + "' is not valid for purpose '" + std::string(to_string(purpose)) + "'");
  }
  if (key.public_key() != cert.subject_key) {
    throw Error(Errc::KeyCertMismatch, "private key does not match certificate '" + cert.subject + "'");
  }
  SignatureBlock b;
  b.digest_alg = digest_alg;
  b.sig_alg = key.alg();
  b.purpose = purpose;
  b.timestamp = now;
  b.coverage = std::move(coverage);
  b.signer = cert;
  b.cert_digest = cert.digest();
  b.digest_value = digest(digest_alg, covered);
  b.signature_value = key.sign(xml::a_canon(b.signed_info()));
  return b;
}

}  // namespace

XNode SignatureBlock::signed_info() const {
  XNode n = XNode::element("SignedInfo");
  n.set_attr("digestAlg", std::string(to_string(digest_alg)));
  n.set_attr("signatureAlg", std::string(to_string(sig_alg)));
  n.set_attr("purpose", std::string(to_string(purpose)));
  n.set_attr("timestamp", format_ts(timestamp));
  n.set_attr("certDigest", cert_digest);
  n.set_attr("digestValue", to_hex(digest_value));
  n.set_attr("coverage", coverage);
  return n;
}

XNode SignatureBlock::to_xml(bool with_counters) const {
  XNode n = XNode::element("Signature");
  n.add(signed_info());
  n.add(XNode::leaf("SignatureValue", to_hex(signature_value)));
  n.add(signer.to_xml());
  if (with_counters) {
    for (const auto& c : counter_signatures) n.add(XNode::element("CounterSignature")).add(c.to_xml(false));
  }
  return n;
}

SignatureBlock SignatureBlock::from_xml(const XNode& node) {
  if (node.name != "Signature") throw Error(Errc::MalformedXml, "expected <Signature>");
  const XNode* info = node.child("SignedInfo");
  const XNode* value = node.child("SignatureValue");
  const XNode* cert = node.child("MiniCert");
  if (info == nullptr || value == nullptr || cert == nullptr) {
    throw Error(Errc::MalformedXml, "<Signature> needs SignedInfo, SignatureValue and MiniCert");
  }
  SignatureBlock b;
  b.digest_alg = digest_alg_from(info->required_attr("digestAlg"));
  b.sig_alg = sig_alg_from(info->required_attr("signatureAlg"));
  b.purpose = purpose_from(info->required_attr("purpose"));
  b.timestamp = parse_ts(info->required_attr("timestamp"));
  b.cert_digest = info->required_attr("certDigest");
  b.digest_value = from_hex(info->required_attr("digestValue"));
  b.coverage = info->required_attr("coverage");
  b.signature_value = from_hex(value->inner_text());
  b.signer = MiniCert::from_xml(*cert);
  for (const XNode* c : node.children_named("CounterSignature")) {
    const XNode* inner = c->child("Signature");
    if (inner == nullptr) throw Error(Errc::MalformedXml, "<CounterSignature> without <Signature>");
    SignatureBlock cs = from_xml(*inner);
    if (!cs.counter_signatures.empty()) throw Error(Errc::MalformedXml, "nested counter-signatures");
    b.counter_signatures.push_back(std::move(cs));
  }
  return b;
}

XNode SignedDoc::to_xml() const {
  XNode n = XNode::element("SignedDoc");
  n.add(XNode::element("Content")).add(content);
  n.add(signature.to_xml());
  return n;
}

SignedDoc SignedDoc::from_xml(const XNode& node) {
  if (node.name != "SignedDoc") throw Error(Errc::MalformedXml, "expected <SignedDoc>");
  const XNode* content = node.child("Content");
  const XNode* sig = node.child("Signature");
  if (content == nullptr || sig == nullptr) throw Error(Errc::MalformedXml, "<SignedDoc> needs Content and Signature");
  const auto elems = content->element_children();
  if (elems.size() != 1) throw Error(Errc::MalformedXml, "<Content> must hold exactly one element");
  if (node.element_children().size() != 2) throw Error(Errc::MalformedXml, "unexpected children in <SignedDoc>");
  SignedDoc d;
  d.content = *elems.front();
  d.signature = SignatureBlock::from_xml(*sig);
  return d;
}

SignedDoc SignedDoc::parse(std::string_view bytes) { return from_xml(xml::parse(bytes)); }

SignedDoc sign_envelope(XNode content, const PrivateKey& key, const MiniCert& cert, Purpose purpose, Timestamp now,
                        DigestAlg digest_alg) {
  xml::check_invariants(content);
  SignedDoc d;
  d.signature = make_block(xml::a_canon(content), key, cert, purpose, now, digest_alg, "content");
  d.content = std::move(content);
  return d;
}

bool verify_primary(const SignedDoc& signed_doc, std::string* why) {
  if (signed_doc.signature.coverage != "content") {
    if (why != nullptr) *why = "primary block must cover content";
    return false;
  }
  return check_block(signed_doc.signature, xml::a_canon(signed_doc.content), why);
}

bool verify_counter(const SignedDoc& signed_doc, std::size_t index, std::string* why) {
  const auto& block = signed_doc.signature.counter_signatures.at(index);
  if (block.coverage != "counter") {
    if (why != nullptr) *why = "counter-signature must declare counter coverage";
    return false;
  }
  return check_block(block, counter_coverage_bytes(signed_doc, index), why);
}

bool EnvelopeReport::ok() const {
  if (!structure_ok || !signature_valid || !chain.ok()) return false;
  for (const auto& c : counter_signatures) {
    if (!c.signature_valid || !c.chain.ok()) return false;
  }
  return true;
}

EnvelopeReport verify_envelope(const SignedDoc& signed_doc, const TrustStore& trust, Timestamp at) {
  EnvelopeReport r;
  const auto& sig = signed_doc.signature;
  r.signer = sig.signer.subject;
  r.timestamp = sig.timestamp;
  r.purpose = sig.purpose;
  try {
    xml::check_invariants(signed_doc.content);
  } catch (const Error& e) {
    r.structure_ok = false;
    r.detail = e.what();
    return r;
  }
  r.signature_valid = verify_primary(signed_doc, &r.detail);
  if (sig.timestamp > at) {
    r.chain.status = ChainStatus::Expired;
    r.chain.detail = "signature timestamp lies after the verification time";
  } else {
    r.chain = verify_chain(sig.signer, sig.timestamp, trust);
  }
  for (std::size_t i = 0; i < sig.counter_signatures.size(); ++i) {
    const auto& cs = sig.counter_signatures[i];
    BlockReport br;
    br.signer = cs.signer.subject;
    br.timestamp = cs.timestamp;
    br.purpose = cs.purpose;
    br.signature_valid = verify_counter(signed_doc, i, &br.detail);
    br.chain = cs.timestamp > at ? ChainResult{ChainStatus::Expired, {}, "timestamp after verification time"}
                                 : verify_chain(cs.signer, cs.timestamp, trust);
    r.counter_signatures.push_back(std::move(br));
  }
  return r;
}

SignedDoc counter_sign(const SignedDoc& signed_doc, const PrivateKey& key, const MiniCert& cert, Purpose purpose,
                       Timestamp now, DigestAlg digest_alg) {
  std::string why;
  if (!verify_primary(signed_doc, &why)) throw Error(Errc::OriginalInvalid, why);
  for (std::size_t i = 0; i < signed_doc.signature.counter_signatures.size(); ++i) {
    if (!verify_counter(signed_doc, i, &why)) {
      throw Error(Errc::OriginalInvalid, "counter-signature " + std::to_string(i) + ": " + why);
    }
  }
  SignedDoc out = signed_doc;
  const std::size_t index = out.signature.counter_signatures.size();
  out.signature.counter_signatures.push_back(
      make_block(counter_coverage_bytes(signed_doc, index), key, cert, purpose, now, digest_alg, "counter"));
  return out;
}

}  // namespace aida::crypto
