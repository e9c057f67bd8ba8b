#pragma once

// Signature envelopes over canonical bytes, shared by documents, protocol
// messages and receipts.
//
//   <SignedDoc>
//     <Content>...exactly one element...</Content>
//     <Signature>
//       <SignedInfo digestAlg=".." signatureAlg=".." purpose=".." timestamp=".."
//                   certDigest=".." digestValue=".." coverage="content"></SignedInfo>
//       <SignatureValue>hex</SignatureValue>
//       <MiniCert>...</MiniCert>
//       <CounterSignature><Signature>..coverage="counter"..</Signature></CounterSignature>*
//     </Signature>
//   </SignedDoc>
//
// The primary block's digest covers a_canon(content). Counter-signature k
// covers a_canon(content) ++ a_canon(primary block without counters) ++
// a_canon(counter 0) ++ ... ++ a_canon(counter k-1).

#include <optional>
#include <string>
#include <vector>

#include "aida/cert.hpp"
#include "aida/common.hpp"
#include "aida/crypto.hpp"
#include "aida/xml.hpp"

namespace aida::crypto {

struct SignatureBlock {
  DigestAlg digest_alg = DigestAlg::Sha256;
  SigAlg sig_alg = SigAlg::Ed25519;
  Purpose purpose = Purpose::Sign;
  Timestamp timestamp{};
  std::string coverage = "content";
  std::string cert_digest;
  Bytes digest_value;
  MiniCert signer;
  Bytes signature_value;
  std::vector<SignatureBlock> counter_signatures;

  xml::XNode signed_info() const;
  xml::XNode to_xml(bool with_counters = true) const;
  static SignatureBlock from_xml(const xml::XNode& node);
};

struct SignedDoc {
  xml::XNode content;
  SignatureBlock signature;

  xml::XNode to_xml() const;
  std::string canonical() const { return xml::a_canon(to_xml()); }
  static SignedDoc from_xml(const xml::XNode& node);
  static SignedDoc parse(std::string_view bytes);
};

// Throws Error(PurposeMismatch) when the cert lacks `purpose`,
// Error(KeyCertMismatch) when key and cert disagree.
SignedDoc sign_envelope(xml::XNode content, const PrivateKey& key, const MiniCert& cert, Purpose purpose,
                        Timestamp now, DigestAlg digest_alg = DigestAlg::Sha256);

struct BlockReport {
  bool signature_valid = false;
  ChainResult chain;
  std::string signer;
  Timestamp timestamp{};
  Purpose purpose = Purpose::Sign;
  std::string detail;
};

struct EnvelopeReport {
  bool structure_ok = true;
  bool signature_valid = false;
  ChainResult chain;
  std::string signer;
  Timestamp timestamp{};
  Purpose purpose = Purpose::Sign;
  std::string detail;
  std::vector<BlockReport> counter_signatures;

  // Primary signature, its chain and every counter-signature all pass.
  bool ok() const;
};

// Chain status is evaluated at the signature's own timestamp, which must not
// lie after `at`.
EnvelopeReport verify_envelope(const SignedDoc& signed_doc, const TrustStore& trust, Timestamp at);

// Signature check of one block alone (no chain).
bool verify_primary(const SignedDoc& signed_doc, std::string* why = nullptr);
bool verify_counter(const SignedDoc& signed_doc, std::size_t index, std::string* why = nullptr);

// Throws Error(OriginalInvalid) if any existing block fails to verify.
SignedDoc counter_sign(const SignedDoc& signed_doc, const PrivateKey& key, const MiniCert& cert, Purpose purpose,
                       Timestamp now, DigestAlg digest_alg = DigestAlg::Sha256);

}  // namespace aida::crypto
