#pragma once

// Minimal certificates with purpose separation, and anchor-rooted chain
// verification. Certificates serialize as canonical XML:
//
//   <MiniCert serial=".." subject=".." issuer=".." notBefore=".." notAfter="..">
//     <SubjectKey alg="ed25519">hex</SubjectKey>
//     <Purpose>sign</Purpose>...
//     <Extension name="orgId">value</Extension>...
//     <IssuerSignature alg="ed25519">hex</IssuerSignature>
//   </MiniCert>
//
// The issuer signs a_canon of the certificate without <IssuerSignature>.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aida/common.hpp"
#include "aida/crypto.hpp"
#include "aida/xml.hpp"

namespace aida::crypto {

enum class Purpose { Auth, Sign, Role, Platform, Issuer };

std::string_view to_string(Purpose p);
Purpose purpose_from(std::string_view tag);

struct MiniCert {
  std::string subject;
  PublicKey subject_key;
  std::set<Purpose> purposes;
  Timestamp not_before{};
  Timestamp not_after{};
  std::string issuer;
  std::uint64_t serial = 0;
  std::map<std::string, std::string> extensions;
  SigAlg issuer_sig_alg = SigAlg::Ed25519;
  Bytes issuer_signature;

  bool has(Purpose p) const { return purposes.contains(p); }
  bool within(Timestamp at) const { return not_before <= at && at <= not_after; }
  std::optional<std::string> extension(const std::string& name) const;

  xml::XNode body_xml() const;
  xml::XNode to_xml() const;
  static MiniCert from_xml(const xml::XNode& node);
  // SHA-256 hex over the canonical full certificate.
  std::string digest() const;

  bool operator==(const MiniCert&) const = default;
};

MiniCert load_cert(const std::filesystem::path& path);
void save_cert(const std::filesystem::path& path, const MiniCert& cert);

// Throws Error(IssuerNotAuthorized) when issuer_cert lacks the issuer
// purpose, Error(IssuerExpired) when it is outside its window at `now`,
// Error(KeyCertMismatch) when issuer_key does not match issuer_cert, and
// Error(BadArgs) for an empty purpose set or notBefore >= notAfter.
MiniCert issue_cert(MiniCert body, const PrivateKey& issuer_key, const MiniCert& issuer_cert, Timestamp now);
// Self-signed anchor; the body gets the issuer purpose and issuer = subject.
MiniCert self_sign(MiniCert body, const PrivateKey& key);

struct TrustStore {
  std::vector<MiniCert> anchors;
  // Non-anchor issuing certificates consulted while building a path.
  std::vector<MiniCert> intermediates;
  std::set<std::pair<std::string, std::uint64_t>> revoked;

  // Throws Error(BadArgs) unless the cert is self-signed with issuer purpose.
  void add_anchor(MiniCert cert);
  void add_intermediate(MiniCert cert);
  void revoke(const std::string& issuer, std::uint64_t serial) { revoked.emplace(issuer, serial); }
  bool is_revoked(const MiniCert& c) const { return revoked.contains({c.issuer, c.serial}); }
  void merge(const TrustStore& other);

  xml::XNode to_xml() const;
  static TrustStore from_xml(const xml::XNode& node);
  static TrustStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

enum class ChainStatus { Ok, UntrustedRoot, Expired, Revoked, BadSignature };
std::string_view to_string(ChainStatus s);

struct ChainResult {
  ChainStatus status = ChainStatus::UntrustedRoot;
  // Leaf first, anchor last; filled when a signature-valid path exists.
  std::vector<MiniCert> path;
  std::string detail;

  bool ok() const { return status == ChainStatus::Ok; }
};

ChainResult verify_chain(const MiniCert& cert, Timestamp at, const TrustStore& trust);

}  // namespace aida::crypto
