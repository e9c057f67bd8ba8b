#include <doctest.h>

#include <filesystem>
#include <random>

#include "aida/envelope.hpp"
#include "aida/error.hpp"
#include "pki.hpp"

using namespace aida;
using namespace aida::crypto;
using aida::testpki::kT0;

namespace {

const std::filesystem::path kFixtures = AIDA_FIXTURES_DIR;

xml::XNode eeac() { return xml::parse(read_file(kFixtures / "samples/eeac-content.xml")); }

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Internal;
}

struct Pki {
  testpki::Identity root = testpki::make_anchor("CN=Polito Root CA");
  testpki::Identity sso = testpki::issue(root, "CN=SSO Signer", {Purpose::Sign}, 10);
  testpki::Identity sso_auth = testpki::issue(root, "CN=SSO Login", {Purpose::Auth}, 11);
  TrustStore trust;
  Pki() { trust.add_anchor(root.cert); }
};

}  // namespace

TEST_CASE("keygen produces distinct working pairs") {
  auto [k1, p1] = keygen();
  auto [k2, p2] = keygen("ed25519");
  CHECK(p1 != p2);
  const Bytes sig = k1.sign("hello");
  CHECK(p1.verify("hello", sig));
  CHECK_FALSE(p2.verify("hello", sig));
  CHECK_FALSE(p1.verify("hellO", sig));
  auto [k3, p3] = keygen("ed448");
  CHECK(p3.alg == SigAlg::Ed448);
  CHECK(p3.verify("x", k3.sign("x")));
  CHECK(error_of([] { keygen("rsa-512"); }) == Errc::UnsupportedAlgorithm);
}

TEST_CASE("key store seals and opens with the passphrase only") {
  auto [key, pub] = keygen();
  const std::string sealed = seal_private_key(key, "correct horse", {1000});
  CHECK(open_private_key(sealed, "correct horse").public_key() == pub);
  CHECK(error_of([&] { open_private_key(sealed, "wrong"); }) == Errc::BadPassphrase);
  std::string flipped = sealed;
  flipped[20] ^= 0x01;  // inside the authenticated header (salt)
  CHECK(error_of([&] { open_private_key(flipped, "correct horse"); }) == Errc::BadPassphrase);
  CHECK(error_of([&] { open_private_key("garbage", "x"); }) == Errc::BadKeyStore);
  CHECK(error_of([&] { open_private_key(sealed.substr(0, sealed.size() - 1), "correct horse"); }) == Errc::BadKeyStore);

  const auto dir = std::filesystem::temp_directory_path() / "aida-ks-test";
  std::filesystem::create_directories(dir);
  save_key_store(dir / "k.key", key, "pw", {1000});
  CHECK(load_key_store(dir / "k.key", "pw").public_key() == pub);
  std::filesystem::remove_all(dir);
}

TEST_CASE("certificate issuance and chain verification") {
  Pki pki;
  CHECK(verify_chain(pki.sso.cert, kT0, pki.trust).ok());
  CHECK(verify_chain(pki.root.cert, kT0, pki.trust).ok());

  SUBCASE("revoked") {
    TrustStore t = pki.trust;
    t.revoke(pki.sso.cert.issuer, pki.sso.cert.serial);
    CHECK(verify_chain(pki.sso.cert, kT0, t).status == ChainStatus::Revoked);
  }
  SUBCASE("expired and not yet valid") {
    auto old = testpki::issue(pki.root, "CN=Old", {Purpose::Sign}, 12, kT0 - days(100), kT0 - days(1));
    CHECK(verify_chain(old.cert, kT0, pki.trust).status == ChainStatus::Expired);
    CHECK(verify_chain(pki.sso.cert, kT0 + days(400), pki.trust).status == ChainStatus::Expired);
    CHECK(verify_chain(pki.sso.cert, kT0 - days(31), pki.trust).status == ChainStatus::Expired);
  }
  SUBCASE("non-issuer cannot issue") {
    MiniCert body;
    body.subject = "CN=Sneaky";
    body.subject_key = keygen().second;
    body.purposes = {Purpose::Sign};
    body.not_before = kT0;
    body.not_after = kT0 + days(1);
    CHECK(error_of([&] { issue_cert(body, pki.sso.key, pki.sso.cert, kT0); }) == Errc::IssuerNotAuthorized);
    CHECK(error_of([&] { issue_cert(body, pki.root.key, pki.root.cert, kT0 + days(4000)); }) == Errc::IssuerExpired);
    CHECK(error_of([&] { issue_cert(body, pki.sso.key, pki.root.cert, kT0); }) == Errc::KeyCertMismatch);
    body.purposes.clear();
    CHECK(error_of([&] { issue_cert(body, pki.root.key, pki.root.cert, kT0); }) == Errc::BadArgs);
  }
  SUBCASE("untrusted root and forged signature") {
    auto other = testpki::make_anchor("CN=Other Root");
    auto stranger = testpki::issue(other, "CN=Stranger", {Purpose::Sign}, 1);
    CHECK(verify_chain(stranger.cert, kT0, pki.trust).status == ChainStatus::UntrustedRoot);
    // same issuer name, different key
    auto impostor_root = testpki::make_anchor("CN=Polito Root CA");
    auto forged = testpki::issue(impostor_root, "CN=Forged", {Purpose::Sign}, 2);
    CHECK(verify_chain(forged.cert, kT0, pki.trust).status == ChainStatus::BadSignature);
    MiniCert altered = pki.sso.cert;
    altered.subject = "CN=SSO Signer 2";
    CHECK(verify_chain(altered, kT0, pki.trust).status == ChainStatus::BadSignature);
  }
}

TEST_CASE("three-link chain anchor -> org -> user, each link checked by hand") {
  auto root = testpki::make_anchor("CN=EuroPKI Root");
  auto org = testpki::issue(root, "CN=Polito CA", {Purpose::Issuer}, 2);
  auto user = testpki::issue(org, "CN=Prof. Bianchi", {Purpose::Sign}, 3);

  // Oracle: verify each link's issuer signature directly over the canonical body.
  CHECK(root.cert.subject_key.verify(xml::a_canon(org.cert.body_xml()), org.cert.issuer_signature));
  CHECK(org.cert.subject_key.verify(xml::a_canon(user.cert.body_xml()), user.cert.issuer_signature));
  CHECK(root.cert.subject_key.verify(xml::a_canon(root.cert.body_xml()), root.cert.issuer_signature));

  TrustStore t;
  t.add_anchor(root.cert);
  CHECK(verify_chain(user.cert, kT0, t).status == ChainStatus::UntrustedRoot);
  t.add_intermediate(org.cert);
  const auto r = verify_chain(user.cert, kT0, t);
  CHECK(r.ok());
  REQUIRE(r.path.size() == 3);
  CHECK(r.path[1].subject == "CN=Polito CA");
  t.revoke(org.cert.issuer, org.cert.serial);
  CHECK(verify_chain(user.cert, kT0, t).status == ChainStatus::Revoked);
}

TEST_CASE("chain acceptance is monotone when validity windows shrink") {
  Pki pki;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    const auto wide_from = kT0 - days(static_cast<int>(rng() % 50));
    const auto wide_to = kT0 + days(static_cast<int>(rng() % 50));
    const auto shrink_from = wide_from + days(static_cast<int>(rng() % 20));
    const auto shrink_to = wide_to - days(static_cast<int>(rng() % 20));
    if (shrink_from >= shrink_to) continue;
    auto wide = testpki::issue(pki.root, "CN=W", {Purpose::Sign}, 100, wide_from, wide_to);
    auto narrow = testpki::issue(pki.root, "CN=N", {Purpose::Sign}, 101, shrink_from, shrink_to);
    for (int d = -60; d <= 60; d += 3) {
      const auto at = kT0 + days(d);
      if (verify_chain(narrow.cert, at, pki.trust).ok()) CHECK(verify_chain(wide.cert, at, pki.trust).ok());
    }
  }
}

TEST_CASE("cert and trust store XML round trip") {
  Pki pki;
  pki.trust.revoke("CN=X", 9);
  pki.trust.add_intermediate(pki.sso.cert);
  auto cert = MiniCert::from_xml(xml::parse(xml::a_canon(pki.sso.cert.to_xml())));
  CHECK(cert == pki.sso.cert);
  auto t = TrustStore::from_xml(xml::parse(xml::pretty(pki.trust.to_xml())));
  CHECK(xml::a_canon(t.to_xml()) == xml::a_canon(pki.trust.to_xml()));
  CHECK(error_of([&] {
          TrustStore bad;
          bad.add_anchor(pki.sso.cert);
        }) == Errc::BadArgs);
}

TEST_CASE("sign and verify the e-EAC fixture") {
  Pki pki;
  const auto content = eeac();
  const SignedDoc doc = sign_envelope(content, pki.sso.key, pki.sso.cert, Purpose::Sign, kT0);
  // Oracle: digestValue equals an independent SHA-256 of the canonical bytes
  // (same value sha256sum gives for fixtures/samples/eeac-content.canon).
  CHECK(to_hex(doc.signature.digest_value) == "d2b81f286569d01c72106a555cda69040a58929c8d93644d6781bc4793456508");

  const auto report = verify_envelope(doc, pki.trust, kT0 + days(1));
  CHECK(report.ok());
  CHECK(report.signer == "CN=SSO Signer");

  // wire round trip keeps it verifiable
  const SignedDoc reparsed = SignedDoc::parse(doc.canonical());
  CHECK(reparsed.canonical() == doc.canonical());
  CHECK(verify_envelope(reparsed, pki.trust, kT0).ok());

  SUBCASE("purpose separation") {
    CHECK(error_of([&] { sign_envelope(content, pki.sso_auth.key, pki.sso_auth.cert, Purpose::Sign, kT0); }) ==
          Errc::PurposeMismatch);
    CHECK(error_of([&] { sign_envelope(content, pki.sso_auth.key, pki.sso.cert, Purpose::Sign, kT0); }) ==
          Errc::KeyCertMismatch);
  }
  SUBCASE("signer certificate swap is detected") {
    SignedDoc swapped = doc;
    swapped.signature.signer = pki.sso_auth.cert;
    CHECK_FALSE(verify_envelope(swapped, pki.trust, kT0).signature_valid);
  }
  SUBCASE("future-dated signature is not accepted") {
    CHECK_FALSE(verify_envelope(doc, pki.trust, kT0 - days(1)).ok());
  }
}

TEST_CASE("any single byte flip of the signed content is detected") {
  Pki pki;
  const SignedDoc doc = sign_envelope(eeac(), pki.sso.key, pki.sso.cert, Purpose::Sign, kT0);
  const std::string wire = doc.canonical();
  const std::string canon = xml::a_canon(doc.content);
  const auto content_at = wire.find(canon);
  REQUIRE(content_at != std::string::npos);
  int checked = 0;
  for (std::size_t i = 0; i < canon.size(); ++i) {
    const char c = canon[i];
    if (c == '<' || c == '>' || c == '/' || c == '&' || c == '"' || c == ';') continue;
    std::string mutated = wire;
    mutated[content_at + i] = static_cast<char>(c == 'a' ? 'b' : 'a');
    SignedDoc m;
    try {
      m = SignedDoc::parse(mutated);
    } catch (const Error&) {
      ++checked;  // rejected at parse: also a detection
      continue;
    }
    CHECK_FALSE(verify_envelope(m, pki.trust, kT0).signature_valid);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("hex fields are lowercase only") {
  CHECK(from_hex("00ff10") == Bytes{0x00, 0xff, 0x10});
  CHECK_THROWS_AS(from_hex("00FF10"), Error);
  CHECK_THROWS_AS(from_hex("0g"), Error);
  CHECK_THROWS_AS(from_hex("abc"), Error);
}

TEST_CASE("every single-bit flip of a signed document is detected") {
  Pki pki;
  const std::string wire = sign_envelope(eeac(), pki.sso.key, pki.sso.cert, Purpose::Sign, kT0).canonical();
  int accepted = 0;
  for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
    std::string mutated = wire;
    mutated[bit / 8] = static_cast<char>(mutated[bit / 8] ^ (1 << (bit % 8)));
    try {
      if (verify_envelope(SignedDoc::parse(mutated), pki.trust, kT0).ok()) {
        ++accepted;
        MESSAGE("accepted flip at byte " << bit / 8);
      }
    } catch (const Error&) {
    }
  }
  CHECK(accepted == 0);
}

TEST_CASE("counter-signatures") {
  Pki pki;
  auto platform = testpki::issue(pki.root, "CN=Aplatform", {Purpose::Platform}, 20, kT0 - days(30), kT0 + days(365),
                                 {}, SigAlg::Ed448);
  const SignedDoc doc = sign_envelope(eeac(), pki.sso.key, pki.sso.cert, Purpose::Sign, kT0);
  const SignedDoc cs = counter_sign(doc, platform.key, platform.cert, Purpose::Platform, kT0 + days(2),
                                    DigestAlg::Sha512);

  // Oracle: each block verified independently
  CHECK(verify_primary(cs));
  CHECK(verify_counter(cs, 0));
  CHECK(cs.signature.counter_signatures[0].digest_value.size() == 64);
  // original block unchanged
  CHECK(xml::a_canon(cs.signature.to_xml(false)) == xml::a_canon(doc.signature.to_xml(false)));
  const auto rep = verify_envelope(cs, pki.trust, kT0 + days(3));
  CHECK(rep.ok());
  REQUIRE(rep.counter_signatures.size() == 1);

  const SignedDoc cs2 = counter_sign(cs, pki.sso.key, pki.sso.cert, Purpose::Sign, kT0 + days(3));
  CHECK(verify_primary(cs2));
  CHECK(verify_counter(cs2, 0));
  CHECK(verify_counter(cs2, 1));
  CHECK(verify_envelope(SignedDoc::parse(cs2.canonical()), pki.trust, kT0 + days(4)).ok());

  SUBCASE("tampering after counter-signing breaks every block") {
    SignedDoc t = cs2;
    t.content.child("exam")->child("code")->children = {xml::XNode::make_text("02XYZ")};
    CHECK_FALSE(verify_primary(t));
    CHECK_FALSE(verify_counter(t, 0));
    CHECK_FALSE(verify_counter(t, 1));
  }
  SUBCASE("counter-signing a tampered document is refused") {
    SignedDoc t = doc;
    t.content.child("student")->child("name")->children = {xml::XNode::make_text("Mallory")};
    CHECK(error_of([&] { counter_sign(t, platform.key, platform.cert, Purpose::Platform, kT0); }) ==
          Errc::OriginalInvalid);
  }
}
