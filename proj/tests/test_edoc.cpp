#include <doctest.h>

#include <random>

#include "aida/edoc.hpp"
#include "aida/error.hpp"
#include "fixtures.hpp"
#include "pki.hpp"

using namespace aida;
using namespace aida::edoc;
using aida::testpki::kT0;
using xml::XNode;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Internal;
}

template <typename F>
std::string detail_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.detail();
  }
  return {};
}

struct World {
  DefinitionRegistry defs = testfx::registry();
  testpki::Identity ca = testpki::make_anchor("CN=Test CA");
  testpki::Identity sso = testpki::issue(ca, "CN=SSO", {crypto::Purpose::Sign}, 2);
  testpki::Identity platform = testpki::issue(ca, "CN=Platform", {crypto::Purpose::Platform}, 3);
  crypto::TrustStore trust;

  World() { trust.add_anchor(ca.cert); }

  const DefinitionBundle& bundle(const std::string& type) const { return *defs.latest(type); }

  EDoc sign(const std::string& type, XNode body, Timestamp at = kT0) const {
    return EDoc::from_signed(
        crypto::sign_envelope(wrap(bundle(type), std::move(body), at), sso.key, sso.cert, crypto::Purpose::Sign, at));
  }
};

void collect_text(const XNode& n, std::vector<std::string>& out) {
  for (const auto& c : n.children) {
    if (c.is_text()) {
      out.push_back(c.text);
    } else {
      collect_text(c, out);
    }
  }
}

}  // namespace

TEST_CASE("fixture bundles load and bind by digest") {
  const auto defs = testfx::registry();
  REQUIRE(defs.type_ids() == std::vector<std::string>{"eEAC", "eEET"});
  const auto& eeac = *defs.find("eEAC", 1);
  CHECK(eeac.meta.initial_status == "pending");
  CHECK(eeac.meta.has_validity());
  CHECK(eeac.display.entries.size() == 8);
  CHECK_FALSE(eeac.rules.has_value());
  const auto& eeet = *defs.find("eEET", 1);
  REQUIRE(eeet.rules.has_value());
  CHECK(eeet.rules->manual().size() == 3);

  const auto again = DefinitionBundle::from_xml(xml::parse(xml::a_canon(eeac.to_xml())));
  CHECK(again.digest() == eeac.digest());
  CHECK(eeac.digest() != eeet.digest());

  DefinitionRegistry copy;
  copy.add(eeac);
  CHECK(code_of([&] { copy.add(eeac); }) == Errc::VersionExists);
}

TEST_CASE("bundle consistency errors") {
  const auto defs = testfx::registry();
  DefinitionBundle b = *defs.find("eEAC", 1);
  SUBCASE("display path outside the typedef") {
    b.display.entries.push_back({"/eEAC/student/ssn", "SSN", DisplayFormat::Text});
    CHECK(code_of([&] { b.check(); }) == Errc::MalformedXml);
  }
  SUBCASE("meta for a different version") {
    b.meta.version = 2;
    CHECK(code_of([&] { b.check(); }) == Errc::MalformedXml);
  }
  SUBCASE("rules leaving a required output field uncovered") {
    ProcessingRules r = *defs.find("eEET", 1)->rules;
    r.rules.pop_back();
    CHECK(code_of([&] { r.check(defs.find("eEAC", 1)->def, defs.find("eEET", 1)->def); }) == Errc::MalformedXml);
  }
  SUBCASE("rules targeting a field twice") {
    ProcessingRules r = *defs.find("eEET", 1)->rules;
    r.rules.push_back({RuleItem::Kind::Const, {}, "/eEET/exam/mark", "30", {}});
    CHECK(code_of([&] { r.check(defs.find("eEAC", 1)->def, defs.find("eEET", 1)->def); }) == Errc::MalformedXml);
  }
  SUBCASE("copy from a path the input type lacks") {
    ProcessingRules r = *defs.find("eEET", 1)->rules;
    r.rules.front().from = "/eEAC/student/ssn";
    CHECK(code_of([&] { r.check(defs.find("eEAC", 1)->def, defs.find("eEET", 1)->def); }) == Errc::MalformedXml);
  }
}

TEST_CASE("assemble builds the fixture e-EAC") {
  const auto defs = testfx::registry();
  const auto& def = defs.find("eEAC", 1)->def;
  const XNode doc = assemble(def, testfx::eeac_values());
  CHECK(xml::validate_structure(doc, def).ok());
  CHECK(xml::a_canon(doc) == xml::a_canon(testfx::eeac_content()));

  auto values = testfx::eeac_values();
  SUBCASE("missing field") {
    values.erase("/eEAC/exam/code");
    CHECK(code_of([&] { assemble(def, values); }) == Errc::MissingField);
    CHECK(detail_of([&] { assemble(def, values); }) == "/eEAC/exam/code");
  }
  SUBCASE("hidden field") {
    values["/eEAC/student/ssn"] = "123";
    CHECK(code_of([&] { assemble(def, values); }) == Errc::UnknownField);
  }
  SUBCASE("container path is not a field") {
    values["/eEAC/student"] = "x";
    CHECK(code_of([&] { assemble(def, values); }) == Errc::UnknownField);
  }
  SUBCASE("pattern") {
    values["/eEAC/student/id"] = "123456";
    CHECK(code_of([&] { assemble(def, values); }) == Errc::PatternViolation);
  }
}

TEST_CASE("assemble handles optional elements and attributes") {
  auto def = xml::TypeDef::from_xml(xml::parse(R"(<typedef typeId="t" version="1" root="r">
    <element path="/r"><attribute name="lang" required="true" pattern="[a-z]{2}"/></element>
    <element path="/r/a" text="true"/>
    <element path="/r/opt" required="false"/>
    <element path="/r/opt/b" text="true"/>
  </typedef>)"));
  CHECK(xml::a_canon(assemble(def, {{"/r/@lang", "it"}, {"/r/a", "x"}})) == R"(<r lang="it"><a>x</a></r>)");
  CHECK(xml::a_canon(assemble(def, {{"/r/@lang", "it"}, {"/r/a", "x"}, {"/r/opt/b", "y"}})) ==
        R"(<r lang="it"><a>x</a><opt><b>y</b></opt></r>)");
  CHECK(code_of([&] { assemble(def, {{"/r/a", "x"}}); }) == Errc::MissingField);
  CHECK(code_of([&] { assemble(def, {{"/r/@lang", "ITA"}, {"/r/a", "x"}}); }) == Errc::PatternViolation);
}

TEST_CASE("apply_rules derives an e-EET draft") {
  const auto defs = testfx::registry();
  const auto& eeet = *defs.find("eEET", 1);
  const auto& rules = *eeet.rules;
  const XNode input = testfx::eeac_content();

  const XNode draft = apply_rules(rules, "eEAC", input, testfx::eeet_manual(), eeet.def);
  CHECK(xml::validate_structure(draft, eeet.def).ok());
  for (const auto& r : rules.rules) {
    if (r.kind != RuleItem::Kind::Copy) continue;
    CHECK(values_at(draft, r.to) == values_at(input, r.from));
  }
  CHECK(values_at(draft, "/eEET/exam/mark") == std::vector<std::string>{"28"});

  auto manual = testfx::eeet_manual();
  SUBCASE("missing mark names the dialog label") {
    manual.erase("/eEET/exam/mark");
    CHECK(code_of([&] { apply_rules(rules, "eEAC", input, manual, eeet.def); }) == Errc::ManualFieldMissing);
    CHECK(detail_of([&] { apply_rules(rules, "eEAC", input, manual, eeet.def); }) == "Mark");
  }
  SUBCASE("empty mark counts as missing") {
    manual["/eEET/exam/mark"] = "";
    CHECK(code_of([&] { apply_rules(rules, "eEAC", input, manual, eeet.def); }) == Errc::ManualFieldMissing);
  }
  SUBCASE("manual value for a copied field") {
    manual["/eEET/student/name"] = "Someone Else";
    CHECK(code_of([&] { apply_rules(rules, "eEAC", input, manual, eeet.def); }) == Errc::UnknownField);
  }
  SUBCASE("bad mark") {
    manual["/eEET/exam/mark"] = "31";
    CHECK(code_of([&] { apply_rules(rules, "eEAC", input, manual, eeet.def); }) == Errc::PatternViolation);
  }
  SUBCASE("e-EET fed as input") {
    CHECK(code_of([&] { apply_rules(rules, "eEET", draft, manual, eeet.def); }) == Errc::InputTypeMismatch);
  }
}

TEST_CASE("apply_rules output is fully traceable (randomized)") {
  const auto defs = testfx::registry();
  const auto& eeet = *defs.find("eEET", 1);
  const auto& eeac_def = defs.find("eEAC", 1)->def;
  std::mt19937_64 rng(4242);
  auto pick = [&](std::initializer_list<const char*> xs) { return std::string(*(xs.begin() + rng() % xs.size())); };
  for (int i = 0; i < 100; ++i) {
    auto values = testfx::eeac_values();
    values["/eEAC/student/id"] = "s" + std::to_string(100000 + rng() % 900000);
    values["/eEAC/student/name"] = pick({"Maria Rossi", "Luca Bianchi", "Zoë Ferrari", "Anna  Verdi "});
    values["/eEAC/exam/code"] = pick({"01ABC", "02XYZ", "99QQQ"});
    const XNode input = assemble(eeac_def, values);
    std::map<std::string, std::string> manual = {
        {"/eEET/exam/date", "2026-0" + std::to_string(1 + rng() % 9) + "-1" + std::to_string(rng() % 10)},
        {"/eEET/exam/mark", std::to_string(18 + rng() % 13) + (rng() % 4 == 0 ? "L" : "")},
        {"/eEET/exam/questions", pick({"Q1", "a & b < c", "\"quoted\""})},
    };
    const XNode draft = apply_rules(*eeet.rules, "eEAC", input, manual, eeet.def);

    // Every output field value comes from exactly the rule that targets it.
    for (const auto& r : eeet.rules->rules) {
      const auto got = values_at(draft, r.to);
      REQUIRE(got.size() == 1);
      switch (r.kind) {
        case RuleItem::Kind::Copy: CHECK(got.front() == values.at(r.from)); break;
        case RuleItem::Kind::Const: CHECK(got.front() == r.value); break;
        case RuleItem::Kind::Manual: CHECK(got.front() == manual.at(r.to)); break;
      }
    }
    // And no text appears that no rule produced.
    std::vector<std::string> texts;
    collect_text(draft, texts);
    CHECK(texts.size() == eeet.rules->rules.size());
  }
}

TEST_CASE("status transitions follow the table") {
  const auto defs = testfx::registry();
  const auto& meta = defs.find("eEAC", 1)->meta;
  const AttributeSet a = AttributeSet::initial(meta);
  CHECK(a.status() == "pending");
  CHECK(a.get("partition") == "input");
  CHECK(a.get("remark") == "none");

  const AttributeSet processed = transition_status(a, "processed", meta.transitions);
  CHECK(processed.status() == "processed");
  CHECK(processed.statics == a.statics);
  CHECK(processed.get("remark") == "none");
  CHECK(code_of([&] { transition_status(processed, "pending", meta.transitions); }) == Errc::IllegalTransition);
  CHECK(transition_status(a, "revoked", meta.transitions).status() == "revoked");

  CHECK(AttributeSet::from_xml(xml::parse(xml::a_canon(processed.to_xml()))).dynamic == processed.dynamic);
}

TEST_CASE("transition tables: cycles and self-loops are rejected; walks respect edges (brute force)") {
  TransitionTable loop;
  loop.edges = {{"a", "a"}};
  CHECK(code_of([&] { loop.check(); }) == Errc::MalformedXml);
  TransitionTable cycle;
  cycle.edges = {{"a", "b"}, {"b", "c"}, {"c", "a"}};
  CHECK(code_of([&] { cycle.check(); }) == Errc::MalformedXml);

  // Every table over 4 states whose edge set is acyclic: drive random walks
  // and compare each step against direct edge lookup.
  const std::vector<std::string> states = {"s0", "s1", "s2", "s3"};
  std::vector<std::pair<std::string, std::string>> all;
  for (const auto& f : states) {
    for (const auto& t : states) {
      if (f != t) all.emplace_back(f, t);
    }
  }
  std::mt19937_64 rng(5);
  int tables = 0;
  for (std::uint32_t mask = 0; mask < (1u << all.size()); mask += 7) {
    TransitionTable t;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (mask & (1u << i)) t.edges.insert(all[i]);
    }
    try {
      t.check();
    } catch (const Error&) {
      continue;
    }
    ++tables;
    AttributeSet a;
    a.dynamic["status"] = "s0";
    for (int step = 0; step < 8; ++step) {
      const std::string to = states[rng() % states.size()];
      const bool edge = t.edges.contains({a.status(), to});
      if (edge) {
        a = transition_status(a, to, t);
        CHECK(a.status() == to);
      } else {
        const std::string before = a.status();
        CHECK(code_of([&] { transition_status(a, to, t); }) == Errc::IllegalTransition);
        CHECK(a.status() == before);
      }
    }
  }
  CHECK(tables > 50);
}

TEST_CASE("validate_edoc on a signed e-EAC") {
  World w;
  const EDoc doc = w.sign("eEAC", testfx::eeac_content());
  CHECK(EDoc::parse(doc.canonical()).doc_id() == doc.doc_id());
  CHECK(doc.doc_id() == crypto::sha256_hex(doc.canonical()));

  const auto fresh = validate_edoc(doc, w.trust, {}, kT0 + days(1), w.defs);
  CHECK(fresh.valid());
  CHECK(fresh.status_value == "pending");
  CHECK(fresh.signer == "CN=SSO");

  const auto late = validate_edoc(doc, w.trust, {}, kT0 + days(43), w.defs);
  CHECK_FALSE(late.within_validity_period);
  CHECK_FALSE(late.valid());
  CHECK(late.signatures);
  CHECK(validate_edoc(doc, w.trust, {}, kT0 + days(42), w.defs).within_validity_period);

  const auto rec = make_revocation(doc.doc_id(), "issued in error", kT0 + days(2), w.platform.key, w.platform.cert);
  CHECK(rec.verify(w.trust));
  CHECK(RevocationRecord::parse(rec.signed_doc.canonical()).doc_id == doc.doc_id());
  const auto revoked = validate_edoc(doc, w.trust, {rec}, kT0 + days(3), w.defs);
  CHECK(revoked.revoked);
  CHECK_FALSE(revoked.valid());

  AttributeSet processed = AttributeSet::initial(w.bundle("eEAC").meta);
  processed = transition_status(processed, "processed", w.bundle("eEAC").meta.transitions);
  const auto after = validate_edoc(doc, w.trust, {}, kT0 + days(1), w.defs, &processed);
  CHECK_FALSE(after.status);
  CHECK(after.status_value == "processed");

  const auto round = ValidityReport::from_xml(xml::parse(xml::a_canon(revoked.to_xml())));
  CHECK(round.revoked);
  CHECK(round.details == revoked.details);
}

TEST_CASE("validate_edoc flags definition binding and structure") {
  World w;
  SUBCASE("stale defDigest") {
    XNode h = wrap(w.bundle("eEAC"), testfx::eeac_content(), kT0);
    h.set_attr("defDigest", std::string(64, 'a'));
    const EDoc doc = EDoc::from_signed(crypto::sign_envelope(h, w.sso.key, w.sso.cert, crypto::Purpose::Sign, kT0));
    const auto r = validate_edoc(doc, w.trust, {}, kT0 + days(1), w.defs);
    CHECK_FALSE(r.def_binding);
    CHECK(r.structure);
    CHECK(r.signatures);
  }
  SUBCASE("extra element") {
    XNode body = testfx::eeac_content();
    body.add(XNode::leaf("secret", "x"));
    const auto r = validate_edoc(w.sign("eEAC", body), w.trust, {}, kT0 + days(1), w.defs);
    CHECK_FALSE(r.structure);
    CHECK(r.def_binding);
  }
  SUBCASE("unknown type") {
    XNode h = wrap(w.bundle("eEAC"), testfx::eeac_content(), kT0);
    h.set_attr("typeId", "eXYZ");
    const EDoc doc = EDoc::from_signed(crypto::sign_envelope(h, w.sso.key, w.sso.cert, crypto::Purpose::Sign, kT0));
    const auto r = validate_edoc(doc, w.trust, {}, kT0, w.defs);
    CHECK_FALSE(r.structure);
    CHECK_FALSE(r.def_binding);
    CHECK_FALSE(r.valid());
  }
  SUBCASE("malformed headers") {
    XNode bad = XNode::element("edoc");
    bad.add(testfx::eeac_content());
    CHECK(code_of([&] { check_header(bad); }) == Errc::InvalidDoc);
    XNode two = wrap(w.bundle("eEAC"), testfx::eeac_content(), kT0);
    two.add(XNode::element("extra"));
    CHECK(code_of([&] { check_header(two); }) == Errc::InvalidDoc);
    CHECK(code_of([&] { check_header(testfx::eeac_content()); }) == Errc::InvalidDoc);
  }
}

TEST_CASE("revocation is monotone: adding records never makes a document valid (randomized)") {
  World w;
  std::mt19937_64 rng(17);
  std::vector<EDoc> docs;
  for (int i = 0; i < 6; ++i) {
    auto values = testfx::eeac_values();
    values["/eEAC/student/id"] = "s00000" + std::to_string(i);
    docs.push_back(w.sign("eEAC", assemble(w.bundle("eEAC").def, values), kT0 + std::chrono::seconds(i)));
  }
  std::vector<RevocationRecord> recs;
  for (int round = 0; round < 6; ++round) {
    std::vector<bool> before;
    const Timestamp at = kT0 + days(static_cast<int>(rng() % 50));
    for (const auto& d : docs) before.push_back(validate_edoc(d, w.trust, recs, at, w.defs).valid());
    recs.push_back(make_revocation(docs[rng() % docs.size()].doc_id(), "r", kT0, w.platform.key, w.platform.cert));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const bool now = validate_edoc(docs[i], w.trust, recs, at, w.defs).valid();
      CHECK_FALSE((!before[i] && now));
    }
  }
}
