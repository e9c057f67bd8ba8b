#include <doctest.h>

#include <filesystem>
#include <random>

#include "aida/common.hpp"
#include "aida/crypto.hpp"
#include "aida/error.hpp"
#include "aida/typedef.hpp"
#include "aida/xml.hpp"
#include "gen.hpp"

using namespace aida;
using namespace aida::xml;

namespace {

const std::filesystem::path kFixtures = AIDA_FIXTURES_DIR;

Errc parse_error(std::string_view src) {
  try {
    parse(src);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected parse to fail: " << src);
  return Errc::Internal;
}

TypeDef eeac_def() { return TypeDef::from_xml(parse(read_file(kFixtures / "defs/eEAC/1/typedef.xml"))); }
XNode eeac_content() { return parse(read_file(kFixtures / "samples/eeac-content.xml")); }

bool has_violation(const ValidationReport& r, Violation::Kind kind, const std::string& path) {
  for (const auto& v : r.violations) {
    if (v.kind == kind && v.path == path) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("parse builds element, attributes and text") {
  XNode n = parse(R"(<a b="2" a1="1">x</a>)");
  CHECK(n.name == "a");
  REQUIRE(n.attrs.size() == 2);
  CHECK(n.attrs[0] == std::pair<std::string, std::string>{"b", "2"});
  CHECK(n.attrs[1] == std::pair<std::string, std::string>{"a1", "1"});
  REQUIRE(n.children.size() == 1);
  CHECK(n.children[0].is_text());
  CHECK(n.children[0].text == "x");
}

TEST_CASE("a_canon sorts attributes and escapes") {
  CHECK(a_canon(parse(R"(<a b="2" a="1">x</a>)")) == R"(<a a="1" b="2">x</a>)");
  CHECK(a_canon(parse(R"(<a t='say "hi" &amp; &lt;go&gt;'>1 &lt; 2 &amp;&amp; 3 &gt; 2</a>)")) ==
        R"(<a t="say &quot;hi&quot; &amp; &lt;go&gt;">1 &lt; 2 &amp;&amp; 3 &gt; 2</a>)");
  CHECK(a_canon(parse("<a/>")) == "<a></a>");
  CHECK(a_canon(parse("<a>&#x41;&#66;&apos;</a>")) == "<a>AB'</a>");
}

TEST_CASE("whitespace between elements is dropped, text whitespace kept") {
  CHECK(a_canon(parse("<a>\n  <b> x </b>\n  <c/>\n</a>")) == "<a><b> x </b><c></c></a>");
  CHECK(a_canon(parse("<a>  </a>")) == "<a>  </a>");
  CHECK(a_canon(parse("<a>x <b/> y</a>")) == "<a>x <b></b> y</a>");
}

TEST_CASE("forbidden constructs are rejected") {
  CHECK(parse_error("<a><!--hidden--></a>") == Errc::ForbiddenConstruct);
  CHECK(parse_error("<!--x--><a/>") == Errc::ForbiddenConstruct);
  CHECK(parse_error("<a><?php echo 1 ?></a>") == Errc::ForbiddenConstruct);
  CHECK(parse_error("<?xml version=\"1.0\"?><a/>") == Errc::ForbiddenConstruct);
  CHECK(parse_error("<!DOCTYPE a [<!ENTITY x \"y\">]><a/>") == Errc::ForbiddenConstruct);
  CHECK(parse_error("<a><![CDATA[x]]></a>") == Errc::ForbiddenConstruct);
}

TEST_CASE("malformed input") {
  CHECK(parse_error("") == Errc::MalformedXml);
  CHECK(parse_error("<a>") == Errc::MalformedXml);
  CHECK(parse_error("<a></b>") == Errc::MalformedXml);
  CHECK(parse_error("<a x=\"1\" x=\"2\"/>") == Errc::MalformedXml);
  CHECK(parse_error("<a x=1/>") == Errc::MalformedXml);
  CHECK(parse_error("<ns:a/>") == Errc::MalformedXml);
  CHECK(parse_error("<a>&bogus;</a>") == Errc::MalformedXml);
  CHECK(parse_error("<a/><b/>") == Errc::MalformedXml);
  CHECK(parse_error("<1a/>") == Errc::MalformedXml);
  CHECK(parse_error("<a>\xC3</a>") == Errc::MalformedXml);
  CHECK(parse_error("<a>\xC0\xAF</a>") == Errc::MalformedXml);
}

TEST_CASE("invisible and control characters are rejected") {
  CHECK(parse_error("<a>x\u200Bz</a>") == Errc::ForbiddenChar);
  CHECK(parse_error("<a>x\u202Ez</a>") == Errc::ForbiddenChar);
  CHECK(parse_error("<a t=\"\u2060\"/>") == Errc::ForbiddenChar);
  CHECK(parse_error("\xEF\xBB\xBF<a/>") == Errc::ForbiddenChar);
  CHECK(parse_error("<a>&#x200B;</a>") == Errc::ForbiddenChar);
  CHECK(parse_error("<a>&#7;</a>") == Errc::ForbiddenChar);
  CHECK_NOTHROW(parse("<a>\t\r\n</a>"));
}

TEST_CASE("every forbidden code point is rejected in text and attributes") {
  std::vector<char32_t> forbidden;
  for (char32_t cp = 0; cp < 0x20; ++cp) {
    if (cp != 0x09 && cp != 0x0A && cp != 0x0D) forbidden.push_back(cp);
  }
  forbidden.push_back(0x7F);
  for (char32_t cp = 0x200B; cp <= 0x200F; ++cp) forbidden.push_back(cp);
  for (char32_t cp = 0x202A; cp <= 0x202E; ++cp) forbidden.push_back(cp);
  forbidden.push_back(0x2060);
  forbidden.push_back(0xFEFF);

  std::mt19937_64 rng(7);
  for (char32_t cp : forbidden) {
    CHECK(is_forbidden_codepoint(cp));
    std::string ch;
    append_utf8(ch, cp);
    for (int trial = 0; trial < 5; ++trial) {
      const std::string pre = testgen::random_text(rng);
      std::string text_doc = "<a>";
      text_doc += pre;
      text_doc += ch;
      text_doc += "</a>";
      std::string attr_doc = "<a k=\"" + ch + "\"/>";
      CHECK(parse_error(text_doc) == Errc::ForbiddenChar);
      CHECK(parse_error(attr_doc) == Errc::ForbiddenChar);
    }
  }
  for (char32_t cp : {U'a', U'\u00E9', U'\u200A', U'\u2061', U'\u202F', U'\uFEFE'}) {
    CHECK_FALSE(is_forbidden_codepoint(cp));
  }
}

TEST_CASE("non-NFC input is rejected, not normalized") {
  CHECK(parse_error("<a>e\xCC\x81</a>") == Errc::NotNfc);  // e + combining acute
  CHECK(parse_error("<a>e&#x301;</a>") == Errc::NotNfc);
  CHECK(a_canon(parse("<a>\xC3\xA9</a>")) == "<a>\xC3\xA9</a>");
}

TEST_CASE("canonical idempotence and attribute order insensitivity (randomized)") {
  std::mt19937_64 rng(20261018);
  for (int i = 0; i < 300; ++i) {
    const XNode n = testgen::random_element(rng, 0);
    const std::string canon = a_canon(n);
    CHECK(a_canon(parse(canon)) == canon);
    std::string src;
    testgen::shuffled_source(rng, n, src);
    CHECK(a_canon(parse(src)) == canon);
    CHECK(a_canon(parse(pretty(n))) == canon);
  }
}

TEST_CASE("fixture e-EAC canonical bytes match the frozen file and digest") {
  const std::string canon = a_canon(eeac_content());
  CHECK(canon == read_file(kFixtures / "samples/eeac-content.canon"));
  // sha256sum fixtures/samples/eeac-content.canon
  CHECK(crypto::sha256_hex(canon) == "d2b81f286569d01c72106a555cda69040a58929c8d93644d6781bc4793456508");
}

TEST_CASE("validate_structure on the e-EAC fixture") {
  const TypeDef def = eeac_def();
  const XNode doc = eeac_content();
  CHECK(validate_structure(doc, def).ok());

  SUBCASE("extra element") {
    XNode bad = doc;
    bad.add(XNode::leaf("secret", "x"));
    const auto r = validate_structure(bad, def);
    CHECK(has_violation(r, Violation::Kind::UnknownElement, "/eEAC/secret"));
  }
  SUBCASE("missing required id") {
    XNode bad = doc;
    auto& kids = bad.child("student")->children;
    std::erase_if(kids, [](const XNode& c) { return c.name == "id"; });
    CHECK(has_violation(validate_structure(bad, def), Violation::Kind::MissingRequired, "/eEAC/student/id"));
  }
  SUBCASE("pattern, repetition, attributes, text, root") {
    XNode bad = doc;
    bad.child("exam")->child("code")->children = {XNode::make_text("ABC")};
    bad.child("exam")->add(XNode::leaf("name", "twice"));
    bad.child("student")->set_attr("hidden", "1");
    bad.child("faculty")->add_text("loose text");
    const auto r = validate_structure(bad, def);
    CHECK(has_violation(r, Violation::Kind::PatternMismatch, "/eEAC/exam/code"));
    CHECK(has_violation(r, Violation::Kind::NotRepeatable, "/eEAC/exam/name"));
    CHECK(has_violation(r, Violation::Kind::UnknownAttribute, "/eEAC/student/@hidden"));
    CHECK(has_violation(r, Violation::Kind::TextNotAllowed, "/eEAC/faculty"));
    CHECK(has_violation(validate_structure(XNode::element("eEET"), def), Violation::Kind::WrongRoot, "/eEET"));
  }
}

TEST_CASE("closure: an accepted document only uses defined paths") {
  const TypeDef def = eeac_def();
  std::mt19937_64 rng(99);
  // Mutate the fixture by inserting random elements at random places; every
  // mutant that validates must only contain defined paths.
  const XNode base = eeac_content();
  int accepted = 0;
  for (int i = 0; i < 200; ++i) {
    XNode doc = base;
    std::vector<XNode*> elems;
    std::function<void(XNode&)> collect = [&](XNode& n) {
      if (!n.is_element()) return;
      elems.push_back(&n);
      for (auto& c : n.children) collect(c);
    };
    collect(doc);
    XNode* target = elems[rng() % elems.size()];
    if (rng() % 2) target->add(XNode::leaf(rng() % 2 ? "id" : testgen::random_name(rng), "s000001"));
    const bool ok = validate_structure(doc, def).ok();
    std::function<void(const XNode&, const std::string&)> walk = [&](const XNode& n, const std::string& path) {
      if (!n.is_element()) return;
      CHECK(def.has_path(path));
      for (const auto& c : n.children) walk(c, path + "/" + c.name);
    };
    if (ok) {
      ++accepted;
      walk(doc, "/" + doc.name);
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("typedef round trip and definition errors") {
  const TypeDef def = eeac_def();
  CHECK(a_canon(TypeDef::from_xml(def.to_xml()).to_xml()) == a_canon(def.to_xml()));
  CHECK(def.text_paths().size() == 9);
  CHECK(def.find("/eEAC/exam")->allowed_children == std::vector<std::string>{"code", "name", "room"});

  auto bad = [](const char* src) {
    try {
      TypeDef::from_xml(parse(src));
    } catch (const Error& e) {
      return e.code() == Errc::MalformedXml;
    }
    return false;
  };
  CHECK(bad(R"(<typedef typeId="t" version="1" root="r"><element path="/r"/><element path="/r/a/b"/></typedef>)"));
  CHECK(bad(R"(<typedef typeId="t" version="0" root="r"><element path="/r"/></typedef>)"));
  CHECK(bad(R"(<typedef typeId="t" version="1" root="r"><element path="/r" pattern="("/></typedef>)"));
  CHECK(bad(R"(<typedef typeId="t" version="1" root="r"><element path="/q"/></typedef>)"));
}
