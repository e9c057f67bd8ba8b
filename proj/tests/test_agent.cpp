#include <doctest.h>
#include <httplib.h>

#include <thread>

#include "aida/agent.hpp"
#include "platform_env.hpp"

using namespace aida;
using namespace aida::testenv;
using xml::XNode;

namespace {

const fs::path kAttacks = fs::path(testfx::kRoot) / "attacks";

struct AgentWorld : Env {
  std::unique_ptr<agent::DeskAgent> agent;
  std::string token = agent::fresh_token();
  std::vector<std::string> eacs;

  AgentWorld() : Env("agent") {
    for (const char* s : {"s100001", "s100002", "s100003"}) {
      eacs.push_back(payload_attr(store(eeac(s)), "docId"));
    }
    agent::AgentIdentity id{clone(roles.at("professor")).key, roles.at("professor").cert, clone(prof_sign).key,
                            prof_sign.cert, trust};
    agent = std::make_unique<agent::DeskAgent>(std::move(id), std::make_unique<LocalTransport>(*p, port()), token,
                                               [this] { return now; });
    this->port_ = agent->start();
  }
  ~AgentWorld() { agent->stop(); }

  std::uint16_t port_ = 0;

  httplib::Client http(const std::string& tok) const {
    httplib::Client c("127.0.0.1", port_);
    if (!tok.empty()) c.set_default_headers({{agent::kTokenHeader, tok}});
    return c;
  }
  httplib::Result get(const std::string& path) const { return http(token).Get(path); }
  httplib::Result post(const std::string& path, const std::string& body) const {
    return http(token).Post(path, body, "application/xml");
  }

  static std::string apply_body(const std::string& input, std::map<std::string, std::string> values,
                                const std::string& consume_status = "processed") {
    XNode a = XNode::element("Apply");
    a.set_attr("input", input);
    a.set_attr("output", "eEET");
    if (!consume_status.empty()) a.set_attr("consumeStatus", consume_status);
    for (const auto& [path, v] : values) a.add(XNode::leaf("Value", v)).set_attr("path", path);
    return xml::a_canon(a);
  }
  static std::string sign_body(const std::string& digest) {
    XNode s = XNode::element("Sign");
    if (!digest.empty()) s.set_attr("renderDigest", digest);
    return xml::a_canon(s);
  }
};

XNode body_of(const httplib::Result& r) {
  REQUIRE(r);
  return xml::parse(r->body);
}

std::vector<std::string> body_lines(const std::string& text) {
  std::vector<std::string> v;
  const auto blank = text.find("\n\n");
  std::istringstream in(text.substr(blank + 2));
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST_CASE("session token gate") {
  AgentWorld w;
  CHECK(w.token.size() == 64);
  for (const std::string& tok : {std::string(), std::string("nope"), std::string(w.token).replace(0, 1, "z")}) {
    const auto r = w.http(tok).Get("/v1/info");
    REQUIRE(r);
    CHECK(r->status == 401);
    CHECK(xml::parse(r->body).required_attr("code") == "BAD_ARGS");
  }
  const auto ok = w.get("/v1/info");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const XNode info = xml::parse(ok->body);
  CHECK(info.required_attr("apiVersion") == "1");
  CHECK(info.required_attr("signer") == w.prof_sign.cert.subject);
}

TEST_CASE("loopback binding only and a real token") {
  AgentWorld w;
  auto make = [&](std::string tok) {
    agent::AgentIdentity id{clone(w.roles.at("professor")).key, w.roles.at("professor").cert,
                            clone(w.prof_sign).key, w.prof_sign.cert, w.trust};
    return std::make_unique<agent::DeskAgent>(std::move(id), std::make_unique<LocalTransport>(*w.p, w.port()),
                                              std::move(tok));
  };
  auto a = make(agent::fresh_token());
  for (const char* host : {"0.0.0.0", "10.0.0.1", "192.168.1.2", "::"}) {
    try {
      a->start(host, 0);
      FAIL("bound " << host);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadArgs);
    }
  }
  CHECK_THROWS_AS(make("short"), Error);
  // A role certificate cannot sign documents.
  agent::AgentIdentity wrong{clone(w.roles.at("professor")).key, w.roles.at("professor").cert,
                             clone(w.roles.at("professor")).key, w.roles.at("professor").cert, w.trust};
  CHECK_THROWS_AS(agent::DeskAgent(std::move(wrong), std::make_unique<LocalTransport>(*w.p, w.port()),
                                   agent::fresh_token()),
                  Error);
}

TEST_CASE("work list, trusted render and manual fields") {
  AgentWorld w;
  const auto list = body_of(w.get("/v1/search?type=eEAC&status=pending&/eEAC/exam/code=01ABC"));
  CHECK(list.required_attr("count") == "3");
  std::vector<std::string> ids;
  for (const XNode* h : list.children_named("Hit")) ids.push_back(h->required_attr("docId"));
  std::sort(ids.begin(), ids.end());
  auto expected = w.eacs;
  std::sort(expected.begin(), expected.end());
  CHECK(ids == expected);

  const auto r = w.get("/v1/docs/" + w.eacs[0]);
  REQUIRE(r);
  CHECK(r->status == 200);
  const XNode render = xml::parse(r->body);
  CHECK(render.required_attr("signature") == "VALID");
  CHECK(render.required_attr("status") == "pending");
  const auto form = wysiwys::DisplayForm::from_xml(*render.child("DisplayForm"));
  CHECK(form.serialize() == render.child("Text")->inner_text());
  CHECK(form.render_digest() == render.required_attr("renderDigest"));

  const auto missing = w.get("/v1/docs/" + std::string(64, 'a'));
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(w.get("/v1/search")->status == 400);

  const XNode manual = body_of(w.get("/v1/manual?output=eEET"));
  std::vector<std::string> labels;
  for (const XNode* f : manual.children_named("Field")) labels.push_back(f->required_attr("label"));
  CHECK(labels == std::vector<std::string>{"Exam date", "Mark", "Questions"});
  CHECK(manual.required_attr("input") == "eEAC");
}

TEST_CASE("apply without the mark names the field") {
  AgentWorld w;
  auto values = testfx::eeet_manual();
  values.erase("/eEET/exam/mark");
  const auto r = w.post("/v1/apply", AgentWorld::apply_body(w.eacs[0], values));
  REQUIRE(r);
  CHECK(r->status == 422);
  const XNode e = xml::parse(r->body);
  CHECK(e.required_attr("code") == "ManualFieldMissing");
  CHECK(e.required_attr("label") == "Mark");

  values = testfx::eeet_manual();
  values["/eEET/exam/mark"] = "31";
  const auto bad = w.post("/v1/apply", AgentWorld::apply_body(w.eacs[0], values));
  CHECK(bad->status == 422);
  CHECK(xml::parse(bad->body).required_attr("code") == "PatternViolation");
  CHECK(w.agent->signatures() == 0);
}

TEST_CASE("signing needs the previewed renderDigest") {
  AgentWorld w;
  const auto before = w.p->directory().size();
  CHECK(w.post("/v1/sign", AgentWorld::sign_body(""))->status == 400);
  CHECK(w.post("/v1/sign", "<Sign/>")->status == 400);
  CHECK(w.post("/v1/sign", AgentWorld::sign_body(std::string(64, '0')))->status == 409);

  const XNode preview = body_of(w.post("/v1/apply", AgentWorld::apply_body(w.eacs[0], testfx::eeet_manual())));
  std::string digest = preview.required_attr("renderDigest");
  digest[0] = digest[0] == 'a' ? 'b' : 'a';
  const auto r = w.post("/v1/sign", AgentWorld::sign_body(digest));
  CHECK(r->status == 409);
  CHECK(xml::parse(r->body).required_attr("code") == "CONFLICT");
  CHECK(w.agent->signatures() == 0);
  CHECK(w.p->directory().size() == before);
}

TEST_CASE("sign stores the e-EET and moves the e-EAC in one step") {
  AgentWorld w;
  const XNode preview = body_of(w.post("/v1/apply", AgentWorld::apply_body(w.eacs[0], testfx::eeet_manual())));
  CHECK(preview.required_attr("consume") == w.eacs[0]);
  const std::string text = preview.child("Text")->inner_text();
  const auto form = wysiwys::DisplayForm::from_xml(*preview.child("DisplayForm"));
  CHECK(form.serialize() == text);
  CHECK(crypto::sha256_hex(text) == preview.required_attr("renderDigest"));
  const auto lines = body_lines(text);
  CHECK(std::find(lines.begin(), lines.end(), "Mark: 28") != lines.end());

  const auto r = w.post("/v1/sign", AgentWorld::sign_body(preview.required_attr("renderDigest")));
  REQUIRE(r);
  REQUIRE_MESSAGE(r->status == 200, r->body);
  const XNode signed_reply = xml::parse(r->body);
  CHECK(signed_reply.required_attr("renderDigest") == preview.required_attr("renderDigest"));
  const XNode* stored = signed_reply.element_children().at(0);
  const std::string eet = stored->required_attr("docId");
  CHECK(w.agent->signatures() == 1);
  CHECK(w.p->directory().get(w.eacs[0]).attrs.status() == "processed");
  CHECK(w.p->directory().get(eet).attrs.status() == "issued");
  CHECK(w.p->directory().get(w.eacs[1]).attrs.status() == "pending");

  // The stored document renders to the same body lines the preview showed.
  const XNode render = body_of(w.get("/v1/docs/" + eet));
  CHECK(render.required_attr("signature") == "VALID");
  CHECK(body_lines(render.child("Text")->inner_text()) == lines);

  // The preview is spent.
  CHECK(w.post("/v1/sign", AgentWorld::sign_body(preview.required_attr("renderDigest")))->status == 409);
  CHECK(w.agent->signatures() == 1);
  // The work list shrinks.
  CHECK(body_of(w.get("/v1/search?type=eEAC&status=pending")).required_attr("count") == "2");
}

TEST_CASE("concurrent sign requests for one preview sign once") {
  AgentWorld w;
  const XNode preview = body_of(w.post("/v1/apply", AgentWorld::apply_body(w.eacs[1], testfx::eeet_manual())));
  const std::string body = AgentWorld::sign_body(preview.required_attr("renderDigest"));
  std::atomic<int> ok{0}, conflict{0};
  std::vector<std::thread> ts;
  for (int i = 0; i < 6; ++i) {
    ts.emplace_back([&] {
      const auto r = w.post("/v1/sign", body);
      if (r && r->status == 200) ++ok;
      if (r && r->status == 409) ++conflict;
    });
  }
  for (auto& t : ts) t.join();
  CHECK(ok == 1);
  CHECK(conflict == 5);
  CHECK(w.agent->signatures() == 1);
}

TEST_CASE("attack corpus through the agent yields no signature") {
  AgentWorld w;
  const XNode manifest = xml::parse(read_file(kAttacks / "manifest.xml"));
  const auto before = w.p->directory().size();
  for (const XNode* a : manifest.children_named("attack")) {
    CAPTURE(a->required_attr("file"));
    const std::string bytes = read_file(kAttacks / a->required_attr("file"));
    const auto r = w.post("/v1/draft", bytes);
    REQUIRE(r);
    CHECK(r->status == 422);
    const XNode rej = xml::parse(r->body);
    CHECK(rej.required_attr("code") == a->required_attr("code"));
    CHECK(rej.attr("renderDigest") == std::nullopt);
    // Whatever digest a client guesses, nothing gets signed.
    CHECK(w.post("/v1/sign", AgentWorld::sign_body(crypto::sha256_hex(bytes)))->status == 409);
  }
  CHECK(w.agent->signatures() == 0);
  CHECK(w.p->directory().size() == before);

  // The clean base goes through the same path.
  const auto clean = w.post("/v1/draft", read_file(kAttacks / "clean.xml"));
  REQUIRE(clean);
  CHECK(clean->status == 200);
  CHECK(xml::parse(clean->body).name == "Preview");
}
