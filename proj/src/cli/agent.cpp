#include "aida/agent.hpp"

#include <openssl/crypto.h>

#include <httplib.h>

#include <map>
#include <mutex>
#include <thread>

#include "aida/eas.hpp"
#include "aida/error.hpp"
#include "aida/wysiwys.hpp"

namespace aida::agent {

using proto::Command;
using xml::XNode;

namespace {

constexpr const char* kXml = "application/xml; charset=utf-8";

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0;
}

void reply(httplib::Response& res, const XNode& node, int status = 200) {
  res.status = status;
  res.set_content(xml::a_canon(node), kXml);
}

void reply_error(httplib::Response& res, Errc code, const std::string& detail, const std::string& label = {}) {
  XNode e = XNode::element("Error");
  e.set_attr("code", std::string(to_string(code)));
  e.set_attr("detail", detail);
  if (!label.empty()) e.set_attr("label", label);
  reply(res, e, http_status_for(code));
}

XNode preview(const wysiwys::DisplayForm& form) {
  XNode p = XNode::element("Preview");
  p.set_attr("renderDigest", form.render_digest());
  p.add(form.to_xml());
  p.add(XNode::leaf("Text", form.serialize()));
  return p;
}

}  // namespace

std::string fresh_token() { return to_hex(crypto::random_bytes(32)); }

int http_status_for(Errc code) {
  switch (code) {
    case Errc::BadArgs:
    case Errc::SchemaViolation:
      return 400;
    case Errc::NotFound:
      return 404;
    case Errc::Conflict:
    case Errc::Duplicate:
    case Errc::IllegalTransition:
    case Errc::VersionExists:
      return 409;
    case Errc::DeniedCommand:
    case Errc::DeniedDoctype:
    case Errc::DeniedPort:
    case Errc::UnknownRole:
      return 403;
    case Errc::MalformedXml:
    case Errc::ForbiddenConstruct:
    case Errc::ForbiddenChar:
    case Errc::NotNfc:
    case Errc::MissingField:
    case Errc::PatternViolation:
    case Errc::UnknownField:
    case Errc::ManualFieldMissing:
    case Errc::InputTypeMismatch:
    case Errc::Unmapped:
    case Errc::StructureInvalid:
    case Errc::DefinitionMismatch:
    case Errc::InvalidDoc:
    case Errc::UnknownType:
    case Errc::UnknownAttribute:
    case Errc::StaticAttribute:
      return 422;
    case Errc::FrameTooLarge:
    case Errc::MalformedFrame:
    case Errc::Timeout:
    case Errc::ConnectionClosed:
    case Errc::BadResponseSignature:
      return 502;
    default:
      return 500;
  }
}

struct DeskAgent::Impl {
  AgentIdentity id;
  std::string token;
  Clock clock;
  std::mutex platform_mu;
  proto::Client client;
  std::mutex sign_mu;
  std::atomic<std::size_t> signatures{0};

  struct Draft {
    XNode header;
    std::string consume;
    std::string consume_status;
  };
  std::mutex drafts_mu;
  std::map<std::string, Draft> drafts;  // renderDigest -> draft

  httplib::Server server;
  std::thread thread;

  Impl(AgentIdentity identity, std::unique_ptr<proto::Transport> t, std::string tok, Clock c)
      : id(std::move(identity)),
        token(std::move(tok)),
        clock(std::move(c)),
        client(std::move(t), id.role_key, id.role_cert, id.trust, clock) {}

  proto::Response call(const Command& cmd) {
    std::lock_guard lock(platform_mu);
    return eas::expect_ok(client.call(cmd));
  }

  edoc::DefinitionBundle bundle(const std::string& type, int version = 0) {
    std::lock_guard lock(platform_mu);
    return eas::fetch_definition(client, type, version);
  }

  crypto::SignedDoc stored(const std::string& doc_id, XNode* record = nullptr) {
    Command get{"GetEdoc", {}};
    get.add("docId", doc_id);
    const auto r = call(get);
    if (record != nullptr) *record = *r.payload;
    return crypto::SignedDoc::from_xml(*r.payload->child("SignedDoc"));
  }

  XNode remember(const wysiwys::RenderedDraft& draft, const XNode& header, std::string consume,
                 std::string consume_status) {
    const auto& form = draft.form();
    std::lock_guard lock(drafts_mu);
    drafts[form.render_digest()] = {header, std::move(consume), std::move(consume_status)};
    XNode p = preview(form);
    if (!drafts[form.render_digest()].consume.empty()) p.set_attr("consume", drafts[form.render_digest()].consume);
    return p;
  }

  void install();
  void guarded(const httplib::Request& req, httplib::Response& res,
               const std::function<void(const httplib::Request&, httplib::Response&)>& f) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply_error(res, e.code(), e.detail(), e.code() == Errc::ManualFieldMissing ? e.detail() : std::string());
    } catch (const std::exception& e) {
      reply_error(res, Errc::Internal, e.what());
    }
  }

  void info(const httplib::Request&, httplib::Response& res) {
    XNode n = XNode::element("Agent");
    n.set_attr("apiVersion", "1");
    n.set_attr("signer", id.sign_cert.subject);
    n.set_attr("role", id.role_cert.subject);
    reply(res, n);
  }

  void search(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("type")) throw Error(Errc::BadArgs, "type is required");
    Command c{"SearchEdocs", {}};
    c.add("type", req.get_param_value("type"));
    for (const auto& [k, v] : req.params) {
      if (k != "type") c.add("where", v, k);
    }
    reply(res, *call(c).payload);
  }

  void document(const httplib::Request& req, httplib::Response& res) {
    const std::string doc_id = req.matches[1];
    XNode record;
    const auto signed_doc = stored(doc_id, &record);
    const auto doc = edoc::EDoc::from_signed(signed_doc);
    edoc::DefinitionRegistry defs;
    defs.add(bundle(doc.type_id(), doc.version()));
    const auto vr = wysiwys::verify_and_render(signed_doc, defs, id.trust, clock());
    if (const auto* rej = vr.rejection()) {
      reply_error(res, rej->code, rej->detail);
      return;
    }
    XNode out = XNode::element("Render");
    out.set_attr("docId", doc_id);
    out.set_attr("renderDigest", vr.form()->render_digest());
    out.set_attr("signature", vr.report.ok() ? "VALID" : "INVALID");
    if (const XNode* attrs = record.child("attributes")) {
      out.set_attr("status", edoc::AttributeSet::from_xml(*attrs).status());
    }
    out.add(vr.form()->to_xml());
    out.add(XNode::leaf("Text", vr.form()->serialize()));
    reply(res, out);
  }

  void manual(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("output")) throw Error(Errc::BadArgs, "output is required");
    const auto b = bundle(req.get_param_value("output"));
    if (!b.rules) throw Error(Errc::UnknownType, b.type_id() + " has no processing rules");
    XNode m = XNode::element("Manual");
    m.set_attr("output", b.type_id());
    m.set_attr("input", b.rules->input_type);
    for (const auto* r : b.rules->manual()) {
      XNode& f = m.add(XNode::element("Field"));
      f.set_attr("path", r->to);
      f.set_attr("label", r->label);
    }
    reply(res, m);
  }

  void apply(const httplib::Request& req, httplib::Response& res) {
    const XNode a = xml::parse(req.body);
    if (a.name != "Apply") throw Error(Errc::BadArgs, "expected <Apply>");
    const std::string input_id = a.required_attr("input");
    const auto out = bundle(a.required_attr("output"));
    if (!out.rules) throw Error(Errc::UnknownType, out.type_id() + " has no processing rules");
    std::map<std::string, std::string> values;
    for (const XNode* v : a.children_named("Value")) values[v->required_attr("path")] = v->inner_text();

    const auto input = stored(input_id);
    const auto report = crypto::verify_envelope(input, id.trust, clock());
    if (!report.ok()) throw Error(Errc::InvalidDoc, "input document signature does not verify");
    const auto doc = edoc::EDoc::from_signed(input);
    const XNode body = edoc::apply_rules(*out.rules, doc.type_id(), doc.body(), values, out.def);
    const XNode header = edoc::wrap(out, body, clock());
    const auto draft = wysiwys::render_to_sign(header, out);
    const std::string status = a.attr("consumeStatus").value_or("");
    reply(res, remember(draft, header, status.empty() ? std::string() : input_id, status));
  }

  void draft(const httplib::Request& req, httplib::Response& res) {
    edoc::DefinitionRegistry defs;
    try {
      const XNode h = xml::parse(req.body);
      if (const auto t = h.attr("typeId")) {
        const auto v = h.attr("version");
        defs.add(bundle(*t, v ? std::stoi(*v) : 0));
      }
    } catch (const std::exception&) {
      // prepare() reports the real reason.
    }
    auto prepared = wysiwys::prepare(req.body, defs);
    if (const auto* rej = std::get_if<wysiwys::Rejection>(&prepared)) {
      XNode e = rej->to_xml();
      reply(res, e, 422);
      return;
    }
    const auto& d = std::get<wysiwys::RenderedDraft>(prepared);
    reply(res, remember(d, xml::parse(req.body), {}, {}));
  }

  void sign(const httplib::Request& req, httplib::Response& res) {
    const XNode s = xml::parse(req.body);
    const auto digest = s.attr("renderDigest");
    if (s.name != "Sign" || !digest || digest->empty()) throw Error(Errc::BadArgs, "renderDigest is required");

    std::lock_guard serial(sign_mu);
    Draft d;
    {
      std::lock_guard lock(drafts_mu);
      const auto it = drafts.find(*digest);
      if (it == drafts.end()) throw Error(Errc::Conflict, "no preview with this renderDigest");
      d = it->second;
    }
    // Render again from the kept header; sign only if the user saw exactly this.
    const auto b = bundle(d.header.required_attr("typeId"), std::stoi(d.header.required_attr("version")));
    const auto rendered = wysiwys::render_to_sign(d.header, b);
    if (rendered.form().render_digest() != *digest) throw Error(Errc::Conflict, "render changed since the preview");
    const auto signed_doc = wysiwys::sign_rendered(rendered, id.sign_key, id.sign_cert, clock());
    ++signatures;

    Command store{"StoreEdoc", {}};
    store.add_node("doc", signed_doc.to_xml());
    if (!d.consume.empty()) store.add("consume", d.consume).add("consumeStatus", d.consume_status);
    const auto r = call(store);
    {
      std::lock_guard lock(drafts_mu);
      drafts.erase(*digest);
    }
    XNode out = XNode::element("Signed");
    out.set_attr("renderDigest", *digest);
    out.add(*r.payload);
    reply(res, out);
  }
};

void DeskAgent::Impl::install() {
  server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    const std::string got = req.get_header_value(kTokenHeader);
    if (got.size() != token.size() || CRYPTO_memcmp(got.data(), token.data(), token.size()) != 0) {
      reply_error(res, Errc::BadArgs, "missing or wrong session token");
      res.status = 401;
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  auto route = [this](auto method) {
    return [this, method](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [this, method](const httplib::Request& q, httplib::Response& s) { (this->*method)(q, s); });
    };
  };
  server.Get("/v1/info", route(&Impl::info));
  server.Get("/v1/search", route(&Impl::search));
  server.Get(R"(/v1/docs/([0-9a-f]{64}))", route(&Impl::document));
  server.Get("/v1/manual", route(&Impl::manual));
  server.Post("/v1/apply", route(&Impl::apply));
  server.Post("/v1/draft", route(&Impl::draft));
  server.Post("/v1/sign", route(&Impl::sign));
}

DeskAgent::DeskAgent(AgentIdentity identity, std::unique_ptr<proto::Transport> platform, std::string token,
                     Clock clock)
    : impl_(std::make_unique<Impl>(std::move(identity), std::move(platform), std::move(token), std::move(clock))) {
  if (impl_->token.size() < 16) throw Error(Errc::BadArgs, "session token too short");
  if (!impl_->id.sign_cert.has(crypto::Purpose::Sign)) throw Error(Errc::PurposeMismatch, "signing certificate");
  impl_->install();
}

DeskAgent::~DeskAgent() { stop(); }

std::uint16_t DeskAgent::start(const std::string& host, std::uint16_t port) {
  if (!is_loopback(host)) throw Error(Errc::BadArgs, "the agent binds loopback addresses only");
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(Errc::Io, "agent cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void DeskAgent::run(const std::string& host, std::uint16_t port) {
  start(host, port);
  if (impl_->thread.joinable()) impl_->thread.join();
}

void DeskAgent::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

const std::string& DeskAgent::token() const { return impl_->token; }

std::size_t DeskAgent::signatures() const { return impl_->signatures; }

}  // namespace aida::agent
