#include "aida/cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "aida/agent.hpp"
#include "aida/demo.hpp"
#include "aida/eas.hpp"
#include "aida/error.hpp"

namespace aida::cli {

namespace fs = std::filesystem;
using proto::Command;
using xml::XNode;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::BadArgs:
      return kUsage;
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
      return kRefused;
    case Errc::UnsupportedAlgorithm:
    case Errc::IssuerNotAuthorized:
    case Errc::IssuerExpired:
    case Errc::PurposeMismatch:
    case Errc::KeyCertMismatch:
    case Errc::OriginalInvalid:
    case Errc::BadKeyStore:
    case Errc::BadPassphrase:
    case Errc::BadSignature:
    case Errc::BadResponseSignature:
      return kCrypto;
    case Errc::Io:
      return kIo;
    default:
      return kPlatform;
  }
}

Profile Profile::load(const fs::path& path) {
  const XNode n = xml::parse(read_file(path));
  if (n.name != "profile") throw Error(Errc::BadArgs, path.string() + ": expected <profile>");
  const fs::path base = path.parent_path();
  auto p = [&](const char* attr) -> fs::path {
    const auto v = n.attr(attr);
    if (!v || v->empty()) return {};
    const fs::path f(*v);
    return f.is_absolute() ? f : base / f;
  };
  Profile out;
  out.name = n.attr("name").value_or("");
  out.endpoint = n.attr("endpoint").value_or("");
  out.key = p("key");
  out.cert = p("cert");
  out.sign_key = p("signKey");
  out.sign_cert = p("signCert");
  out.trust = p("trust");
  out.defs = p("defs");
  return out;
}

void Profile::check_endpoint() const {
  std::string rest = endpoint;
  for (const char* scheme : {"tcp://", "http://"}) {
    if (rest.rfind(scheme, 0) == 0) rest = rest.substr(std::string(scheme).size());
  }
  const auto colon = rest.rfind(':');
  bool ok = colon != std::string::npos && colon > 0 && colon + 1 < rest.size() &&
            rest.find('/') == std::string::npos;
  if (ok) {
    for (char c : rest.substr(colon + 1)) ok = ok && c >= '0' && c <= '9';
    ok = ok && rest.size() - colon - 1 <= 5 && std::stoul(rest.substr(colon + 1)) <= 65535;
  }
  if (!ok) throw Error(Errc::BadArgs, "endpoint must be tcp://host:port, http://host:port or host:port: '" + endpoint + "'");
}

namespace {

struct Globals {
  std::string profile;
  std::string endpoint;
  std::string key;
  std::string cert;
  std::string sign_key;
  std::string sign_cert;
  std::string trust;
  std::string defs;
  std::string passphrase_env = "AIDA_PASSPHRASE";
  bool xml = false;
};

// Everything a command needs, resolved lazily from flags and the profile.
class Context {
 public:
  Context(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {
    if (!g.profile.empty()) {
      p_ = Profile::load(g.profile);
    } else if (const char* env = std::getenv("AIDA_PROFILE")) {
      p_ = Profile::load(env);
    }
    auto over = [](fs::path& dst, const std::string& v) {
      if (!v.empty()) dst = v;
    };
    if (!g.endpoint.empty()) p_.endpoint = g.endpoint;
    over(p_.key, g.key);
    over(p_.cert, g.cert);
    over(p_.sign_key, g.sign_key);
    over(p_.sign_cert, g.sign_cert);
    over(p_.trust, g.trust);
    over(p_.defs, g.defs);
  }

  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }
  bool xml() const { return g_.xml; }
  const Profile& profile() const { return p_; }

  std::string passphrase() const {
    const char* v = std::getenv(g_.passphrase_env.c_str());
    if (v == nullptr) throw Error(Errc::BadPassphrase, "set " + g_.passphrase_env + " to the key store passphrase");
    return v;
  }

  crypto::PrivateKey key_at(const fs::path& p, const char* what) const {
    if (p.empty()) throw Error(Errc::BadArgs, std::string(what) + " is not configured");
    return crypto::load_key_store(p, passphrase());
  }
  crypto::MiniCert cert_at(const fs::path& p, const char* what) const {
    if (p.empty()) throw Error(Errc::BadArgs, std::string(what) + " is not configured");
    return crypto::load_cert(p);
  }

  const crypto::TrustStore& trust() {
    if (!trust_) {
      if (p_.trust.empty()) throw Error(Errc::BadArgs, "trust store is not configured (--trust)");
      trust_ = crypto::TrustStore::load(p_.trust);
    }
    return *trust_;
  }

  proto::Client& client() {
    if (!client_) {
      if (p_.endpoint.empty()) throw Error(Errc::BadArgs, "platform endpoint is not configured (--endpoint)");
      p_.check_endpoint();
      role_key_ = key_at(p_.key, "role key");
      const auto cert = cert_at(p_.cert, "role certificate");
      if (role_key_.public_key() != cert.subject_key) throw Error(Errc::KeyCertMismatch, "role key and certificate");
      client_.emplace(proto::open_transport(p_.endpoint), role_key_, cert, trust());
    }
    return *client_;
  }

  proto::Response call(const Command& c) { return eas::expect_ok(client().call(c)); }

  // Local definitions when --defs is set, otherwise fetched for `type`.
  edoc::DefinitionRegistry defs_for(const std::string& type, int version) {
    if (!p_.defs.empty()) return edoc::DefinitionRegistry::load_tree(p_.defs);
    edoc::DefinitionRegistry r;
    if (!type.empty()) r.add(eas::fetch_definition(client(), type, version));
    return r;
  }

  void emit(const XNode& node, const std::string& human) {
    if (xml()) {
      out_ << xml::a_canon(node) << "\n";
    } else {
      out_ << human;
      if (!human.empty() && human.back() != '\n') out_ << "\n";
    }
  }

 private:
  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
  Profile p_;
  std::optional<crypto::TrustStore> trust_;
  crypto::PrivateKey role_key_;
  std::optional<proto::Client> client_;
};

std::pair<std::string, int> type_of_draft(const std::string& bytes) {
  try {
    const XNode h = xml::parse(bytes);
    const XNode* target = &h;
    if (h.name == "SignedDoc") {
      const XNode* content = h.child("Content");
      target = content != nullptr ? content->child("edoc") : nullptr;
    }
    if (target == nullptr || target->name != "edoc") return {};
    const auto v = target->attr("version");
    return {target->attr("typeId").value_or(""), v ? std::stoi(*v) : 0};
  } catch (const std::exception&) {
    return {};
  }
}

bool is_signed_doc(const std::string& bytes) {
  try {
    return xml::parse(bytes).name == "SignedDoc";
  } catch (const std::exception&) {
    return false;
  }
}

std::pair<std::string, std::string> split_kv(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::BadArgs, "expected key=value: " + s);
  return {s.substr(0, eq), s.substr(eq + 1)};
}

XNode rejection_node(const wysiwys::Rejection& r) { return r.to_xml(); }

std::string rejection_text(const wysiwys::Rejection& r) {
  return "REJECTED " + std::string(to_string(r.code)) + ": " + r.detail + "\n";
}

std::string attrs_text(const XNode& attrs) {
  std::string s;
  for (const auto& c : attrs.element_children()) {
    s += " " + c->required_attr("name") + "=" + c->attr("value").value_or(c->inner_text());
  }
  return s;
}

// ---- commands -------------------------------------------------------------

int cmd_keygen(Context& ctx, const std::string& out, const std::string& alg) {
  const auto key = crypto::PrivateKey::generate(crypto::sig_alg_from(alg));
  crypto::save_key_store(out, key, ctx.passphrase());
  XNode n = XNode::element("Key");
  n.set_attr("alg", std::string(crypto::to_string(key.alg())));
  n.set_attr("keyId", key.public_key().key_id());
  n.set_attr("path", out);
  ctx.emit(n, "key " + key.public_key().key_id() + " written to " + out);
  return kOk;
}

struct CertArgs {
  std::string subject_key, subject, purposes, issuer_key, issuer_cert, out;
  std::uint64_t serial = 0;
  int days_valid = 365;
  bool self_signed = false;
};

int cmd_cert_issue(Context& ctx, const CertArgs& a) {
  const auto subject_key = crypto::load_key_store(a.subject_key, ctx.passphrase());
  crypto::MiniCert body;
  body.subject = a.subject;
  body.subject_key = subject_key.public_key();
  body.serial = a.serial;
  body.not_before = now_utc();
  body.not_after = body.not_before + days(a.days_valid);
  std::string list = a.purposes;
  while (!list.empty()) {
    const auto comma = list.find(',');
    body.purposes.insert(crypto::purpose_from(list.substr(0, comma)));
    list = comma == std::string::npos ? "" : list.substr(comma + 1);
  }
  crypto::MiniCert cert;
  if (a.self_signed) {
    cert = crypto::self_sign(body, subject_key);
  } else {
    if (a.issuer_key.empty() || a.issuer_cert.empty()) {
      throw Error(Errc::BadArgs, "--issuer-key and --issuer-cert are required unless --self-signed");
    }
    cert = crypto::issue_cert(body, crypto::load_key_store(a.issuer_key, ctx.passphrase()),
                              crypto::load_cert(a.issuer_cert), body.not_before);
  }
  crypto::save_cert(a.out, cert);
  ctx.emit(cert.to_xml(), "certificate for " + cert.subject + " written to " + a.out);
  return kOk;
}

int cmd_doc_new(Context& ctx, const std::string& type, int version, const std::vector<std::string>& fields,
                const std::string& out) {
  const auto defs = ctx.defs_for(type, version);
  const auto* b = version ? defs.find(type, version) : defs.latest(type);
  if (b == nullptr) throw Error(Errc::UnknownType, type);
  std::map<std::string, std::string> values;
  for (const auto& f : fields) values.insert(split_kv(f));
  const XNode header = edoc::wrap(*b, edoc::assemble(b->def, values), now_utc());
  const std::string bytes = xml::a_canon(header);
  if (out.empty()) {
    ctx.out() << bytes << "\n";
  } else {
    write_file_atomic(out, bytes);
    XNode n = XNode::element("Draft");
    n.set_attr("path", out);
    ctx.emit(n, "draft written to " + out);
  }
  return kOk;
}

int show_verified(Context& ctx, const std::string& bytes, std::optional<Timestamp> at) {
  const auto signed_doc = crypto::SignedDoc::parse(bytes);
  const auto [type, version] = type_of_draft(bytes);
  if (type.empty()) {
    // Not an e-document (a receipt, a revocation record): envelope only.
    const auto rep = crypto::verify_envelope(signed_doc, ctx.trust(), at.value_or(now_utc()));
    XNode n = XNode::element("Verified");
    n.set_attr("signature", rep.ok() ? "VALID" : "INVALID");
    n.set_attr("signer", rep.signer);
    n.set_attr("purpose", std::string(crypto::to_string(rep.purpose)));
    n.set_attr("chain", std::string(crypto::to_string(rep.chain.status)));
    n.add(signed_doc.content);
    std::string human = std::string(rep.ok() ? "VALID" : "INVALID") + "\nSigner: " + rep.signer +
                        "\nPurpose: " + std::string(crypto::to_string(rep.purpose)) +
                        "\nChain: " + std::string(crypto::to_string(rep.chain.status)) + "\n";
    if (!rep.detail.empty()) human += "Detail: " + rep.detail + "\n";
    human += "\n" + xml::a_canon(signed_doc.content) + "\n";
    ctx.emit(n, human);
    return rep.ok() ? kOk : kCrypto;
  }
  const auto defs = ctx.defs_for(type, version);
  const auto vr = wysiwys::verify_and_render(signed_doc, defs, ctx.trust(), at.value_or(now_utc()));
  if (const auto* rej = vr.rejection()) {
    ctx.emit(rejection_node(*rej), rejection_text(*rej));
    return kRefused;
  }
  XNode n = XNode::element("Verified");
  n.set_attr("signature", vr.report.ok() ? "VALID" : "INVALID");
  n.set_attr("docId", crypto::sha256_hex(signed_doc.canonical()));
  n.add(vr.form()->to_xml());
  ctx.emit(n, std::string(vr.report.ok() ? "VALID" : "INVALID") + "\n" + vr.form()->serialize());
  return vr.report.ok() ? kOk : kCrypto;
}

int cmd_doc_view(Context& ctx, const std::string& file) {
  const std::string bytes = read_file(file);
  const auto [type, version] = type_of_draft(bytes);
  if (!is_signed_doc(bytes)) {
    const auto prepared = wysiwys::prepare(bytes, ctx.defs_for(type, version));
    if (const auto* rej = std::get_if<wysiwys::Rejection>(&prepared)) {
      ctx.emit(rejection_node(*rej), rejection_text(*rej));
      return kRefused;
    }
    const auto& form = std::get<wysiwys::RenderedDraft>(prepared).form();
    ctx.emit(form.to_xml(), form.serialize());
    return kOk;
  }
  return show_verified(ctx, bytes, std::nullopt);
}

int cmd_doc_sign(Context& ctx, const std::string& file, const std::string& out) {
  const std::string bytes = read_file(file);
  const auto [type, version] = type_of_draft(bytes);
  const auto prepared = wysiwys::prepare(bytes, ctx.defs_for(type, version));
  if (const auto* rej = std::get_if<wysiwys::Rejection>(&prepared)) {
    ctx.emit(rejection_node(*rej), rejection_text(*rej));
    return kRefused;
  }
  const auto& draft = std::get<wysiwys::RenderedDraft>(prepared);
  const auto key = ctx.key_at(ctx.profile().sign_key, "signing key");
  const auto cert = ctx.cert_at(ctx.profile().sign_cert, "signing certificate");
  const auto signed_doc = wysiwys::sign_rendered(draft, key, cert, now_utc());
  write_file_atomic(out, signed_doc.canonical());
  XNode n = XNode::element("Signed");
  n.set_attr("docId", crypto::sha256_hex(signed_doc.canonical()));
  n.set_attr("renderDigest", draft.form().render_digest());
  n.set_attr("path", out);
  n.add(draft.form().to_xml());
  ctx.emit(n, draft.form().serialize() + "\nsigned " + crypto::sha256_hex(signed_doc.canonical()) + " -> " + out);
  return kOk;
}

int cmd_submit(Context& ctx, const std::string& file, const std::string& receipt_out, const std::string& consume,
               const std::string& consume_status) {
  const auto signed_doc = crypto::SignedDoc::parse(read_file(file));
  Command c{"StoreEdoc", {}};
  c.add_node("doc", signed_doc.to_xml());
  if (!consume.empty()) c.add("consume", consume).add("consumeStatus", consume_status);
  const auto r = ctx.call(c);
  if (!receipt_out.empty()) write_file_atomic(receipt_out, xml::a_canon(*r.payload->child("SignedDoc")));
  ctx.emit(*r.payload, "stored " + r.payload->required_attr("docId") + " status " + r.payload->required_attr("status"));
  return kOk;
}

int cmd_search(Context& ctx, const std::string& type, const std::vector<std::string>& attrs,
               const std::vector<std::string>& fields) {
  Command c{"SearchEdocs", {}};
  c.add("type", type);
  for (const auto& a : attrs) {
    const auto [k, v] = split_kv(a);
    c.add("where", v, k);
  }
  for (const auto& f : fields) {
    const auto [k, v] = split_kv(f);
    c.add("where", v, k);
  }
  const auto r = ctx.call(c);
  std::string human;
  for (const XNode* h : r.payload->children_named("Hit")) {
    human += h->required_attr("docId");
    for (const XNode* f : h->children_named("Field")) human += "  " + f->required_attr("value");
    if (const XNode* a = h->child("attributes")) human += " |" + attrs_text(*a);
    human += "\n";
  }
  human += r.payload->required_attr("count") + " match(es)\n";
  ctx.emit(*r.payload, human);
  return kOk;
}

int cmd_set_status(Context& ctx, const std::string& doc_id, const std::string& status, const std::string& expect) {
  Command c{"SetAttribute", {}};
  c.add("docId", doc_id).add("name", "status").add("value", status);
  if (!expect.empty()) c.add("expect", expect);
  const auto r = ctx.call(c);
  ctx.emit(*r.payload, doc_id + attrs_text(*r.payload));
  return kOk;
}

int cmd_revoke(Context& ctx, const std::string& doc_id, const std::string& reason) {
  Command c{"RevokeEdoc", {}};
  c.add("docId", doc_id).add("reason", reason);
  const auto r = ctx.call(c);
  const auto rec = edoc::RevocationRecord::from_signed(crypto::SignedDoc::from_xml(*r.payload));
  ctx.emit(*r.payload, "revoked " + rec.doc_id + " at " + format_ts(rec.revoked_at) + ": " + rec.reason);
  return kOk;
}

int cmd_validate(Context& ctx, const std::string& doc_id, const std::string& file, const std::string& at) {
  Command c{"ValidateEdoc", {}};
  if (!file.empty()) {
    c.add_node("doc", crypto::SignedDoc::parse(read_file(file)).to_xml());
  } else if (!doc_id.empty()) {
    c.add("docId", doc_id);
  } else {
    throw Error(Errc::BadArgs, "give a docId or --file");
  }
  if (!at.empty()) c.add("at", at);
  const auto r = ctx.call(c);
  const auto report = edoc::ValidityReport::from_xml(*r.payload);
  std::string human = report.valid() ? "VALID\n" : "NOT VALID\n";
  human += std::string("structure=") + (report.structure ? "ok" : "fail") +
           " definition=" + (report.def_binding ? "ok" : "fail") + " signatures=" + (report.signatures ? "ok" : "fail") +
           " status=" + report.status_value + (report.status ? "" : "(not valid)") +
           " revoked=" + (report.revoked ? "yes" : "no") +
           " withinValidityPeriod=" + (report.within_validity_period ? "yes" : "no") + "\n";
  for (const auto& d : report.details) human += "  " + d + "\n";
  ctx.emit(*r.payload, human);
  return report.valid() ? kOk : kRefused;
}

int cmd_get(Context& ctx, const std::string& doc_id, const std::string& out) {
  Command c{"GetEdoc", {}};
  c.add("docId", doc_id);
  const auto r = ctx.call(c);
  const std::string bytes = xml::a_canon(*r.payload->child("SignedDoc"));
  if (!out.empty()) write_file_atomic(out, bytes);
  std::string human = doc_id;
  if (const XNode* a = r.payload->child("attributes")) human += attrs_text(*a);
  if (!out.empty()) human += "\nwritten to " + out;
  ctx.emit(*r.payload, human);
  return kOk;
}

int cmd_put_def(Context& ctx, const std::string& path) {
  const auto bundle = fs::is_directory(path) ? edoc::DefinitionBundle::load_dir(path)
                                             : edoc::DefinitionBundle::from_xml(xml::parse(read_file(path)));
  Command c{"PutDefinition", {}};
  c.add_node("bundle", bundle.to_xml());
  const auto r = ctx.call(c);
  ctx.emit(*r.payload, "stored definition " + bundle.type_id() + "/" + std::to_string(bundle.version()));
  return kOk;
}

int cmd_set_rolemap(Context& ctx, const std::string& path) {
  const auto map = platform::RoleMap::from_xml(xml::parse(read_file(path)));
  Command c{"SetRoleMap", {}};
  c.add_node("rolemap", map.to_xml());
  const auto r = ctx.call(c);
  ctx.emit(*r.payload, "role map replaced (" + std::to_string(map.entries.size()) + " roles)");
  return kOk;
}

int cmd_port(Context& ctx, const std::string& name, const std::string& action) {
  Command c{"PortControl", {}};
  c.add("port", name).add("action", action);
  const auto r = ctx.call(c);
  std::string human;
  for (const XNode* p : r.payload->children_named("port")) {
    human += p->required_attr("name") + " " + p->attr("tcpPort").value_or("?") + " " +
             (p->attr("running") == "true" ? "running" : "stopped") + "\n";
  }
  ctx.emit(*r.payload, human);
  return kOk;
}

int cmd_log(Context& ctx, std::uint64_t from, std::uint64_t to) {
  Command c{"GetLog", {}};
  if (from > 0) c.add("from", std::to_string(from));
  if (to > 0) c.add("to", std::to_string(to));
  const auto r = ctx.call(c);
  std::string human;
  for (const auto& e : r.payload->element_children()) human += xml::a_canon(*e) + "\n";
  ctx.emit(*r.payload, human);
  return kOk;
}

// ---- long-running services ------------------------------------------------

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  int sig = 0;
  sigwait(&set, &sig);
}

std::pair<std::string, std::uint16_t> host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::BadArgs, "expected host:port: " + s);
  const auto port = std::stoul(s.substr(colon + 1));
  if (port > 65535) throw Error(Errc::BadArgs, "port out of range: " + s);
  return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

int cmd_platform(Context& ctx, std::string data_root, const std::string& ports_file, const std::string& pass_env) {
  if (data_root.empty()) {
    const char* env = std::getenv("AIDA_DATA_ROOT");
    if (env == nullptr) throw Error(Errc::BadArgs, "give --data-root or set AIDA_DATA_ROOT");
    data_root = env;
  }
  const char* pass = std::getenv(pass_env.c_str());
  if (pass == nullptr) throw Error(Errc::BadPassphrase, "set " + pass_env + " to the platform key passphrase");
  // Block the signals before any thread starts so they all inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  platform::Platform p(data_root, platform::PlatformIdentity::load(data_root, pass));
  for (const auto& prob : p.directory().problems()) ctx.err() << "directory: " << prob << "\n";
  for (const auto& prob : p.log().problems()) ctx.err() << "log: " << prob << "\n";
  std::optional<std::vector<proto::PortConfig>> ports;
  if (!ports_file.empty()) ports = proto::ports_from_xml(xml::parse(read_file(ports_file)));
  const auto bound = p.start(ports);
  for (const auto& [name, port] : bound) ctx.out() << name << " port " << port << "\n";
  ctx.out() << "platform ready, " << p.directory().size() << " documents" << std::endl;
  wait_for_signal();
  p.stop();
  return kOk;
}

int cmd_gateway(Context& ctx, const std::string& upstream, const std::string& listen) {
  const auto [uh, up] = host_port(upstream);
  const auto [lh, lp] = host_port(listen);
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  proto::Gateway g(uh, up);
  const auto port = g.start(lh, lp);
  ctx.out() << "gateway http://" << lh << ":" << port << "/aida/tunnel -> " << uh << ":" << up << std::endl;
  wait_for_signal();
  g.stop();
  return kOk;
}

int cmd_agent(Context& ctx, const std::string& listen) {
  const auto [host, port] = host_port(listen);
  const auto& p = ctx.profile();
  if (p.endpoint.empty()) throw Error(Errc::BadArgs, "platform endpoint is not configured (--endpoint)");
  p.check_endpoint();
  agent::AgentIdentity id{ctx.key_at(p.key, "role key"), ctx.cert_at(p.cert, "role certificate"),
                          ctx.key_at(p.sign_key, "signing key"), ctx.cert_at(p.sign_cert, "signing certificate"),
                          ctx.trust()};
  const char* env = std::getenv(agent::kTokenEnv);
  const std::string token = env != nullptr ? std::string(env) : agent::fresh_token();
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  agent::DeskAgent a(std::move(id), proto::open_transport(p.endpoint), token);
  const auto bound = a.start(host, port);
  ctx.out() << "agent http://" << host << ":" << bound << "/v1" << "\n";
  if (env == nullptr) ctx.out() << "session token: " << token << "\n";
  ctx.out() << std::flush;
  wait_for_signal();
  a.stop();
  return kOk;
}

int cmd_demo(Context& ctx, const std::string& fixtures, const std::string& keep) {
  demo::Options o;
  o.fixtures = fixtures;
  if (!keep.empty()) {
    o.work = keep;
    o.keep = true;
  }
  const auto r = demo::run(o, ctx.out());
  return r.ok() ? kOk : kPlatform;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"aida: secure e-administration platform tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--profile", g.profile, "Profile file (or AIDA_PROFILE)");
  app.add_option("--endpoint", g.endpoint, "Platform endpoint: tcp://host:port or http://host:port (gateway)");
  app.add_option("--key", g.key, "Role key store");
  app.add_option("--cert", g.cert, "Role certificate");
  app.add_option("--sign-key", g.sign_key, "Signing key store");
  app.add_option("--sign-cert", g.sign_cert, "Signing certificate");
  app.add_option("--trust", g.trust, "Trust store");
  app.add_option("--defs", g.defs, "Local definitions tree (defs/<type>/<version>/)");
  app.add_option("--passphrase-env", g.passphrase_env, "Environment variable holding key store passphrases")
      ->capture_default_str();
  app.add_flag("--xml", g.xml, "Machine-readable output: one canonical XML document");

  std::function<int(Context&)> action;

  std::string out_path, alg = "ed25519";
  auto* keygen = app.add_subcommand("keygen", "Generate a key pair into a sealed key store");
  keygen->add_option("--out", out_path, "Key store to write")->required();
  keygen->add_option("--alg", alg, "ed25519 or ed448")->capture_default_str();
  keygen->callback([&] { action = [&](Context& c) { return cmd_keygen(c, out_path, alg); }; });

  CertArgs ca;
  auto* cert = app.add_subcommand("cert-issue", "Issue a certificate");
  cert->add_option("--subject-key", ca.subject_key, "Subject key store")->required();
  cert->add_option("--subject", ca.subject, "Subject name")->required();
  cert->add_option("--purpose", ca.purposes, "Comma-separated: auth,sign,role,platform,issuer")->required();
  cert->add_option("--serial", ca.serial, "Serial number")->required();
  cert->add_option("--days", ca.days_valid, "Validity in days")->capture_default_str();
  cert->add_option("--issuer-key", ca.issuer_key, "Issuer key store");
  cert->add_option("--issuer-cert", ca.issuer_cert, "Issuer certificate");
  cert->add_flag("--self-signed", ca.self_signed, "Make a self-signed anchor");
  cert->add_option("--out", ca.out, "Certificate file to write")->required();
  cert->callback([&] { action = [&](Context& c) { return cmd_cert_issue(c, ca); }; });

  std::string type, file, doc_id, status, expect, reason, at, receipt, consume, consume_status = "processed";
  int version = 0;
  std::vector<std::string> fields, attrs;

  auto* doc_new = app.add_subcommand("doc-new", "Assemble an unsigned draft from field values");
  doc_new->add_option("--type", type, "Document type")->required();
  doc_new->add_option("--version", version, "Definition version (latest when omitted)");
  doc_new->add_option("--field", fields, "path=value, repeatable");
  doc_new->add_option("--out", out_path, "Draft file (stdout when omitted)");
  doc_new->callback([&] { action = [&](Context& c) { return cmd_doc_new(c, type, version, fields, out_path); }; });

  auto* view = app.add_subcommand("doc-view", "Render a draft or a signed document");
  view->add_option("file", file, "Document file")->required();
  view->callback([&] { action = [&](Context& c) { return cmd_doc_view(c, file); }; });

  auto* sign = app.add_subcommand("doc-sign", "Render a draft and sign exactly what was rendered");
  sign->add_option("file", file, "Unsigned draft")->required();
  sign->add_option("--out", out_path, "Signed document to write")->required();
  sign->callback([&] { action = [&](Context& c) { return cmd_doc_sign(c, file, out_path); }; });

  auto* verify = app.add_subcommand("doc-verify", "Verify signatures and render a signed document");
  verify->add_option("file", file, "Signed document")->required();
  verify->add_option("--at", at, "Verification time (default now)");
  verify->callback([&] {
    action = [&](Context& c) {
      return show_verified(c, read_file(file), at.empty() ? std::nullopt : std::optional<Timestamp>(parse_ts(at)));
    };
  });

  auto* submit = app.add_subcommand("submit", "Store a signed document on the platform");
  submit->add_option("file", file, "Signed document")->required();
  submit->add_option("--receipt", receipt, "Write the platform receipt here");
  submit->add_option("--consume", consume, "docId moved to --consume-status in the same step");
  submit->add_option("--consume-status", consume_status, "Status for the consumed document")->capture_default_str();
  submit->callback([&] {
    action = [&](Context& c) { return cmd_submit(c, file, receipt, consume, consume_status); };
  });

  auto* search = app.add_subcommand("search", "Search stored documents");
  search->add_option("--type", type, "Document type")->required();
  search->add_option("--attr", attrs, "attribute=value, repeatable");
  search->add_option("--field", fields, "path=value, repeatable");
  search->callback([&] { action = [&](Context& c) { return cmd_search(c, type, attrs, fields); }; });

  auto* set_status = app.add_subcommand("set-status", "Change a document's status");
  set_status->add_option("docId", doc_id)->required();
  set_status->add_option("status", status)->required();
  set_status->add_option("--expect", expect, "Fail unless the current status is this");
  set_status->callback([&] { action = [&](Context& c) { return cmd_set_status(c, doc_id, status, expect); }; });

  auto* revoke = app.add_subcommand("revoke", "Revoke a stored document");
  revoke->add_option("docId", doc_id)->required();
  revoke->add_option("--reason", reason)->required();
  revoke->callback([&] { action = [&](Context& c) { return cmd_revoke(c, doc_id, reason); }; });

  auto* validate = app.add_subcommand("validate", "Validate a stored or local document on the platform");
  validate->add_option("docId", doc_id);
  validate->add_option("--file", file, "Validate this file instead of a stored document");
  validate->add_option("--at", at, "Validation time");
  validate->callback([&] { action = [&](Context& c) { return cmd_validate(c, doc_id, file, at); }; });

  auto* get = app.add_subcommand("get", "Fetch a stored document");
  get->add_option("docId", doc_id)->required();
  get->add_option("--out", out_path, "Write the signed document here");
  get->callback([&] { action = [&](Context& c) { return cmd_get(c, doc_id, out_path); }; });

  auto* admin = app.add_subcommand("admin", "Administration commands (admin port)");
  admin->require_subcommand(1);
  std::string path, port_name, port_action;
  std::uint64_t from = 0, to = 0;
  auto* put_def = admin->add_subcommand("put-def", "Publish a definition bundle");
  put_def->add_option("path", path, "Bundle directory or bundle XML file")->required();
  put_def->callback([&] { action = [&](Context& c) { return cmd_put_def(c, path); }; });
  auto* set_rolemap = admin->add_subcommand("set-rolemap", "Replace the role map");
  set_rolemap->add_option("file", path)->required();
  set_rolemap->callback([&] { action = [&](Context& c) { return cmd_set_rolemap(c, path); }; });
  auto* port = admin->add_subcommand("port", "Start, stop or query a port");
  port->add_option("name", port_name)->required();
  port->add_option("action", port_action, "start, stop or status")->check(CLI::IsMember({"start", "stop", "status"}));
  port->callback([&] {
    action = [&](Context& c) { return cmd_port(c, port_name, port_action.empty() ? "status" : port_action); };
  });
  auto* log = admin->add_subcommand("log", "Read the platform log");
  log->add_option("--from", from, "First sequence number");
  log->add_option("--to", to, "Last sequence number");
  log->callback([&] { action = [&](Context& c) { return cmd_log(c, from, to); }; });

  std::string data_root, ports_file, pass_env = "AIDA_PLATFORM_PASSPHRASE";
  auto* plat = app.add_subcommand("platform", "Run the platform server");
  plat->add_option("--data-root", data_root, "Data root (or AIDA_DATA_ROOT)");
  plat->add_option("--ports", ports_file, "Port configuration (default: <data root>/ports.xml)");
  plat->add_option("--key-passphrase-env", pass_env, "Variable holding the platform key passphrase")
      ->capture_default_str();
  plat->callback([&] { action = [&](Context& c) { return cmd_platform(c, data_root, ports_file, pass_env); }; });

  std::string upstream, listen = "127.0.0.1:8080";
  auto* gw = app.add_subcommand("gateway", "Run the HTTP tunnel gateway");
  gw->add_option("--upstream", upstream, "Platform host:port")->required();
  gw->add_option("--listen", listen, "host:port")->capture_default_str();
  gw->callback([&] { action = [&](Context& c) { return cmd_gateway(c, upstream, listen); }; });

  std::string agent_listen = "127.0.0.1:7080";
  auto* ag = app.add_subcommand("agent", "Run the desk agent for the browser UI");
  ag->add_option("--listen", agent_listen, "Loopback host:port")->capture_default_str();
  ag->callback([&] { action = [&](Context& c) { return cmd_agent(c, agent_listen); }; });

  std::string fixtures = AIDA_DEFAULT_FIXTURES, keep;
  auto* dm = app.add_subcommand("demo", "Run the exam admission demo end to end");
  dm->add_option("--fixtures", fixtures, "Fixtures directory")->capture_default_str();
  dm->add_option("--keep", keep, "Use and keep this data root");
  dm->callback([&] { action = [&](Context& c) { return cmd_demo(c, fixtures, keep); }; });

  std::string fx_out;
  auto* fx = app.add_subcommand("init-fixtures", "Write a fresh demo PKI, role map and user map");
  fx->add_option("--out", fx_out, "Directory")->required();
  fx->callback([&] {
    action = [&](Context& c) {
      demo::write_fixtures(fx_out);
      c.emit(XNode::element("Fixtures"), "demo fixtures written to " + fx_out);
      return int{kOk};
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  try {
    Context ctx(g, out, err);
    return action(ctx);
  } catch (const Error& e) {
    if (g.xml) {
      XNode n = XNode::element("Error");
      n.set_attr("code", std::string(to_string(e.code())));
      n.set_attr("detail", e.detail());
      out << xml::a_canon(n) << "\n";
    }
    err << "error: " << to_string(e.code()) << ": " << e.detail() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
}

}  // namespace aida::cli
