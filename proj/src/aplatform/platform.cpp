#include <algorithm>
#include <regex>

#include "aida/aplatform.hpp"
#include "aida/error.hpp"
#include "aida/wysiwys.hpp"

namespace aida::platform {

using proto::Command;
using proto::Response;
using xml::XNode;

namespace {

Response ok(std::optional<XNode> payload = std::nullopt, std::string detail = {}) {
  Response r;
  r.detail = std::move(detail);
  r.payload = std::move(payload);
  return r;
}

Response fail(Errc code, std::string detail) {
  Response r;
  r.status = std::string(to_string(code));
  r.detail = std::move(detail);
  return r;
}

const std::string& text_arg(const Command& c, std::string_view name) {
  const proto::Arg* a = c.find(name);
  if (a == nullptr || a->node) throw Error(Errc::BadArgs, "missing argument '" + std::string(name) + "'");
  return a->text;
}

std::optional<std::string> opt_arg(const Command& c, std::string_view name) {
  const proto::Arg* a = c.find(name);
  if (a == nullptr) return std::nullopt;
  if (a->node) throw Error(Errc::BadArgs, "argument '" + std::string(name) + "' must be text");
  return a->text;
}

const XNode& node_arg(const Command& c, std::string_view name) {
  const proto::Arg* a = c.find(name);
  if (a == nullptr || !a->node) throw Error(Errc::BadArgs, "missing element argument '" + std::string(name) + "'");
  return *a->node;
}

crypto::SignedDoc signed_arg(const Command& c, std::string_view name) {
  try {
    return crypto::SignedDoc::from_xml(node_arg(c, name));
  } catch (const Error& e) {
    if (e.code() == Errc::BadArgs) throw;
    throw Error(Errc::InvalidDoc, e.detail());
  }
}

edoc::EDoc edoc_arg(const Command& c, std::string_view name) { return edoc::EDoc::from_signed(signed_arg(c, name)); }

int version_arg(const Command& c) {
  const auto v = opt_arg(c, "version");
  if (!v) return 0;
  if (v->empty() || v->size() > 6 || !std::all_of(v->begin(), v->end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    throw Error(Errc::BadArgs, "version must be a number");
  }
  return std::stoi(*v);
}

// Best effort msgId for answering a request that failed to decode.
std::string guess_msg_id(const std::string& frame) {
  static const std::regex kId("[A-Za-z0-9_.-]{1,64}");
  try {
    if (frame.size() > 4) {
      const auto s = crypto::SignedDoc::parse(std::string_view(frame).substr(4));
      if (const auto id = s.content.attr("msgId"); id && std::regex_match(*id, kId)) return *id;
    }
  } catch (const std::exception&) {
  }
  return "unknown";
}

std::vector<proto::PortConfig> default_ports() {
  proto::PortConfig scenario{"scenario", 7001, {}, "loopback", {}, true};
  proto::PortConfig service{"service", 7002, {}, "loopback", {}, true};
  proto::PortConfig admin{"admin", 7003, {}, "loopback", {}, true};
  return {scenario, service, admin};
}

}  // namespace

Platform::Platform(fs::path data_root, PlatformIdentity identity, Clock clock)
    : root_(std::move(data_root)),
      id_(std::move(identity)),
      clock_(std::move(clock)),
      log_((fs::create_directories(root_), root_ / "log.txt")),
      dir_(root_) {
  defs_ = std::make_shared<const edoc::DefinitionRegistry>(edoc::DefinitionRegistry::load_tree(root_ / "defs"));
  roles_ = std::make_shared<const RoleMap>(fs::exists(root_ / "rolemap.xml")
                                               ? RoleMap::from_xml(xml::parse(read_file(root_ / "rolemap.xml")))
                                               : RoleMap{});
  ports_ = fs::exists(root_ / "ports.xml") ? proto::ports_from_xml(xml::parse(read_file(root_ / "ports.xml")))
                                           : default_ports();
}

Platform::~Platform() { stop(); }

edoc::DefinitionRegistry Platform::definitions() const {
  std::shared_lock lock(defs_mu_);
  return *defs_;
}

RoleMap Platform::role_map() const {
  std::shared_lock lock(defs_mu_);
  return *roles_;
}

// ---- pipeline -------------------------------------------------------------

std::string Platform::handle(const std::string& request_frame, const proto::PortConfig& port) {
  const Timestamp now = clock_();
  proto::Decoded d;
  try {
    d = proto::decode(request_frame);
  } catch (const Error& e) {
    return proto::encode(proto::make_response(guess_msg_id(request_frame), fail(e.code(), e.detail()), id_.key,
                                              id_.cert, now));
  }
  if (d.msg.direction() != proto::Direction::Command) {
    return proto::encode(proto::make_response(d.msg.msg_id, fail(Errc::SchemaViolation, "expected a command"),
                                              id_.key, id_.cert, now));
  }
  Outcome out;
  try {
    out = execute(d.msg, d.signed_msg, port);
  } catch (const Error& e) {
    out.response = fail(e.code(), e.detail());
  } catch (const std::exception& e) {
    out.response = fail(Errc::Internal, e.what());
  }
  log_.append(now, d.signed_msg.signature.signer.subject_key.key_id(), d.msg.command().name, out.doc_id,
              out.response.status);
  return proto::encode(proto::make_response(d.msg.msg_id, out.response, id_.key, id_.cert, clock_()));
}

Platform::Outcome Platform::execute(const proto::AMessage& msg, const crypto::SignedDoc& signed_msg,
                                    const proto::PortConfig& port) {
  const Timestamp now = clock_();
  const Command& cmd = msg.command();
  const auto report = crypto::verify_envelope(signed_msg, id_.trust, now);
  if (!report.ok() || report.purpose != crypto::Purpose::Role) {
    std::string why = report.detail;
    if (why.empty()) why = report.purpose != crypto::Purpose::Role ? "not signed with a role certificate"
                                                                   : std::string(crypto::to_string(report.chain.status));
    return {fail(Errc::BadSignature, why), {}};
  }
  // Nonces are recorded only once the signature holds.
  replay_.check_and_record(msg.nonce, msg.timestamp, now);

  const auto& catalog = command_catalog();
  if (std::find(catalog.begin(), catalog.end(), cmd.name) == catalog.end()) {
    return {fail(Errc::BadArgs, "unknown command " + cmd.name), {}};
  }
  if (!port.accepts(cmd.name) || (is_admin_command(cmd.name) && port.name != "admin")) {
    return {fail(Errc::DeniedPort, cmd.name + " not accepted on port " + port.name), {}};
  }

  std::shared_ptr<const RoleMap> roles;
  {
    std::shared_lock lock(defs_mu_);
    roles = roles_;
  }
  const std::string role_key = signed_msg.signature.signer.subject_key.key_id();
  if (auto denial = authorize(*roles, role_key, cmd.name, std::nullopt)) return {fail(*denial, cmd.name), {}};
  const auto doc_type = doc_type_of(cmd);
  if (auto denial = authorize(*roles, role_key, cmd.name, doc_type)) {
    return {fail(*denial, cmd.name + " on " + doc_type.value_or("")), {}};
  }
  Outcome out;
  out.response = dispatch(cmd, out.doc_id, roles->entries.at(role_key), role_key);
  return out;
}

std::optional<std::string> Platform::doc_type_of(const Command& cmd) const {
  const std::string& n = cmd.name;
  if (n == "CreateEdoc" || n == "SearchEdocs" || n == "GetDefinition") return text_arg(cmd, "type");
  if (n == "StoreEdoc") return edoc_arg(cmd, "doc").type_id();
  if (n == "ValidateEdoc" && !cmd.find("docId")) return edoc_arg(cmd, "doc").type_id();
  if (n == "GetEdoc" || n == "SetAttribute" || n == "RevokeEdoc" || n == "CounterSign" || n == "Acknowledge" ||
      n == "ValidateEdoc") {
    return dir_.get(text_arg(cmd, "docId")).doc.type_id();
  }
  if (n == "PutDefinition") return edoc::DefinitionBundle::from_xml(node_arg(cmd, "bundle")).type_id();
  return std::nullopt;
}

Response Platform::dispatch(const Command& cmd, std::string& doc_id, const RoleEntry& role, const std::string&) {
  const std::string& n = cmd.name;
  if (n == "CreateEdoc") return create_edoc(cmd);
  if (n == "StoreEdoc") return store_edoc(cmd, doc_id, role);
  if (n == "GetEdoc") return get_edoc(cmd, doc_id);
  if (n == "SearchEdocs") return search_edocs(cmd);
  if (n == "SetAttribute") return set_attribute(cmd, doc_id);
  if (n == "RevokeEdoc") return revoke_edoc(cmd, doc_id);
  if (n == "ValidateEdoc") return validate_edoc(cmd, doc_id);
  if (n == "CounterSign") return counter_sign(cmd, doc_id);
  if (n == "GetDefinition") return get_definition(cmd);
  if (n == "Acknowledge") return acknowledge(cmd, doc_id);
  if (n == "PutDefinition") return put_definition(cmd);
  if (n == "SetRoleMap") return set_role_map(cmd);
  if (n == "PortControl") return port_control(cmd);
  return get_log(cmd);
}

// ---- document commands ----------------------------------------------------

Response Platform::create_edoc(const Command& cmd) {
  const auto defs = definitions();
  const std::string& type = text_arg(cmd, "type");
  const int v = version_arg(cmd);
  const edoc::DefinitionBundle* b = v ? defs.find(type, v) : defs.latest(type);
  if (b == nullptr) throw Error(Errc::UnknownType, type);
  std::map<std::string, std::string> values;
  for (const proto::Arg* a : cmd.all("field")) values[a->key] = a->text;
  return ok(edoc::wrap(*b, edoc::assemble(b->def, values), clock_()));
}

Response Platform::store_edoc(const Command& cmd, std::string& doc_id, const RoleEntry& role) {
  const Timestamp now = clock_();
  const edoc::EDoc doc = edoc_arg(cmd, "doc");
  std::shared_ptr<const edoc::DefinitionRegistry> defs;
  {
    std::shared_lock lock(defs_mu_);
    defs = defs_;
  }
  const edoc::DefinitionBundle* bundle = defs->find(doc.type_id(), doc.version());
  if (bundle == nullptr) throw Error(Errc::UnknownType, doc.type_id() + "/" + std::to_string(doc.version()));
  const auto report = crypto::verify_envelope(doc.signed_doc, id_.trust, now);
  if (!report.ok()) {
    throw Error(Errc::InvalidDoc, "signature: " + (report.detail.empty() ? std::string(crypto::to_string(report.chain.status))
                                                                         : report.detail));
  }
  if (report.purpose != crypto::Purpose::Sign) throw Error(Errc::InvalidDoc, "not signed with a signing certificate");
  if (doc.def_digest() != bundle->digest()) throw Error(Errc::InvalidDoc, "stale or foreign defDigest");
  try {
    wysiwys::render_body(doc.body(), bundle->def, bundle->display);
  } catch (const Error& e) {
    throw Error(Errc::InvalidDoc, std::string(to_string(e.code())) + ": " + e.detail());
  }

  DocRecord rec;
  rec.doc = doc;
  rec.bytes = doc.canonical();
  rec.attrs = edoc::AttributeSet::initial(bundle->meta);
  doc_id = doc.doc_id();
  if (dir_.contains(doc_id)) throw Error(Errc::Duplicate, doc_id);
  rec.receipt = make_receipt(doc, now, id_.key, id_.cert);

  if (const auto consumed = opt_arg(cmd, "consume")) {
    const std::string& to = text_arg(cmd, "consumeStatus");
    const DocRecord cur = dir_.get(*consumed);
    if (!role.edoc_types.contains(cur.doc.type_id())) throw Error(Errc::DeniedDoctype, "consume " + cur.doc.type_id());
    const edoc::DefinitionBundle* cb = defs->find(cur.doc.type_id(), cur.doc.version());
    if (cb == nullptr) throw Error(Errc::UnknownType, cur.doc.type_id());
    if (cur.revocation) throw Error(Errc::IllegalTransition, *consumed + " is revoked");
    const auto next = edoc::transition_status(cur.attrs, to, cb->meta.transitions);
    dir_.insert_consuming(rec, *consumed, cur.attrs, next);
  } else {
    dir_.insert(rec);
  }
  XNode p = XNode::element("Stored");
  p.set_attr("docId", doc_id);
  p.set_attr("status", rec.attrs.status());
  p.add(rec.receipt.signed_doc.to_xml());
  return ok(std::move(p));
}

Response Platform::get_edoc(const Command& cmd, std::string& doc_id) {
  doc_id = text_arg(cmd, "docId");
  const DocRecord rec = dir_.get(doc_id);
  XNode p = XNode::element("Record");
  p.set_attr("docId", doc_id);
  p.add(rec.doc.signed_doc.to_xml());
  p.add(rec.attrs.to_xml());
  p.add(XNode::element("receipt")).add(rec.receipt.signed_doc.to_xml());
  if (rec.revocation) p.add(XNode::element("revocation")).add(rec.revocation->signed_doc.to_xml());
  if (rec.countersigned) p.add(XNode::element("countersigned")).add(rec.countersigned->to_xml());
  return ok(std::move(p));
}

Response Platform::search_edocs(const Command& cmd) {
  const auto defs = definitions();
  const std::string& type = text_arg(cmd, "type");
  const edoc::DefinitionBundle* latest = defs.latest(type);
  if (latest == nullptr) throw Error(Errc::UnknownType, type);

  struct Pred {
    bool is_path;
    std::string key;
    std::string value;
  };
  std::vector<Pred> preds;
  std::set<std::string> attr_names = {"status"};
  for (const auto& [k, b] : defs.all()) {
    if (k.first != type) continue;
    for (const auto& [s, v] : b.meta.statics) attr_names.insert(s);
    for (const auto& [d, v] : b.meta.dynamics) attr_names.insert(d);
  }
  const auto paths = edoc::field_paths(latest->def);
  for (const proto::Arg* a : cmd.all("where")) {
    std::string key = a->key;
    if (key.find('/') != std::string::npos) {
      if (key.front() != '/') key = "/" + latest->def.root + "/" + key;
      if (std::find(paths.begin(), paths.end(), key) == paths.end()) throw Error(Errc::UnknownField, key);
      preds.push_back({true, key, a->text});
    } else {
      if (!attr_names.contains(key)) throw Error(Errc::UnknownAttribute, key);
      preds.push_back({false, key, a->text});
    }
  }

  XNode out = XNode::element("Results");
  out.set_attr("typeId", type);
  std::size_t count = 0;
  for (const auto& id : dir_.ids_of_type(type)) {
    DocRecord rec;
    try {
      rec = dir_.get(id);
    } catch (const Error&) {
      continue;
    }
    const bool match = std::all_of(preds.begin(), preds.end(), [&](const Pred& p) {
      if (!p.is_path) return rec.attrs.get(p.key) == p.value;
      const auto vals = edoc::values_at(rec.doc.body(), p.key);
      return std::find(vals.begin(), vals.end(), p.value) != vals.end();
    });
    if (!match) continue;
    ++count;
    XNode& hit = out.add(XNode::element("Hit"));
    hit.set_attr("docId", id);
    hit.set_attr("version", std::to_string(rec.doc.version()));
    if (const auto* b = defs.find(type, rec.doc.version())) {
      for (const auto& sp : b->meta.summary_paths) {
        for (const auto& v : edoc::values_at(rec.doc.body(), sp)) {
          XNode& f = hit.add(XNode::element("Field"));
          f.set_attr("path", sp);
          const auto* e = b->display.find(sp);
          f.set_attr("label", e ? e->label : sp);
          f.set_attr("value", v);
        }
      }
    }
    hit.add(rec.attrs.to_xml());
  }
  out.set_attr("count", std::to_string(count));
  return ok(std::move(out));
}

Response Platform::set_attribute(const Command& cmd, std::string& doc_id) {
  doc_id = text_arg(cmd, "docId");
  const std::string& name = text_arg(cmd, "name");
  const std::string value = opt_arg(cmd, "value").value_or("");
  const DocRecord rec = dir_.get(doc_id);
  if (rec.attrs.is_static(name)) throw Error(Errc::StaticAttribute, name);
  const auto current = rec.attrs.get(name);
  if (!current) throw Error(Errc::UnknownAttribute, name);
  if (const auto expect = opt_arg(cmd, "expect"); expect && *expect != *current) {
    throw Error(Errc::Conflict, name + " is '" + *current + "', expected '" + *expect + "'");
  }
  if (xml::find_forbidden(value)) throw Error(Errc::BadArgs, "value carries a forbidden character");
  edoc::AttributeSet next = rec.attrs;
  if (name == "status") {
    const auto defs = definitions();
    const auto* b = defs.find(rec.doc.type_id(), rec.doc.version());
    if (b == nullptr) throw Error(Errc::UnknownType, rec.doc.type_id());
    next = edoc::transition_status(rec.attrs, value, b->meta.transitions);
  } else {
    next.dynamic[name] = value;
  }
  if (!dir_.compare_and_set(doc_id, rec.attrs, next)) throw Error(Errc::Conflict, doc_id + " changed concurrently");
  return ok(next.to_xml());
}

Response Platform::revoke_edoc(const Command& cmd, std::string& doc_id) {
  doc_id = text_arg(cmd, "docId");
  const std::string& reason = text_arg(cmd, "reason");
  if (xml::find_forbidden(reason)) throw Error(Errc::BadArgs, "reason carries a forbidden character");
  const DocRecord rec = dir_.get(doc_id);
  if (rec.revocation) return ok(rec.revocation->signed_doc.to_xml(), "already revoked");
  const auto rev = dir_.set_revocation(doc_id, edoc::make_revocation(doc_id, reason, clock_(), id_.key, id_.cert));
  // Mirror the revocation in the status when the type has such a state.
  const auto defs = definitions();
  if (const auto* b = defs.find(rec.doc.type_id(), rec.doc.version());
      b != nullptr && b->meta.transitions.allowed(rec.attrs.status(), "revoked")) {
    dir_.compare_and_set(doc_id, rec.attrs, edoc::transition_status(rec.attrs, "revoked", b->meta.transitions));
  }
  return ok(rev.signed_doc.to_xml());
}

Response Platform::validate_edoc(const Command& cmd, std::string& doc_id) {
  const auto defs = definitions();
  Timestamp at = clock_();
  if (const auto a = opt_arg(cmd, "at")) {
    try {
      at = parse_ts(*a);
    } catch (const Error&) {
      throw Error(Errc::BadArgs, "at must be a timestamp");
    }
  }
  edoc::ValidityReport report;
  if (cmd.find("docId")) {
    doc_id = text_arg(cmd, "docId");
    const DocRecord rec = dir_.get(doc_id);
    std::vector<edoc::RevocationRecord> revs;
    if (rec.revocation) revs.push_back(*rec.revocation);
    report = edoc::validate_edoc(rec.doc, id_.trust, revs, at, defs, &rec.attrs);
  } else {
    const edoc::EDoc doc = edoc_arg(cmd, "doc");
    report = edoc::validate_edoc(doc, id_.trust, {}, at, defs, nullptr);
  }
  return ok(report.to_xml());
}

Response Platform::counter_sign(const Command& cmd, std::string& doc_id) {
  doc_id = text_arg(cmd, "docId");
  const DocRecord rec = dir_.get(doc_id);
  const crypto::SignedDoc next = signed_arg(cmd, "doc");
  const crypto::SignedDoc& base = rec.countersigned ? *rec.countersigned : rec.doc.signed_doc;
  if (!(next.content == base.content)) throw Error(Errc::InvalidDoc, "content differs from the stored document");
  const auto& old_block = base.signature;
  const auto& new_block = next.signature;
  if (xml::a_canon(old_block.to_xml(false)) != xml::a_canon(new_block.to_xml(false)) ||
      new_block.counter_signatures.size() <= old_block.counter_signatures.size()) {
    throw Error(Errc::InvalidDoc, "not an extension of the stored signatures");
  }
  for (std::size_t i = 0; i < old_block.counter_signatures.size(); ++i) {
    if (xml::a_canon(old_block.counter_signatures[i].to_xml()) != xml::a_canon(new_block.counter_signatures[i].to_xml())) {
      throw Error(Errc::InvalidDoc, "existing counter-signature altered");
    }
  }
  const auto report = crypto::verify_envelope(next, id_.trust, clock_());
  if (!report.ok()) throw Error(Errc::InvalidDoc, "counter-signature does not verify");
  dir_.set_countersigned(doc_id, next);
  XNode p = XNode::element("CounterSigned");
  p.set_attr("docId", doc_id);
  p.set_attr("counterSignatures", std::to_string(new_block.counter_signatures.size()));
  return ok(std::move(p));
}

Response Platform::get_definition(const Command& cmd) {
  const auto defs = definitions();
  const std::string& type = text_arg(cmd, "type");
  const int v = version_arg(cmd);
  const edoc::DefinitionBundle* b = v ? defs.find(type, v) : defs.latest(type);
  if (b == nullptr) throw Error(Errc::UnknownType, type);
  XNode p = b->to_xml();
  p.set_attr("digest", b->digest());
  return ok(std::move(p));
}

Response Platform::acknowledge(const Command& cmd, std::string& doc_id) {
  doc_id = text_arg(cmd, "docId");
  return ok(dir_.get(doc_id).receipt.signed_doc.to_xml());
}

// ---- administration -------------------------------------------------------

Response Platform::put_definition(const Command& cmd) {
  XNode node = node_arg(cmd, "bundle");
  std::erase_if(node.attrs, [](const auto& a) { return a.first == "digest"; });
  edoc::DefinitionBundle b = edoc::DefinitionBundle::from_xml(node);
  std::unique_lock lock(defs_mu_);
  auto next = std::make_shared<edoc::DefinitionRegistry>(*defs_);
  next->add(b);
  const fs::path dir = root_ / "defs" / b.type_id() / std::to_string(b.version());
  if (fs::exists(dir)) throw Error(Errc::VersionExists, b.type_id() + "/" + std::to_string(b.version()));
  b.save_dir(dir);
  defs_ = std::move(next);
  XNode p = XNode::element("Definition");
  p.set_attr("typeId", b.type_id());
  p.set_attr("version", std::to_string(b.version()));
  p.set_attr("digest", b.digest());
  return ok(std::move(p));
}

Response Platform::set_role_map(const Command& cmd) {
  const RoleMap m = RoleMap::from_xml(node_arg(cmd, "rolemap"));
  const auto& catalog = command_catalog();
  for (const auto& [key, e] : m.entries) {
    for (const auto& c : e.commands) {
      if (std::find(catalog.begin(), catalog.end(), c) == catalog.end()) throw Error(Errc::BadArgs, "unknown command " + c);
    }
  }
  std::unique_lock lock(defs_mu_);
  write_file_atomic(root_ / "rolemap.xml", xml::pretty(m.to_xml()));
  roles_ = std::make_shared<const RoleMap>(m);
  XNode p = XNode::element("RoleMap");
  p.set_attr("roles", std::to_string(m.entries.size()));
  return ok(std::move(p));
}

Response Platform::port_control(const Command& cmd) {
  const std::string& name = text_arg(cmd, "port");
  const std::string action = opt_arg(cmd, "action").value_or("status");
  std::lock_guard lock(ports_mu_);
  auto it = std::find_if(ports_.begin(), ports_.end(), [&](const auto& p) { return p.name == name; });
  if (it == ports_.end()) throw Error(Errc::NotFound, "port " + name);
  if (action == "stop") {
    if (name == "admin") throw Error(Errc::CannotStopAdmin, "the admin port stays up");
    if (auto s = servers_.find(name); s != servers_.end()) {
      s->second->stop();
      servers_.erase(s);
    }
    it->enabled = false;
    save_ports_locked();
  } else if (action == "start") {
    if (!servers_.contains(name)) it->tcp_port = start_port_locked(*it);
    it->enabled = true;
    save_ports_locked();
  } else if (action != "status") {
    throw Error(Errc::BadArgs, "action must be start, stop or status");
  }
  XNode p = proto::ports_to_xml(ports_);
  for (auto& c : p.children) c.set_attr("running", servers_.contains(c.required_attr("name")) ? "true" : "false");
  return ok(std::move(p));
}

Response Platform::get_log(const Command& cmd) {
  auto num = [&](std::string_view n, std::uint64_t dflt) -> std::uint64_t {
    const auto v = opt_arg(cmd, n);
    if (!v) return dflt;
    if (v->empty() || v->size() > 19 || !std::all_of(v->begin(), v->end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw Error(Errc::BadArgs, std::string(n) + " must be a number");
    }
    return std::stoull(*v);
  };
  const auto lines = log_.lines(num("from", 1), num("to", UINT64_MAX));
  XNode p = XNode::element("Log");
  for (const auto& l : lines) p.add(xml::parse(l));
  return ok(std::move(p));
}

// ---- ports ----------------------------------------------------------------

void Platform::save_ports_locked() const { write_file_atomic(root_ / "ports.xml", xml::pretty(proto::ports_to_xml(ports_))); }

std::uint16_t Platform::start_port_locked(const proto::PortConfig& cfg) {
  auto server = std::make_unique<proto::FrameServer>(
      cfg, [this, cfg](const std::string& frame, const std::string&) { return handle(frame, cfg); });
  const auto bound = server->start();
  servers_[cfg.name] = std::move(server);
  return bound;
}

std::map<std::string, std::uint16_t> Platform::start(std::optional<std::vector<proto::PortConfig>> ports) {
  std::lock_guard lock(ports_mu_);
  if (ports) ports_ = std::move(*ports);
  if (std::none_of(ports_.begin(), ports_.end(), [](const auto& p) { return p.name == "admin"; })) {
    ports_.push_back({"admin", 0, {}, "loopback", {}, true});
  }
  for (auto& p : ports_) {
    if (p.name == "admin") p.enabled = true;
    if (p.enabled && !servers_.contains(p.name)) p.tcp_port = start_port_locked(p);
  }
  std::map<std::string, std::uint16_t> out;
  for (const auto& [name, s] : servers_) out[name] = s->config().tcp_port;
  return out;
}

void Platform::stop() {
  std::map<std::string, std::unique_ptr<proto::FrameServer>> servers;
  {
    std::lock_guard lock(ports_mu_);
    servers.swap(servers_);
  }
  for (auto& [name, s] : servers) s->stop();
}

std::map<std::string, std::uint16_t> Platform::bound_ports() const {
  std::lock_guard lock(ports_mu_);
  std::map<std::string, std::uint16_t> out;
  for (const auto& [name, s] : servers_) out[name] = s->config().tcp_port;
  return out;
}

}  // namespace aida::platform
