#include "aida/eas.hpp"

#include "aida/error.hpp"

namespace aida::eas {

using proto::Command;
using proto::Response;
using xml::XNode;

namespace {

bool flag(const XNode& n, const std::string& name) {
  const auto v = n.attr(name);
  if (!v) return false;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw Error(Errc::SchemaViolation, "registry: " + name + " must be true or false");
}

std::string one_value(const XNode& body, const std::string& path) {
  const auto v = edoc::values_at(body, path);
  if (v.size() != 1) throw Error(Errc::InvalidDoc, "expected one value at " + path);
  return v.front();
}

std::vector<std::string> hit_ids(const Response& r) {
  std::vector<std::string> out;
  for (const XNode* h : r.payload->children_named("Hit")) out.push_back(h->required_attr("docId"));
  return out;
}

crypto::SignedDoc fetch_doc(proto::Client& c, const std::string& doc_id) {
  Command get{"GetEdoc", {}};
  get.add("docId", doc_id);
  const Response r = expect_ok(c.call(get));
  const XNode* s = r.payload->child("SignedDoc");
  if (s == nullptr) throw Error(Errc::MalformedXml, "GetEdoc payload without SignedDoc");
  return crypto::SignedDoc::from_xml(*s);
}

std::string describe(const Error& e) { return std::string(to_string(e.code())) + ": " + e.detail(); }

}  // namespace

// ---- registry -------------------------------------------------------------

const Student& Registry::student(const std::string& id) const {
  const auto it = students.find(id);
  if (it == students.end()) throw Error(Errc::UnknownUser, id);
  return it->second;
}

const Exam& Registry::exam(const std::string& code) const {
  const auto it = exams.find(code);
  if (it == exams.end()) throw Error(Errc::UnknownExam, code);
  return it->second;
}

void Registry::check_eligible(const std::string& student_id, const std::string& exam_code) const {
  const Student& s = student(student_id);
  exam(exam_code);
  if (!s.enrolled) throw Error(Errc::NotEnrolled, student_id);
  if (!s.exam_rights.contains(exam_code)) throw Error(Errc::NoExamRights, student_id + " for " + exam_code);
  if (!s.payments_ok) throw Error(Errc::PaymentDue, student_id);
}

XNode Registry::to_xml() const {
  XNode root = XNode::element("registry");
  for (const auto& [id, s] : students) {
    XNode& n = root.add(XNode::element("student"));
    n.set_attr("id", id);
    n.set_attr("name", s.name);
    n.set_attr("placeOfBirth", s.place_of_birth);
    n.set_attr("enrolled", s.enrolled ? "true" : "false");
    n.set_attr("paymentsOk", s.payments_ok ? "true" : "false");
    for (const auto& code : s.exam_rights) n.add(XNode::element("right")).set_attr("exam", code);
  }
  for (const auto& [code, e] : exams) {
    XNode& n = root.add(XNode::element("exam"));
    n.set_attr("code", code);
    n.set_attr("name", e.name);
    n.set_attr("faculty", e.faculty);
    n.set_attr("professorId", e.professor_id);
  }
  return root;
}

Registry Registry::from_xml(const XNode& node) {
  if (node.name != "registry") throw Error(Errc::SchemaViolation, "expected <registry>");
  Registry r;
  for (const XNode* n : node.children_named("student")) {
    Student s;
    s.id = n->required_attr("id");
    s.name = n->required_attr("name");
    s.place_of_birth = n->required_attr("placeOfBirth");
    s.enrolled = flag(*n, "enrolled");
    s.payments_ok = flag(*n, "paymentsOk");
    for (const XNode* right : n->children_named("right")) s.exam_rights.insert(right->required_attr("exam"));
    if (!r.students.emplace(s.id, s).second) throw Error(Errc::SchemaViolation, "duplicate student " + s.id);
  }
  for (const XNode* n : node.children_named("exam")) {
    Exam e{n->required_attr("code"), n->required_attr("name"), n->required_attr("faculty"),
           n->required_attr("professorId")};
    if (!r.exams.emplace(e.code, e).second) throw Error(Errc::SchemaViolation, "duplicate exam " + e.code);
  }
  return r;
}

Registry Registry::load(const fs::path& path) { return from_xml(xml::parse(read_file(path))); }

std::size_t ProcessReport::issued() const {
  std::size_t n = 0;
  for (const auto& i : items) n += i.ok() ? 1 : 0;
  return n;
}

// ---- platform helpers -----------------------------------------------------

Response expect_ok(Response r) {
  if (!r.ok()) throw Error(errc_from_string(r.status), r.detail);
  return r;
}

edoc::DefinitionBundle fetch_definition(proto::Client& client, const std::string& type, int version) {
  Command c{"GetDefinition", {}};
  c.add("type", type);
  if (version > 0) c.add("version", std::to_string(version));
  Response r = expect_ok(client.call(c));
  XNode bundle = *r.payload;
  const std::string digest = bundle.attr("digest").value_or("");
  std::erase_if(bundle.attrs, [](const auto& a) { return a.first == "digest"; });
  edoc::DefinitionBundle b = edoc::DefinitionBundle::from_xml(bundle);
  if (b.digest() != digest) throw Error(Errc::DefinitionMismatch, type + " digest does not match the bundle");
  return b;
}

edoc::DefinitionRegistry fetch_definitions(proto::Client& client, const std::vector<std::string>& types) {
  edoc::DefinitionRegistry defs;
  for (const auto& t : types) defs.add(fetch_definition(client, t));
  return defs;
}

// ---- scenario -------------------------------------------------------------

Scenario::Scenario(Registry registry, platform::UserMap users, crypto::TrustStore trust, Clock clock)
    : registry_(std::move(registry)), users_(std::move(users)), trust_(std::move(trust)), clock_(std::move(clock)) {}

std::string Scenario::resolve(const crypto::MiniCert& auth_cert) const {
  if (!auth_cert.has(crypto::Purpose::Auth)) throw Error(Errc::UnknownUser, auth_cert.subject + ": not an auth certificate");
  const auto chain = crypto::verify_chain(auth_cert, clock_(), trust_);
  if (!chain.ok()) throw Error(Errc::UnknownUser, auth_cert.subject + ": " + std::string(crypto::to_string(chain.status)));
  const auto id = users_.find(auth_cert.subject_key.key_id());
  if (!id) throw Error(Errc::UnknownUser, auth_cert.subject + ": not in the user map");
  return *id;
}

Admission Scenario::request_admission(proto::Client& sa, const Signer& sso, const crypto::MiniCert& student_auth,
                                      const std::string& exam_code) const {
  const std::string student_id = resolve(student_auth);
  registry_.check_eligible(student_id, exam_code);
  const Student& s = registry_.student(student_id);
  const Exam& e = registry_.exam(exam_code);

  Command search{"SearchEdocs", {}};
  search.add("type", "eEAC")
      .add("where", student_id, "student/id")
      .add("where", exam_code, "exam/code")
      .add("where", "pending", "status");
  const auto existing = hit_ids(expect_ok(sa.call(search)));
  if (!existing.empty()) {
    const auto doc = edoc::EDoc::from_signed(fetch_doc(sa, existing.front()));
    return {existing.front(), true, parse_ts(one_value(doc.body(), "/eEAC/validity/notBefore")),
            parse_ts(one_value(doc.body(), "/eEAC/validity/notAfter"))};
  }

  const auto defs = fetch_definitions(sa, {"eEAC"});
  const auto& bundle = *defs.latest("eEAC");
  const Timestamp now = clock_();
  const Timestamp until = now + kAdmissionValidity;
  const XNode body = edoc::assemble(bundle.def, {
                                                    {"/eEAC/student/id", s.id},
                                                    {"/eEAC/student/name", s.name},
                                                    {"/eEAC/student/placeOfBirth", s.place_of_birth},
                                                    {"/eEAC/faculty/name", e.faculty},
                                                    {"/eEAC/exam/code", e.code},
                                                    {"/eEAC/exam/name", e.name},
                                                    {"/eEAC/validity/notBefore", format_ts(now)},
                                                    {"/eEAC/validity/notAfter", format_ts(until)},
                                                });
  const auto draft = wysiwys::render_to_sign(edoc::wrap(bundle, body, now), bundle);
  const auto signed_doc = wysiwys::sign_rendered(draft, sso.key, sso.cert, now);

  Command store{"StoreEdoc", {}};
  store.add_node("doc", signed_doc.to_xml());
  const Response r = expect_ok(sa.call(store));
  return {r.payload->required_attr("docId"), false, now, until};
}

ProcessReport Scenario::process_exam(proto::Client& desk, const Signer& professor,
                                     const crypto::MiniCert& professor_auth, const std::string& exam_code,
                                     const ManualValues& manual, const std::optional<fs::path>& outbox) const {
  const std::string professor_id = resolve(professor_auth);
  // Only the professor in charge of the exam sees its admissions.
  if (registry_.exam(exam_code).professor_id != professor_id) {
    throw Error(Errc::NoExamRights, professor_id + " does not hold " + exam_code);
  }

  Command search{"SearchEdocs", {}};
  search.add("type", "eEAC").add("where", exam_code, "exam/code").add("where", "pending", "status");
  const auto pending = hit_ids(expect_ok(desk.call(search)));
  if (pending.empty()) return {};

  const auto defs = fetch_definitions(desk, {"eEAC", "eEET"});
  const auto& eet = *defs.latest("eEET");
  if (!eet.rules) throw Error(Errc::DefinitionMismatch, "eEET has no processing rules");
  if (outbox) fs::create_directories(*outbox);

  ProcessReport report;
  for (const auto& eac_id : pending) {
    ProcessItem item;
    item.eac_id = eac_id;
    try {
      const auto eac = edoc::EDoc::from_signed(fetch_doc(desk, eac_id));
      item.student_id = one_value(eac.body(), "/eEAC/student/id");
      const Timestamp now = clock_();

      Command validate{"ValidateEdoc", {}};
      validate.add("docId", eac_id).add("at", format_ts(now));
      const auto vr = edoc::ValidityReport::from_xml(*expect_ok(desk.call(validate)).payload);
      if (!vr.valid()) throw Error(Errc::InvalidDoc, "e-EAC does not validate");

      const auto m = manual.find(item.student_id);
      static const std::map<std::string, std::string> kNone;
      const XNode body = edoc::apply_rules(*eet.rules, "eEAC", eac.body(), m == manual.end() ? kNone : m->second,
                                           eet.def);
      const auto draft = wysiwys::render_to_sign(edoc::wrap(eet, body, now), eet);
      const auto signed_doc = wysiwys::sign_rendered(draft, professor.key, professor.cert, now);

      Command store{"StoreEdoc", {}};
      store.add_node("doc", signed_doc.to_xml()).add("consume", eac_id).add("consumeStatus", "processed");
      const Response r = expect_ok(desk.call(store));
      item.eet_id = r.payload->required_attr("docId");
      if (outbox) write_file_atomic(*outbox / (item.eet_id + ".xml"), signed_doc.canonical());
    } catch (const Error& e) {
      item.eet_id.clear();
      item.error = describe(e);
    }
    report.items.push_back(std::move(item));
  }
  return report;
}

CheckResult Scenario::check(proto::Client& desk, const crypto::SignedDoc& signed_doc, bool try_stored) const {
  const Timestamp now = clock_();
  CheckResult out;
  const auto doc = edoc::EDoc::from_signed(signed_doc);
  out.doc_id = doc.doc_id();
  if (doc.type_id() != "eEAC") throw Error(Errc::InvalidDoc, "not an e-EAC");

  std::optional<Response> r;
  if (try_stored) {
    Command by_id{"ValidateEdoc", {}};
    by_id.add("docId", out.doc_id).add("at", format_ts(now));
    r = desk.call(by_id);
    out.stored = r->ok();
    if (!r->ok() && errc_from_string(r->status) != Errc::NotFound) expect_ok(*r);
  }
  if (!out.stored) {
    Command inline_doc{"ValidateEdoc", {}};
    inline_doc.add_node("doc", signed_doc.to_xml()).add("at", format_ts(now));
    r = expect_ok(desk.call(inline_doc));
  }
  out.report = edoc::ValidityReport::from_xml(*r->payload);
  out.render = wysiwys::verify_and_render(signed_doc, fetch_definitions(desk, {"eEAC"}), trust_, now);
  return out;
}

CheckResult Scenario::check_admission(proto::Client& desk, std::string_view eac_bytes) const {
  return check(desk, crypto::SignedDoc::parse(eac_bytes), true);
}

CheckResult Scenario::check_admission(proto::Client& desk, const std::string& student_id,
                                      const std::string& exam_code) const {
  Command search{"SearchEdocs", {}};
  search.add("type", "eEAC").add("where", student_id, "student/id").add("where", exam_code, "exam/code");
  const auto ids = hit_ids(expect_ok(desk.call(search)));
  if (ids.empty()) throw Error(Errc::NotFound, "no e-EAC for " + student_id + " and " + exam_code);
  // Prefer a pending admission over older processed ones.
  for (const auto& id : ids) {
    auto rec = fetch_doc(desk, id);
    Command v{"ValidateEdoc", {}};
    v.add("docId", id).add("at", format_ts(clock_()));
    if (edoc::ValidityReport::from_xml(*expect_ok(desk.call(v)).payload).status) return check(desk, rec, true);
  }
  return check(desk, fetch_doc(desk, ids.front()), true);
}

}  // namespace aida::eas
