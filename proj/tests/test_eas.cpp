#include <doctest.h>

#include "aida/eas.hpp"
#include "platform_env.hpp"

using namespace aida;
using namespace aida::testenv;
using eas::Scenario;
using xml::XNode;

namespace {

struct EasEnv : Env {
  std::map<std::string, testpki::Identity> people;
  platform::UserMap users;

  EasEnv() : Env("eas") {
    std::uint64_t serial = 100;
    for (const char* id : {"s100001", "s100002", "s100003", "s100004", "s100005", "s100006", "s999999", "p2001",
                           "p2002"}) {
      people.emplace(id, testpki::issue(ca, std::string("CN=") + id, {crypto::Purpose::Auth}, serial++));
      // s999999 is known to the organisation but not to the registry.
      users.users[people.at(id).cert.subject_key.key_id()] = id;
    }
    people.emplace("stranger", testpki::issue(ca, "CN=stranger", {crypto::Purpose::Auth}, serial++));
  }

  Scenario scenario() { return Scenario(eas::Registry::load(testfx::kRoot / "eas/registry.xml"), users, trust, [this] {
                          return now;
                        }); }

  eas::Admission admit(const std::string& student, const std::string& exam = "01ABC") {
    auto sa = client("eas");
    return scenario().request_admission(sa, {sso.key, sso.cert}, people.at(student).cert, exam);
  }

  eas::ProcessReport process(const eas::ManualValues& manual, const std::string& prof = "p2001",
                             const std::optional<fs::path>& outbox = std::nullopt) {
    auto desk = client("professor");
    return scenario().process_exam(desk, {prof_sign.key, prof_sign.cert}, people.at(prof).cert, "01ABC", manual,
                                   outbox);
  }

  std::string status_of(const std::string& id) { return p->directory().get(id).attrs.status(); }
};

eas::ManualValues marks(std::initializer_list<std::pair<const char*, const char*>> m) {
  eas::ManualValues out;
  for (const auto& [student, mark] : m) {
    out[student] = {{"/eEET/exam/date", "2026-06-20"},
                    {"/eEET/exam/mark", mark},
                    {"/eEET/exam/questions", "Threat models; TLS handshake"}};
  }
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Internal;
}

}  // namespace

TEST_CASE("registry fixture") {
  const auto r = eas::Registry::load(testfx::kRoot / "eas/registry.xml");
  CHECK(r.students.size() == 6);
  CHECK(r.exam("01ABC").professor_id == "p2001");
  CHECK(code_of([&] { r.check_eligible("s100001", "01ABC"); }) == Errc::Internal);
  CHECK(code_of([&] { r.check_eligible("s100004", "01ABC"); }) == Errc::PaymentDue);
  CHECK(code_of([&] { r.check_eligible("s100005", "01ABC"); }) == Errc::NotEnrolled);
  CHECK(code_of([&] { r.check_eligible("s100006", "01ABC"); }) == Errc::NoExamRights);
  CHECK(code_of([&] { r.check_eligible("s100001", "09QQQ"); }) == Errc::UnknownExam);
  CHECK(code_of([&] { r.check_eligible("s000000", "01ABC"); }) == Errc::UnknownUser);
  const auto back = eas::Registry::from_xml(xml::parse(xml::a_canon(r.to_xml())));
  CHECK(xml::a_canon(back.to_xml()) == xml::a_canon(r.to_xml()));
}

TEST_CASE("request_admission") {
  EasEnv e;
  const auto a = e.admit("s100001");
  CHECK_FALSE(a.existing);
  CHECK(a.not_before == e.now);
  CHECK(a.not_after - a.not_before == days(42));
  CHECK(e.status_of(a.doc_id) == "pending");
  const auto rec = e.p->directory().get(a.doc_id);
  CHECK(edoc::values_at(rec.doc.body(), "/eEAC/student/name") == std::vector<std::string>{"Maria Rossi"});
  CHECK(edoc::values_at(rec.doc.body(), "/eEAC/validity/notAfter") ==
        std::vector<std::string>{"2026-07-13T09:00:00Z"});
  CHECK(rec.doc.signed_doc.signature.signer.subject == "CN=SSO Signing");
  CHECK(rec.receipt.verify(e.trust, rec.bytes));

  // Same request while pending: the stored one comes back.
  e.now += std::chrono::hours(2);
  const auto again = e.admit("s100001");
  CHECK(again.existing);
  CHECK(again.doc_id == a.doc_id);
  CHECK(again.not_after == a.not_after);
  CHECK(e.p->directory().size() == 1);

  // Another exam is a separate admission.
  CHECK(e.admit("s100001", "02XYZ").doc_id != a.doc_id);

  CHECK(code_of([&] { e.admit("s100004"); }) == Errc::PaymentDue);
  CHECK(code_of([&] { e.admit("s100005"); }) == Errc::NotEnrolled);
  CHECK(code_of([&] { e.admit("s100006"); }) == Errc::NoExamRights);
  CHECK(code_of([&] { e.admit("s100001", "09QQQ"); }) == Errc::UnknownExam);
  CHECK(code_of([&] { e.admit("s999999"); }) == Errc::UnknownUser);
  CHECK(code_of([&] { e.admit("stranger"); }) == Errc::UnknownUser);
  CHECK(e.p->directory().size() == 2);
}

TEST_CASE("process_exam issues one e-EET per pending e-EAC") {
  EasEnv e;
  std::vector<std::string> eacs;
  for (const char* s : {"s100001", "s100002", "s100003"}) eacs.push_back(e.admit(s).doc_id);
  e.now += days(19);
  const fs::path outbox = e.root / "outbox";
  const auto report = e.process(marks({{"s100001", "28"}, {"s100002", "30L"}, {"s100003", "18"}}), "p2001", outbox);
  REQUIRE(report.items.size() == 3);
  CHECK(report.issued() == 3);
  for (const auto& item : report.items) {
    INFO(item.error);
    REQUIRE(item.ok());
    CHECK(e.status_of(item.eac_id) == "processed");
    CHECK(e.status_of(item.eet_id) == "issued");
    const auto eac = e.p->directory().get(item.eac_id);
    const auto eet = e.p->directory().get(item.eet_id);
    CHECK(eet.receipt.verify(e.trust, eet.bytes));
    CHECK(eet.doc.signed_doc.signature.signer.subject == "CN=Prof Bianchi");
    // Copied fields are the e-EAC's values byte for byte.
    for (const char* f : {"student/id", "student/name", "student/placeOfBirth", "faculty/name", "exam/code",
                          "exam/name", "validity/notBefore", "validity/notAfter"}) {
      CHECK(edoc::values_at(eet.doc.body(), std::string("/eEET/") + f) ==
            edoc::values_at(eac.doc.body(), std::string("/eEAC/") + f));
    }
    CHECK(read_file(outbox / (item.eet_id + ".xml")) == eet.bytes);
  }
  CHECK(e.process(marks({{"s100001", "28"}})).items.empty());
  CHECK(e.p->directory().problems().empty());
}

TEST_CASE("a failing pair is left alone and the rest complete") {
  EasEnv e;
  std::map<std::string, std::string> eac_of;
  for (const char* s : {"s100001", "s100002", "s100003"}) eac_of[s] = e.admit(s).doc_id;
  auto m = marks({{"s100001", "28"}, {"s100002", "27"}, {"s100003", "25"}});
  m["s100002"].erase("/eEET/exam/mark");
  const auto r1 = e.process(m);
  CHECK(r1.issued() == 2);
  for (const auto& item : r1.items) {
    if (item.student_id == "s100002") {
      CHECK(item.error.rfind("ManualFieldMissing", 0) == 0);
      CHECK(item.error.find("Mark") != std::string::npos);
      CHECK(item.eet_id.empty());
    }
  }
  CHECK(e.status_of(eac_of["s100002"]) == "pending");
  CHECK(e.status_of(eac_of["s100001"]) == "processed");
  CHECK(e.p->directory().size() == 5);

  const auto r2 = e.process(marks({{"s100002", "27"}}));
  REQUIRE(r2.items.size() == 1);
  CHECK(r2.items[0].ok());
  CHECK(e.status_of(eac_of["s100002"]) == "processed");

  // Conservation: issued e-EETs equal processed e-EACs.
  std::size_t eets = e.p->directory().ids_of_type("eEET").size();
  std::size_t processed = 0;
  for (const auto& id : e.p->directory().ids_of_type("eEAC")) processed += e.status_of(id) == "processed";
  CHECK(eets == processed);
  CHECK(eets == 3);
}

TEST_CASE("an expired admission is not processed") {
  EasEnv e;
  const auto a = e.admit("s100001");
  e.now += days(43);
  const auto r = e.process(marks({{"s100001", "28"}}));
  REQUIRE(r.items.size() == 1);
  CHECK_FALSE(r.items[0].ok());
  CHECK(e.status_of(a.doc_id) == "pending");
  CHECK(e.p->directory().ids_of_type("eEET").empty());
}

TEST_CASE("professor scoping") {
  EasEnv e;
  e.admit("s100001");
  CHECK(code_of([&] { e.process(marks({{"s100001", "28"}}), "p2002"); }) == Errc::NoExamRights);
  CHECK(code_of([&] { e.process(marks({{"s100001", "28"}}), "s100001"); }) == Errc::NoExamRights);

  platform::RoleMap m = e.default_roles();
  m.entries[e.key_of("professor")].edoc_types = {"eEET"};
  proto::Command set{"SetRoleMap", {}};
  set.add_node("rolemap", m.to_xml());
  REQUIRE(e.call("admin", set, "admin").ok());
  CHECK(code_of([&] { e.process(marks({{"s100001", "28"}})); }) == Errc::DeniedDoctype);
  CHECK(e.p->directory().size() == 1);

  // Exam-scoped roles never reach the role map or the definitions.
  for (const char* port : {"admin", "scenario"}) {
    proto::Command put{"PutDefinition", {}};
    put.add_node("bundle", e.p->definitions().latest("eEET")->to_xml());
    const auto r1 = e.call("professor", put, port);
    const auto r2 = e.call("professor", set, port);
    CHECK_FALSE(r1.ok());
    CHECK_FALSE(r2.ok());
    CHECK((r1.status == "DENIED_COMMAND" || r1.status == "DENIED_PORT"));
    CHECK((r2.status == "DENIED_COMMAND" || r2.status == "DENIED_PORT"));
  }
}

TEST_CASE("check_admission: file and lookup agree") {
  EasEnv e;
  const auto a = e.admit("s100001");
  const std::string bytes = e.p->directory().get(a.doc_id).bytes;
  auto desk = e.client("professor");
  const auto sc = e.scenario();

  e.now += days(3);
  const auto by_file = sc.check_admission(desk, bytes);
  const auto by_lookup = sc.check_admission(desk, std::string("s100001"), std::string("01ABC"));
  CHECK(by_file.stored);
  CHECK(by_file.doc_id == a.doc_id);
  CHECK(by_file.report.valid());
  CHECK(xml::a_canon(by_file.report.to_xml()) == xml::a_canon(by_lookup.report.to_xml()));
  REQUIRE(by_file.render.rendered());
  CHECK(by_file.render.form()->serialize() == by_lookup.render.form()->serialize());
  CHECK(by_file.render.form()->serialize().find("Maria Rossi") != std::string::npos);

  CHECK(code_of([&] { sc.check_admission(desk, std::string("s100002"), std::string("01ABC")); }) ==
        Errc::NotFound);

  e.now = testpki::kT0 + days(43);
  const auto late = sc.check_admission(desk, bytes);
  CHECK_FALSE(late.report.within_validity_period);
  CHECK_FALSE(late.report.valid());

  e.now = testpki::kT0 + days(5);
  REQUIRE(e.process(marks({{"s100001", "28"}})).issued() == 1);
  const auto done = sc.check_admission(desk, bytes);
  CHECK_FALSE(done.report.status);
  CHECK(done.report.status_value == "processed");
  CHECK_FALSE(done.report.valid());

  // A copy the platform never stored is checked inline.
  const auto loose = e.eeac("s100003");
  const auto inline_check = sc.check_admission(desk, loose.canonical());
  CHECK_FALSE(inline_check.stored);
  CHECK(inline_check.report.status_value == "pending");
}
