#pragma once

// Exam admission service: the student and professor workflows as a client
// of the platform, with a stub registry standing in for the university
// databases.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aida/aplatform.hpp"
#include "aida/aprotocol.hpp"
#include "aida/wysiwys.hpp"

namespace aida::eas {

namespace fs = std::filesystem;

inline constexpr std::chrono::seconds kAdmissionValidity = days(42);

struct Student {
  std::string id;
  std::string name;
  std::string place_of_birth;
  bool enrolled = false;
  std::set<std::string> exam_rights;
  bool payments_ok = false;
};

struct Exam {
  std::string code;
  std::string name;
  std::string faculty;
  std::string professor_id;
};

//   <registry>
//     <student id name placeOfBirth enrolled paymentsOk><right exam=".."/></student>
//     <exam code name faculty professorId/>
//   </registry>
struct Registry {
  std::map<std::string, Student> students;
  std::map<std::string, Exam> exams;

  // Throws UnknownUser / UnknownExam.
  const Student& student(const std::string& id) const;
  const Exam& exam(const std::string& code) const;
  // Enrollment, rights and payments, in that order. Throws the first that
  // fails: NotEnrolled, NoExamRights, PaymentDue.
  void check_eligible(const std::string& student_id, const std::string& exam_code) const;

  xml::XNode to_xml() const;
  static Registry from_xml(const xml::XNode& node);
  static Registry load(const fs::path& path);
};

struct Signer {
  const crypto::PrivateKey& key;
  crypto::MiniCert cert;
};

struct Admission {
  std::string doc_id;
  bool existing = false;
  Timestamp not_before{};
  Timestamp not_after{};
};

struct ProcessItem {
  std::string eac_id;
  std::string student_id;
  std::string eet_id;
  std::string error;  // "<code>: <detail>" when the pair was left untouched

  bool ok() const { return error.empty(); }
};

struct ProcessReport {
  std::vector<ProcessItem> items;

  std::size_t issued() const;
};

struct CheckResult {
  std::string doc_id;
  bool stored = false;
  edoc::ValidityReport report;
  wysiwys::VerifiedRender render;
};

// Manual values per student id, keyed by e-EET target path.
using ManualValues = std::map<std::string, std::map<std::string, std::string>>;

// Throws Error(<status>) for a non-OK response.
proto::Response expect_ok(proto::Response r);

// One bundle fetched with GetDefinition, latest when `version` is 0. Throws
// Error(DefinitionMismatch) when the digest sent along does not match.
edoc::DefinitionBundle fetch_definition(proto::Client& client, const std::string& type, int version = 0);
// Latest bundles for `types`.
edoc::DefinitionRegistry fetch_definitions(proto::Client& client, const std::vector<std::string>& types);

class Scenario {
 public:
  Scenario(Registry registry, platform::UserMap users, crypto::TrustStore trust, Clock clock = system_clock());

  // Resolves the authentication certificate to an organisation id. Throws
  // UnknownUser for an untrusted or unmapped certificate.
  std::string resolve(const crypto::MiniCert& auth_cert) const;

  // Runs the admission checks and stores an e-EAC signed by `sso`. A
  // pending e-EAC for the same student and exam is returned as is.
  Admission request_admission(proto::Client& sa, const Signer& sso, const crypto::MiniCert& student_auth,
                              const std::string& exam_code) const;

  // Issues one e-EET per pending e-EAC of the exam and marks each e-EAC
  // processed in the same store. A failing pair is reported and left
  // pending; the others proceed. Signed e-EETs are copied to `outbox`.
  ProcessReport process_exam(proto::Client& desk, const Signer& professor, const crypto::MiniCert& professor_auth,
                             const std::string& exam_code, const ManualValues& manual,
                             const std::optional<fs::path>& outbox = std::nullopt) const;

  // From an e-EAC file brought by the student.
  CheckResult check_admission(proto::Client& desk, std::string_view eac_bytes) const;
  // From a directory lookup. Throws NotFound.
  CheckResult check_admission(proto::Client& desk, const std::string& student_id,
                              const std::string& exam_code) const;

  const Registry& registry() const { return registry_; }

 private:
  CheckResult check(proto::Client& desk, const crypto::SignedDoc& signed_doc, bool try_stored) const;

  Registry registry_;
  platform::UserMap users_;
  crypto::TrustStore trust_;
  Clock clock_;
};

}  // namespace aida::eas
