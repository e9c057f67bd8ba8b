#include "aida/demo.hpp"

#include <unistd.h>

#include <ostream>

#include "aida/eas.hpp"
#include "aida/error.hpp"

namespace aida::demo {

using proto::Command;

namespace {

const Timestamp kFrom = parse_ts("2025-01-01T00:00:00Z");
const Timestamp kTo = parse_ts("2045-01-01T00:00:00Z");

const std::vector<std::string> kStudents = {"s100001", "s100002", "s100003", "s100004", "s100005", "s100006"};
const std::vector<std::string> kProfessors = {"p2001", "p2002"};
const std::vector<std::string> kRoles = {"admin", "eas", "professor", "registrar"};

struct Pair {
  crypto::PrivateKey key;
  crypto::MiniCert cert;
};

Pair issue(const Pair& ca, const std::string& subject, std::set<crypto::Purpose> purposes, std::uint64_t serial) {
  Pair p{crypto::PrivateKey::generate(crypto::SigAlg::Ed25519), {}};
  crypto::MiniCert body;
  body.subject = subject;
  body.subject_key = p.key.public_key();
  body.purposes = std::move(purposes);
  body.serial = serial;
  body.not_before = kFrom;
  body.not_after = kTo;
  p.cert = crypto::issue_cert(body, ca.key, ca.cert, kFrom);
  return p;
}

void save(const fs::path& dir, const std::string& name, const Pair& p) {
  fs::create_directories(dir);
  crypto::save_key_store(dir / (name + ".key"), p.key, kFixturePassphrase);
  crypto::save_cert(dir / (name + ".cert"), p.cert);
}

Pair load(const fs::path& dir, const std::string& name) {
  return {crypto::load_key_store(dir / (name + ".key"), kFixturePassphrase), crypto::load_cert(dir / (name + ".cert"))};
}

fs::path fresh_work_dir() {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("aida-demo-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(p);
  return p;
}

eas::ManualValues marks() {
  const std::vector<std::pair<std::string, std::string>> m = {{"s100001", "28"}, {"s100002", "30L"}, {"s100003", "24"}};
  eas::ManualValues out;
  for (const auto& [s, mark] : m) {
    out[s] = {{"/eEET/exam/date", "2026-06-20"},
              {"/eEET/exam/mark", mark},
              {"/eEET/exam/questions", "Threat models; TLS handshake; XML signatures"}};
  }
  return out;
}

template <class F>
void step(std::ostream& out, const std::string& title, bool& flag, F&& f) {
  out << "== " << title << "\n";
  try {
    flag = f();
  } catch (const Error& e) {
    out << "   error: " << to_string(e.code()) << ": " << e.detail() << "\n";
    flag = false;
  } catch (const std::exception& e) {
    out << "   error: " << e.what() << "\n";
    flag = false;
  }
  out << "   " << (flag ? "ok" : "FAILED") << "\n";
}

}  // namespace

void write_fixtures(const fs::path& dir) {
  const fs::path pki = dir / "pki";
  Pair ca{crypto::PrivateKey::generate(crypto::SigAlg::Ed25519), {}};
  crypto::MiniCert body;
  body.subject = "CN=AIDA Demo CA";
  body.serial = 1;
  body.not_before = kFrom;
  body.not_after = kTo;
  ca.cert = crypto::self_sign(body, ca.key);
  save(pki, "ca", ca);

  std::uint64_t serial = 10;
  save(pki, "platform", issue(ca, "CN=Aplatform", {crypto::Purpose::Platform}, serial++));
  save(pki, "sso", issue(ca, "CN=SSO Signing Service", {crypto::Purpose::Sign}, serial++));
  save(pki, "prof-sign", issue(ca, "CN=Prof. Anna Verdi", {crypto::Purpose::Sign}, serial++));

  platform::RoleMap roles;
  const std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>> grants = {
      {"admin", {{"PutDefinition", "SetRoleMap", "PortControl", "GetLog", "GetDefinition"}, {"eEAC", "eEET"}}},
      {"eas",
       {{"CreateEdoc", "StoreEdoc", "SearchEdocs", "GetEdoc", "ValidateEdoc", "GetDefinition", "Acknowledge"},
        {"eEAC"}}},
      {"professor",
       {{"SearchEdocs", "StoreEdoc", "SetAttribute", "GetEdoc", "GetDefinition", "ValidateEdoc", "Acknowledge"},
        {"eEAC", "eEET"}}},
      {"registrar", {{"RevokeEdoc", "ValidateEdoc", "GetEdoc", "CounterSign", "SearchEdocs", "Acknowledge"},
                     {"eEAC", "eEET"}}},
  };
  for (const auto& r : kRoles) {
    const Pair p = issue(ca, "CN=role " + r, {crypto::Purpose::Role}, serial++);
    save(pki / "roles", r, p);
    roles.entries[p.cert.subject_key.key_id()] = {r, grants.at(r).first, grants.at(r).second};
  }

  platform::UserMap users;
  for (const auto& who : kStudents) {
    const Pair p = issue(ca, "CN=" + who, {crypto::Purpose::Auth}, serial++);
    save(pki / "auth", who, p);
    users.users[p.cert.subject_key.key_id()] = who;
  }
  for (const auto& who : kProfessors) {
    const Pair p = issue(ca, "CN=" + who, {crypto::Purpose::Auth}, serial++);
    save(pki / "auth", who, p);
    users.users[p.cert.subject_key.key_id()] = who;
  }

  crypto::TrustStore trust;
  trust.add_anchor(ca.cert);
  trust.save(dir / "trust.xml");
  write_file_atomic(dir / "rolemap.xml", xml::a_canon(roles.to_xml()) + "\n");
  write_file_atomic(dir / "usermap.xml", xml::a_canon(users.to_xml()) + "\n");
  std::vector<proto::PortConfig> ports = {
      {"scenario", 7001, {}, "loopback", {}, true},
      {"service", 7002, {"SearchEdocs", "GetEdoc", "ValidateEdoc", "Acknowledge", "GetDefinition"}, "loopback", {}, true},
      {"admin", 7003, {}, "loopback", {}, true},
  };
  write_file_atomic(dir / "ports.xml", xml::a_canon(proto::ports_to_xml(ports)) + "\n");
}

void prepare_data_root(const fs::path& fixtures, const fs::path& root) {
  const fs::path demo = fixtures / "demo";
  fs::create_directories(root);
  fs::copy(fixtures / "defs", root / "defs", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  for (const char* f : {"rolemap.xml", "usermap.xml"}) {
    fs::copy_file(demo / f, root / f, fs::copy_options::overwrite_existing);
  }
  Pair p = load(demo / "pki", "platform");
  platform::PlatformIdentity id{std::move(p.key), p.cert, crypto::TrustStore::load(demo / "trust.xml")};
  id.save(root, kFixturePassphrase);
}

Result run(const Options& opts, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Result res;
  const fs::path fx = opts.fixtures;
  const fs::path demo = fx / "demo";
  const fs::path pki = demo / "pki";
  const fs::path root = opts.work.empty() ? fresh_work_dir() : opts.work;
  out << "data root: " << root.string() << "\n";

  prepare_data_root(fx, root);
  const auto trust = crypto::TrustStore::load(demo / "trust.xml");
  const std::vector<proto::PortConfig> ports = {
      {"scenario", 0, {}, "loopback", {}, true},
      {"service", 0, {"SearchEdocs", "GetEdoc", "ValidateEdoc", "Acknowledge", "GetDefinition"}, "loopback", {}, true},
      {"admin", 0, {}, "loopback", {}, true},
  };

  auto p = std::make_unique<platform::Platform>(root, platform::PlatformIdentity::load(root, kFixturePassphrase));
  const auto bound = p->start(ports);
  proto::Gateway gateway("127.0.0.1", bound.at("scenario"));
  const std::uint16_t gw = gateway.start();
  out << "platform: scenario " << bound.at("scenario") << ", service " << bound.at("service") << ", admin "
      << bound.at("admin") << "; gateway http://127.0.0.1:" << gw << "\n";

  const Pair eas_role = load(pki / "roles", "eas");
  const Pair prof_role = load(pki / "roles", "professor");
  const Pair sso = load(pki, "sso");
  const Pair prof_sign = load(pki, "prof-sign");
  const auto registry = eas::Registry::load(fx / "eas/registry.xml");
  const auto users = platform::UserMap::load(demo / "usermap.xml");
  const eas::Scenario scenario(registry, users, trust);
  const std::string gw_url = "http://127.0.0.1:" + std::to_string(gw);

  // The SA talks through the gateway, the professor's desk directly.
  proto::Client sa(std::make_unique<proto::HttpTransport>(gw_url), eas_role.key, eas_role.cert, trust);
  proto::Client desk(std::make_unique<proto::TcpTransport>("127.0.0.1", bound.at("scenario")), prof_role.key,
                     prof_role.cert, trust);

  step(out, "students request admission to 01ABC", res.eacs_pending_42d, [&] {
    bool good = true;
    for (const char* s : {"s100001", "s100002", "s100003"}) {
      const auto auth = crypto::load_cert(pki / "auth" / (std::string(s) + ".cert"));
      const auto a = scenario.request_admission(sa, {sso.key, sso.cert}, auth, "01ABC");
      res.eacs.push_back(a.doc_id);
      const std::string status = p->directory().get(a.doc_id).attrs.status();
      const bool span = a.not_after - a.not_before == eas::kAdmissionValidity;
      out << "   " << s << " e-EAC " << a.doc_id.substr(0, 16) << " status " << status << " valid "
          << format_ts(a.not_before) << " .. " << format_ts(a.not_after) << "\n";
      good = good && status == "pending" && span && !a.existing;
    }
    // Ineligible request, reported individually.
    try {
      scenario.request_admission(sa, {sso.key, sso.cert}, crypto::load_cert(pki / "auth/s100004.cert"), "01ABC");
      good = false;
    } catch (const Error& e) {
      out << "   s100004 refused: " << to_string(e.code()) << "\n";
      good = good && e.code() == Errc::PaymentDue;
    }
    return good;
  });

  step(out, "professor processes exam 01ABC", res.processed_all, [&] {
    const auto auth = crypto::load_cert(pki / "auth/p2001.cert");
    const auto report = scenario.process_exam(desk, {prof_sign.key, prof_sign.cert}, auth, "01ABC", marks(),
                                              root / "outbox");
    bool good = report.items.size() == 3 && report.issued() == 3;
    for (const auto& item : report.items) {
      if (!item.ok()) {
        out << "   " << item.student_id << ": " << item.error << "\n";
        continue;
      }
      res.eets.push_back(item.eet_id);
      const auto eac = p->directory().get(item.eac_id).attrs.status();
      const auto eet = p->directory().get(item.eet_id).attrs.status();
      out << "   " << item.student_id << " e-EET " << item.eet_id.substr(0, 16) << " " << eet << ", e-EAC " << eac
          << "\n";
      good = good && eac == "processed" && eet == "issued";
    }
    return good;
  });

  step(out, "receipts verify against the stored bytes", res.receipts_verify, [&] {
    bool good = !res.eacs.empty() && !res.eets.empty();
    std::vector<std::string> all = res.eacs;
    all.insert(all.end(), res.eets.begin(), res.eets.end());
    for (const auto& id : all) {
      Command ack{"Acknowledge", {}};
      ack.add("docId", id);
      const auto r = eas::expect_ok(desk.call(ack));
      const auto receipt = platform::Receipt::from_signed(crypto::SignedDoc::from_xml(*r.payload));
      Command get{"GetEdoc", {}};
      get.add("docId", id);
      const auto g = eas::expect_ok(desk.call(get));
      const std::string bytes = xml::a_canon(*g.payload->child("SignedDoc"));
      good = good && receipt.verify(trust, bytes) && receipt.doc_id == id;
    }
    out << "   " << all.size() << " receipts checked\n";
    return good;
  });

  step(out, "admission check 43 days later", res.expired_rejected, [&] {
    const Timestamp later = now_utc() + days(43);
    const eas::Scenario future(registry, users, trust, [later] { return later; });
    Command get{"GetEdoc", {}};
    get.add("docId", res.eacs.at(0));
    const std::string bytes = xml::a_canon(*eas::expect_ok(desk.call(get)).payload->child("SignedDoc"));
    proto::Client late_desk(std::make_unique<proto::TcpTransport>("127.0.0.1", bound.at("scenario")), prof_role.key,
                            prof_role.cert, trust);
    const auto r = future.check_admission(late_desk, bytes);
    out << "   withinValidityPeriod=" << (r.report.within_validity_period ? "true" : "false")
        << " valid=" << (r.report.valid() ? "true" : "false") << "\n";
    return !r.report.within_validity_period && !r.report.valid();
  });

  gateway.stop();
  p->stop();
  const std::uint64_t last = p->log().last_seq();
  p.reset();

  step(out, "restart and re-verify", res.restart_intact, [&] {
    p = std::make_unique<platform::Platform>(root, platform::PlatformIdentity::load(root, kFixturePassphrase));
    const auto& dir = p->directory();
    const auto bad = dir.verify_all();
    bool good = bad.empty() && dir.problems().empty() && dir.size() == res.eacs.size() + res.eets.size();
    for (const auto& id : res.eacs) {
      const auto rec = dir.get(id);
      good = good && crypto::sha256_hex(rec.bytes) == id && rec.attrs.status() == "processed";
    }
    for (const auto& id : res.eets) good = good && crypto::sha256_hex(dir.get(id).bytes) == id;
    out << "   " << dir.size() << " records, " << bad.size() << " mismatches\n";
    return good;
  });

  step(out, "log sequence", res.log_gapless, [&] {
    const auto& log = p->log();
    const auto lines = log.lines();
    bool good = log.problems().empty() && log.last_seq() == last && lines.size() == last;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      good = good && platform::LogEntry::from_xml(xml::parse(lines[i])).seq == i + 1;
    }
    out << "   " << lines.size() << " entries, last seq " << log.last_seq() << "\n";
    return good;
  });
  p.reset();

  if (!opts.keep) fs::remove_all(root);
  res.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  out << (res.ok() ? "DEMO OK" : "DEMO FAILED") << " in " << res.elapsed.count() << " ms\n";
  return res;
}

}  // namespace aida::demo
