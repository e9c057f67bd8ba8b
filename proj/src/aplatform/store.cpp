#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "aida/aplatform.hpp"
#include "aida/error.hpp"

namespace aida::platform {

using xml::XNode;

namespace {

bool same(const edoc::AttributeSet& a, const edoc::AttributeSet& b) {
  return a.statics == b.statics && a.dynamic == b.dynamic;
}

void write_xml(const fs::path& p, const XNode& n) { write_file_atomic(p, xml::a_canon(n) + "\n"); }

XNode read_xml(const fs::path& p) { return xml::parse(read_file(p)); }

}  // namespace

// ---- log ------------------------------------------------------------------

Log::Log(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  const std::string data = read_file(path_);
  std::size_t pos = 0;
  std::size_t kept_bytes = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      problems_.push_back("torn final line dropped");
      break;
    }
    const std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    try {
      const LogEntry e = LogEntry::from_xml(xml::parse(line));
      if (e.seq != seq_ + 1) problems_.push_back("gap before seq " + std::to_string(e.seq));
      seq_ = e.seq;
    } catch (const Error& err) {
      problems_.push_back("unparsable line " + std::to_string(lines_.size() + 1) + ": " + err.detail());
    }
    lines_.push_back(line);
    kept_bytes = pos;
  }
  if (kept_bytes != data.size()) write_file_atomic(path_, data.substr(0, kept_bytes));
}

LogEntry Log::append(Timestamp at, const std::string& role_key, const std::string& command, const std::string& doc_id,
                     const std::string& outcome) {
  std::lock_guard lock(mu_);
  LogEntry e{seq_ + 1, at, role_key, command, doc_id, outcome};
  const std::string line = xml::a_canon(e.to_xml());
  const std::string record = line + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::Io, path_.string() + ": " + std::strerror(errno));
  const ssize_t w = ::write(fd, record.data(), record.size());
  const bool ok = w == static_cast<ssize_t>(record.size()) && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw Error(Errc::Io, "log append failed");
  seq_ = e.seq;
  lines_.push_back(line);
  return e;
}

std::vector<std::string> Log::lines(std::uint64_t from, std::uint64_t to) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const std::uint64_t seq = i + 1;
    if (seq >= from && seq <= to) out.push_back(lines_[i]);
  }
  return out;
}

std::uint64_t Log::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

// ---- directory ------------------------------------------------------------

Directory::Directory(fs::path root) : root_(std::move(root)) {
  const fs::path docs = root_ / "docs";
  fs::create_directories(docs);
  std::vector<std::pair<std::string, XNode>> pending_consumes;
  for (const auto& entry : fs::directory_iterator(docs)) {
    if (!entry.is_directory()) continue;
    const std::string id = entry.path().filename().string();
    const fs::path d = entry.path();
    if (!fs::exists(d / "doc.xml")) {
      problems_.push_back(id + ": incomplete record ignored");
      continue;
    }
    try {
      DocRecord rec;
      rec.bytes = read_file(d / "doc.xml");
      if (crypto::sha256_hex(rec.bytes) != id) {
        problems_.push_back(id + ": stored bytes do not hash to the docId");
        continue;
      }
      rec.doc = edoc::EDoc::parse(rec.bytes);
      rec.attrs = edoc::AttributeSet::from_xml(read_xml(d / "attrs.xml"));
      rec.receipt = Receipt::from_signed(crypto::SignedDoc::parse(read_file(d / "receipt.xml")));
      if (fs::exists(d / "revocation.xml")) {
        rec.revocation = edoc::RevocationRecord::parse(read_file(d / "revocation.xml"));
      }
      if (fs::exists(d / "countersigned.xml")) {
        rec.countersigned = crypto::SignedDoc::parse(read_file(d / "countersigned.xml"));
      }
      if (fs::exists(d / "consumes.xml")) pending_consumes.emplace_back(id, read_xml(d / "consumes.xml"));
      docs_.emplace(id, std::move(rec));
    } catch (const Error& e) {
      problems_.push_back(id + ": " + std::string(to_string(e.code())) + " " + e.detail());
    }
  }
  // A crash between storing a document and updating the one it consumes is
  // completed here.
  for (const auto& [id, c] : pending_consumes) {
    const std::string& target = c.required_attr("docId");
    auto it = docs_.find(target);
    if (it == docs_.end()) continue;
    const auto expected = edoc::AttributeSet::from_xml(*c.child("expected")->element_children().front());
    const auto next = edoc::AttributeSet::from_xml(*c.child("next")->element_children().front());
    if (same(it->second.attrs, expected)) {
      write_xml(dir_of(target) / "attrs.xml", next.to_xml());
      it->second.attrs = next;
    }
  }
}

bool Directory::contains(const std::string& doc_id) const {
  std::shared_lock lock(mu_);
  return docs_.contains(doc_id);
}

DocRecord Directory::get(const std::string& doc_id) const {
  std::shared_lock lock(mu_);
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw Error(Errc::NotFound, doc_id);
  return it->second;
}

std::vector<std::string> Directory::ids_of_type(const std::string& type_id) const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, rec] : docs_) {
    if (rec.doc.type_id() == type_id) out.push_back(id);
  }
  return out;
}

std::size_t Directory::size() const {
  std::shared_lock lock(mu_);
  return docs_.size();
}

void Directory::write_record(const DocRecord& rec) const {
  const fs::path d = dir_of(rec.doc.doc_id());
  fs::create_directories(d);
  write_xml(d / "attrs.xml", rec.attrs.to_xml());
  write_file_atomic(d / "receipt.xml", rec.receipt.signed_doc.canonical());
  // doc.xml last: its presence marks the record complete.
  write_file_atomic(d / "doc.xml", rec.bytes);
}

void Directory::insert(const DocRecord& rec) {
  std::unique_lock lock(mu_);
  const std::string id = rec.doc.doc_id();
  if (docs_.contains(id)) throw Error(Errc::Duplicate, id);
  write_record(rec);
  docs_.emplace(id, rec);
}

bool Directory::compare_and_set(const std::string& doc_id, const edoc::AttributeSet& expected,
                                const edoc::AttributeSet& next) {
  std::unique_lock lock(mu_);
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw Error(Errc::NotFound, doc_id);
  if (!same(it->second.attrs, expected)) return false;
  write_xml(dir_of(doc_id) / "attrs.xml", next.to_xml());
  it->second.attrs = next;
  return true;
}

edoc::RevocationRecord Directory::set_revocation(const std::string& doc_id, const edoc::RevocationRecord& rev) {
  std::unique_lock lock(mu_);
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw Error(Errc::NotFound, doc_id);
  if (it->second.revocation) return *it->second.revocation;
  write_file_atomic(dir_of(doc_id) / "revocation.xml", rev.signed_doc.canonical());
  it->second.revocation = rev;
  return rev;
}

void Directory::set_countersigned(const std::string& doc_id, const crypto::SignedDoc& signed_doc) {
  std::unique_lock lock(mu_);
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw Error(Errc::NotFound, doc_id);
  write_file_atomic(dir_of(doc_id) / "countersigned.xml", signed_doc.canonical());
  it->second.countersigned = signed_doc;
}

void Directory::insert_consuming(const DocRecord& rec, const std::string& consumed,
                                 const edoc::AttributeSet& expected, const edoc::AttributeSet& next) {
  std::unique_lock lock(mu_);
  const std::string id = rec.doc.doc_id();
  if (docs_.contains(id)) throw Error(Errc::Duplicate, id);
  const auto it = docs_.find(consumed);
  if (it == docs_.end()) throw Error(Errc::NotFound, consumed);
  if (!same(it->second.attrs, expected)) throw Error(Errc::Conflict, consumed + " changed concurrently");

  XNode c = XNode::element("Consumes");
  c.set_attr("docId", consumed);
  c.add(XNode::element("expected")).add(expected.to_xml());
  c.add(XNode::element("next")).add(next.to_xml());
  const fs::path d = dir_of(id);
  fs::create_directories(d);
  write_xml(d / "consumes.xml", c);
  write_record(rec);
  write_xml(dir_of(consumed) / "attrs.xml", next.to_xml());
  docs_.emplace(id, rec);
  it->second.attrs = next;
}

std::vector<std::string> Directory::verify_all() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> bad;
  for (const auto& [id, rec] : docs_) {
    try {
      if (crypto::sha256_hex(read_file(dir_of(id) / "doc.xml")) != id) bad.push_back(id);
    } catch (const Error&) {
      bad.push_back(id);
    }
  }
  return bad;
}

// ---- identity -------------------------------------------------------------

PlatformIdentity PlatformIdentity::load(const fs::path& data_root, std::string_view passphrase) {
  const fs::path d = data_root / "platform";
  PlatformIdentity id;
  id.key = crypto::load_key_store(d / "platform.key", passphrase);
  id.cert = crypto::load_cert(d / "platform.cert");
  id.trust = crypto::TrustStore::load(d / "trust.xml");
  if (id.key.public_key() != id.cert.subject_key) throw Error(Errc::KeyCertMismatch, "platform key and certificate");
  return id;
}

void PlatformIdentity::save(const fs::path& data_root, std::string_view passphrase) const {
  const fs::path d = data_root / "platform";
  fs::create_directories(d);
  crypto::save_key_store(d / "platform.key", key, passphrase);
  crypto::save_cert(d / "platform.cert", cert);
  trust.save(d / "trust.xml");
}

}  // namespace aida::platform
