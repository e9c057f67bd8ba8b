#pragma once

// The platform server: role map, command dispatch, definitions repository,
// document directory, log and ports.
//
// Data root layout:
//   defs/<typeId>/<version>/{typedef,display,meta,rules}.xml
//   docs/<docId>/doc.xml            canonical SignedDoc as stored
//   docs/<docId>/attrs.xml          <attributes>
//   docs/<docId>/receipt.xml        platform-signed <Receipt>
//   docs/<docId>/revocation.xml     platform-signed <Revocation>, if revoked
//   docs/<docId>/countersigned.xml  latest counter-signed envelope, if any
//   rolemap.xml  ports.xml  usermap.xml  log.txt
//   platform/{platform.key, platform.cert, trust.xml}

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aida/aprotocol.hpp"
#include "aida/edoc.hpp"
#include "aida/error.hpp"

namespace aida::platform {

namespace fs = std::filesystem;

// The command catalog, in a fixed order.
const std::vector<std::string>& command_catalog();
bool is_admin_command(const std::string& name);

// ---- role map -------------------------------------------------------------

struct RoleEntry {
  std::string name;
  std::set<std::string> commands;
  std::set<std::string> edoc_types;
};

// roleKey (PublicKey::key_id of the role certificate) -> entry.
//   <rolemap><role key=".." name=".."><command>..</command><type>..</type></role></rolemap>
struct RoleMap {
  std::map<std::string, RoleEntry> entries;

  xml::XNode to_xml() const;
  static RoleMap from_xml(const xml::XNode& node);
};

// Set-membership decision. `doc_type` is empty for commands that do not
// operate on a document type. Returns nothing when allowed, otherwise
// UnknownRole, DeniedCommand or DeniedDoctype.
std::optional<Errc> authorize(const RoleMap& map, const std::string& role_key, const std::string& command,
                              const std::optional<std::string>& doc_type);

// Full check of a signed command: the envelope must verify at `at` under
// `trust` with the role purpose (else BadSignature), then the map decides.
std::optional<Errc> authorize(const crypto::SignedDoc& signed_msg, const proto::AMessage& msg, const RoleMap& map,
                              const crypto::TrustStore& trust, Timestamp at,
                              const std::optional<std::string>& doc_type);

// ---- user map -------------------------------------------------------------

// auth-certificate key id -> organisation user id.
//   <usermap><user key=".." orgId=".."/></usermap>
struct UserMap {
  std::map<std::string, std::string> users;

  std::optional<std::string> find(const std::string& key_id) const;
  xml::XNode to_xml() const;
  static UserMap from_xml(const xml::XNode& node);
  static UserMap load(const fs::path& path);
};

// ---- receipts -------------------------------------------------------------

// Platform-signed <Receipt docId contentDigest storedAt/>. contentDigest is
// the sha256 hex of the signed content bytes; docId the sha256 hex of the
// whole stored envelope.
struct Receipt {
  std::string doc_id;
  std::string content_digest;
  Timestamp stored_at{};
  crypto::SignedDoc signed_doc;

  // Platform signature and chain verify, and the digests match `stored`.
  bool verify(const crypto::TrustStore& trust, const std::string& stored_bytes) const;
  static Receipt from_signed(crypto::SignedDoc signed_doc);
};

Receipt make_receipt(const edoc::EDoc& doc, Timestamp at, const crypto::PrivateKey& key,
                     const crypto::MiniCert& cert);

// ---- log ------------------------------------------------------------------

struct LogEntry {
  std::uint64_t seq = 0;
  Timestamp timestamp{};
  std::string role_key;
  std::string command;
  std::string doc_id;
  std::string outcome;  // OK or an error code

  xml::XNode to_xml() const;
  static LogEntry from_xml(const xml::XNode& node);
};

// Append-only log.txt, one canonical <LogEntry/> per line.
class Log {
 public:
  explicit Log(fs::path path);

  LogEntry append(Timestamp at, const std::string& role_key, const std::string& command, const std::string& doc_id,
                  const std::string& outcome);
  // Raw lines, seq in [from, to].
  std::vector<std::string> lines(std::uint64_t from = 1, std::uint64_t to = UINT64_MAX) const;
  std::uint64_t last_seq() const;
  // Problems found when opening: gaps, unparsable lines. A torn final line
  // left by a crash is dropped and reported here too.
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  fs::path path_;
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
  std::uint64_t seq_ = 0;
  std::vector<std::string> problems_;
};

// ---- document directory ---------------------------------------------------

struct DocRecord {
  edoc::EDoc doc;
  std::string bytes;
  edoc::AttributeSet attrs;
  Receipt receipt;
  std::optional<edoc::RevocationRecord> revocation;
  std::optional<crypto::SignedDoc> countersigned;
};

class Directory {
 public:
  // Loads docs/ under `root`. Records whose bytes do not hash to their
  // directory name are left out and listed in problems().
  explicit Directory(fs::path root);

  bool contains(const std::string& doc_id) const;
  // Throws Error(NotFound).
  DocRecord get(const std::string& doc_id) const;
  std::vector<std::string> ids_of_type(const std::string& type_id) const;
  std::size_t size() const;

  // Throws Error(Duplicate).
  void insert(const DocRecord& rec);
  // Replaces the attributes when the current ones equal `expected`; returns
  // false otherwise.
  bool compare_and_set(const std::string& doc_id, const edoc::AttributeSet& expected,
                       const edoc::AttributeSet& next);
  // Keeps an existing revocation; returns the one in effect.
  edoc::RevocationRecord set_revocation(const std::string& doc_id, const edoc::RevocationRecord& rev);
  void set_countersigned(const std::string& doc_id, const crypto::SignedDoc& signed_doc);

  // Inserts `rec` and moves `consumed` from `expected` to `next` as one step:
  // either both happen or neither does. Throws Error(Duplicate),
  // Error(NotFound) or Error(Conflict).
  void insert_consuming(const DocRecord& rec, const std::string& consumed, const edoc::AttributeSet& expected,
                        const edoc::AttributeSet& next);

  const std::vector<std::string>& problems() const { return problems_; }
  // Re-hashes every stored doc.xml; returns the ids that do not match.
  std::vector<std::string> verify_all() const;

 private:
  void write_record(const DocRecord& rec) const;
  fs::path dir_of(const std::string& doc_id) const { return root_ / "docs" / doc_id; }

  fs::path root_;
  mutable std::shared_mutex mu_;
  std::map<std::string, DocRecord> docs_;
  std::vector<std::string> problems_;
};

// ---- the server -----------------------------------------------------------

struct PlatformIdentity {
  crypto::PrivateKey key;
  crypto::MiniCert cert;
  crypto::TrustStore trust;

  // platform/{platform.key, platform.cert, trust.xml} under the data root.
  static PlatformIdentity load(const fs::path& data_root, std::string_view passphrase);
  void save(const fs::path& data_root, std::string_view passphrase) const;
};

class Platform {
 public:
  Platform(fs::path data_root, PlatformIdentity identity, Clock clock = system_clock());
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  // Full pipeline for one request frame arriving on `port`; always returns a
  // signed response frame.
  std::string handle(const std::string& request_frame, const proto::PortConfig& port);

  // Starts every enabled port from ports.xml (or `ports` when given).
  // Returns name -> bound TCP port.
  std::map<std::string, std::uint16_t> start(std::optional<std::vector<proto::PortConfig>> ports = std::nullopt);
  void stop();
  std::map<std::string, std::uint16_t> bound_ports() const;

  const crypto::MiniCert& cert() const { return id_.cert; }
  const crypto::TrustStore& trust() const { return id_.trust; }
  edoc::DefinitionRegistry definitions() const;
  RoleMap role_map() const;
  const Directory& directory() const { return dir_; }
  const Log& log() const { return log_; }
  const fs::path& data_root() const { return root_; }

 private:
  struct Outcome {
    proto::Response response;
    std::string doc_id;
  };
  Outcome execute(const proto::AMessage& msg, const crypto::SignedDoc& signed_msg, const proto::PortConfig& port);
  std::optional<std::string> doc_type_of(const proto::Command& cmd) const;
  proto::Response dispatch(const proto::Command& cmd, std::string& doc_id, const RoleEntry& role,
                           const std::string& role_key);

  proto::Response create_edoc(const proto::Command& cmd);
  proto::Response store_edoc(const proto::Command& cmd, std::string& doc_id, const RoleEntry& role);
  proto::Response get_edoc(const proto::Command& cmd, std::string& doc_id);
  proto::Response search_edocs(const proto::Command& cmd);
  proto::Response set_attribute(const proto::Command& cmd, std::string& doc_id);
  proto::Response revoke_edoc(const proto::Command& cmd, std::string& doc_id);
  proto::Response validate_edoc(const proto::Command& cmd, std::string& doc_id);
  proto::Response counter_sign(const proto::Command& cmd, std::string& doc_id);
  proto::Response get_definition(const proto::Command& cmd);
  proto::Response acknowledge(const proto::Command& cmd, std::string& doc_id);
  proto::Response put_definition(const proto::Command& cmd);
  proto::Response set_role_map(const proto::Command& cmd);
  proto::Response port_control(const proto::Command& cmd);
  proto::Response get_log(const proto::Command& cmd);

  void save_ports_locked() const;
  std::uint16_t start_port_locked(const proto::PortConfig& cfg);

  fs::path root_;
  PlatformIdentity id_;
  Clock clock_;
  proto::ReplayGuard replay_;
  Log log_;
  Directory dir_;

  mutable std::shared_mutex defs_mu_;
  std::shared_ptr<const edoc::DefinitionRegistry> defs_;
  std::shared_ptr<const RoleMap> roles_;

  mutable std::mutex ports_mu_;
  std::vector<proto::PortConfig> ports_;
  std::map<std::string, std::unique_ptr<proto::FrameServer>> servers_;
};

}  // namespace aida::platform
