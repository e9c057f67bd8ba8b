#pragma once

// Signed command/response messages and their transport.
//
//   <AMessage msgId=".." nonce="<32+ hex>" timestamp=".." direction="command">
//     <Command name="SearchEdocs">
//       <Arg name="type">eEAC</Arg>
//       <Arg name="where" key="status">pending</Arg>
//       <Arg name="doc"><SignedDoc>...</SignedDoc></Arg>
//     </Command>
//   </AMessage>
//
//   <AMessage ... direction="response">
//     <Response status="OK|<error code>" detail=".."><Payload>...</Payload></Response>
//   </AMessage>
//
// The AMessage is the content of a SignedDoc: commands are signed with a
// role certificate, responses with the platform certificate. A response
// echoes the msgId of its command.
//
// Frame: 4-byte big-endian length, then a_canon(SignedDoc) bytes.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "aida/envelope.hpp"
#include "aida/typedef.hpp"

namespace aida::proto {

inline constexpr std::size_t kDefaultFrameCap = 1 << 20;
inline constexpr std::chrono::seconds kSkewWindow{300};

struct Arg {
  std::string name;
  std::string key;
  std::string text;
  std::optional<xml::XNode> node;

  bool operator==(const Arg&) const = default;
};

struct Command {
  std::string name;
  std::vector<Arg> args;

  Command& add(std::string arg_name, std::string text, std::string key = {});
  Command& add_node(std::string arg_name, xml::XNode node);
  const Arg* find(std::string_view arg_name) const;
  std::optional<std::string> text(std::string_view arg_name) const;
  std::vector<const Arg*> all(std::string_view arg_name) const;

  bool operator==(const Command&) const = default;
};

struct Response {
  std::string status = "OK";
  std::string detail;
  std::optional<xml::XNode> payload;

  bool ok() const { return status == "OK"; }
  bool operator==(const Response&) const = default;
};

enum class Direction { Command, Response };

struct AMessage {
  std::string msg_id;
  std::string nonce;
  Timestamp timestamp{};
  std::variant<Command, Response> body;

  Direction direction() const { return body.index() == 0 ? Direction::Command : Direction::Response; }
  const Command& command() const { return std::get<Command>(body); }
  const Response& response() const { return std::get<Response>(body); }

  xml::XNode to_xml() const;
  // Throws Error(SchemaViolation).
  static AMessage from_xml(const xml::XNode& node);

  bool operator==(const AMessage&) const = default;
};

// Structure definition every message must satisfy.
const xml::TypeDef& amessage_typedef();

// Fresh 16-byte hex ids.
std::string fresh_nonce();

std::string frame(std::string_view payload);
std::string encode(const crypto::SignedDoc& signed_msg);

struct Decoded {
  crypto::SignedDoc signed_msg;
  AMessage msg;
};
// Throws Error(FrameTooLarge) when the declared length exceeds `cap`,
// Error(MalformedFrame) for truncated/overlong frames or unparsable XML,
// Error(SchemaViolation) when the content is not a valid AMessage.
Decoded decode(std::string_view frame_bytes, std::size_t cap = kDefaultFrameCap);

crypto::SignedDoc sign_message(const AMessage& msg, const crypto::PrivateKey& key, const crypto::MiniCert& cert);

// Platform-signed response echoing `msg_id`.
crypto::SignedDoc make_response(const std::string& msg_id, Response response, const crypto::PrivateKey& key,
                                const crypto::MiniCert& cert, Timestamp now);

// ---- blocking socket I/O ------------------------------------------------

// Reads one whole frame (prefix included). Throws Error(ConnectionClosed) on
// EOF before the first byte, Error(FrameTooLarge) before reading the body,
// Error(MalformedFrame) on EOF mid-frame, Error(Timeout).
std::string read_frame(int fd, std::size_t cap, std::chrono::milliseconds timeout);
void write_all(int fd, std::string_view bytes);

// Connects to host:port. Throws Error(ConnectionClosed) when refused.
int connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

// ---- ports ----------------------------------------------------------------

struct PortConfig {
  std::string name;  // scenario | service | admin
  std::uint16_t tcp_port = 0;
  // Empty means the full command set.
  std::set<std::string> restricted;
  // "loopback", "any", or "cidr" with the list below (IPv4).
  std::string visibility = "loopback";
  std::vector<std::string> cidrs;
  bool enabled = true;

  bool accepts(const std::string& command) const { return restricted.empty() || restricted.contains(command); }
  bool visible_to(const std::string& ipv4) const;
  std::string bind_address() const { return visibility == "loopback" ? "127.0.0.1" : "0.0.0.0"; }
};

// <ports><port name tcpPort visibility enabled><command>..</command><allow cidr/></port></ports>
std::vector<PortConfig> ports_from_xml(const xml::XNode& node);
xml::XNode ports_to_xml(const std::vector<PortConfig>& ports);

// Accept loop over one listening socket; one thread per connection, one
// frame in, one frame out, repeated until the peer closes.
class FrameServer {
 public:
  // Returns the full response frame for a full request frame.
  using Handler = std::function<std::string(const std::string& request_frame, const std::string& peer)>;

  FrameServer(PortConfig config, Handler handler, std::size_t cap = kDefaultFrameCap);
  ~FrameServer();
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;

  // Binds and starts accepting; returns the bound port (useful with port 0).
  std::uint16_t start();
  void stop();
  bool running() const { return listen_fd_ >= 0; }
  const PortConfig& config() const { return config_; }

 private:
  void accept_loop();
  void serve(int fd, std::string peer);

  PortConfig config_;
  Handler handler_;
  std::size_t cap_;
  int listen_fd_ = -1;
  std::thread acceptor_;
  std::mutex mu_;
  std::set<int> conns_;
  std::vector<std::thread> workers_;
};

// ---- replay defense -------------------------------------------------------

class ReplayGuard {
 public:
  explicit ReplayGuard(std::chrono::seconds window = kSkewWindow) : window_(window) {}
  // Throws Error(ReplaySuspect) outside the window, Error(Replay) for a nonce
  // already seen; otherwise records the nonce.
  void check_and_record(const std::string& nonce, Timestamp msg_time, Timestamp now);
  std::size_t size() const;

 private:
  std::chrono::seconds window_;
  mutable std::mutex mu_;
  std::map<std::string, Timestamp> seen_;
};

// ---- client ---------------------------------------------------------------

class Transport {
 public:
  virtual ~Transport() = default;
  // Sends one request frame, returns the response frame verbatim.
  virtual std::string exchange(const std::string& request_frame) = 0;
};

class TcpTransport : public Transport {
 public:
  TcpTransport(std::string host, std::uint16_t port, std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~TcpTransport() override;
  std::string exchange(const std::string& request_frame) override;

 private:
  std::string host_;
  std::uint16_t port_;
  std::chrono::milliseconds timeout_;
  int fd_ = -1;
};

// POSTs frames to an HTTP tunnel, e.g. "http://127.0.0.1:8080".
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(10));
  std::string exchange(const std::string& request_frame) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// "tcp://host:port" or "http://host:port".
std::unique_ptr<Transport> open_transport(const std::string& endpoint);

class Client {
 public:
  Client(std::unique_ptr<Transport> transport, const crypto::PrivateKey& role_key, crypto::MiniCert role_cert,
         crypto::TrustStore trust, Clock clock = system_clock());

  // Signs and sends; verifies the platform signature and msgId echo. Throws
  // Error(BadResponseSignature) on a bad or mismatched response. Error
  // statuses are returned, not thrown.
  Response call(const Command& cmd);
  // Sends raw request bytes and verifies the reply the same way, except
  // that the msgId must equal `expect_msg_id`.
  Response resend(const std::string& request_frame, const std::string& expect_msg_id);

  const std::string& last_request_frame() const { return last_request_; }
  const std::string& last_response_frame() const { return last_response_; }
  const std::string& last_msg_id() const { return last_msg_id_; }

 private:
  Response finish(const std::string& response_frame, const std::string& msg_id);

  std::unique_ptr<Transport> transport_;
  const crypto::PrivateKey& key_;
  crypto::MiniCert cert_;
  crypto::TrustStore trust_;
  Clock clock_;
  std::string last_request_;
  std::string last_response_;
  std::string last_msg_id_;
};

// HTTP front door that forwards tunnel bodies to a TCP port byte for byte.
// POST /aida/tunnel: 413 when the body exceeds the frame cap, 502 when the
// upstream cannot be reached or fails mid-exchange.
class Gateway {
 public:
  Gateway(std::string upstream_host, std::uint16_t upstream_port, std::size_t cap = kDefaultFrameCap);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds host:port (0 = ephemeral) and serves in a background thread.
  std::uint16_t start(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
  void stop();
  // Blocks serving on host:port.
  void run(const std::string& host, std::uint16_t port);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aida::proto
