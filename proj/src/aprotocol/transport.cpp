#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "aida/aprotocol.hpp"
#include "aida/error.hpp"

namespace aida::proto {

namespace {

using Deadline = std::chrono::steady_clock::time_point;

// Reads exactly n bytes. Returns false on EOF before any byte was read.
bool read_exact(int fd, char* buf, std::size_t n, Deadline deadline, bool eof_ok) {
  std::size_t got = 0;
  while (got < n) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(Errc::Timeout, "read timed out");
    pollfd p{fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, static_cast<int>(left.count()));
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::ConnectionClosed, std::strerror(errno));
    }
    if (pr == 0) throw Error(Errc::Timeout, "read timed out");
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(Errc::ConnectionClosed, std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0 && eof_ok) return false;
      throw Error(Errc::MalformedFrame, "connection closed mid-frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

std::string read_frame(int fd, std::size_t cap, std::chrono::milliseconds timeout) {
  const Deadline deadline = std::chrono::steady_clock::now() + timeout;
  std::string out(4, '\0');
  if (!read_exact(fd, out.data(), 4, deadline, true)) throw Error(Errc::ConnectionClosed, "peer closed");
  const auto* p = reinterpret_cast<const unsigned char*>(out.data());
  const std::size_t len = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
  if (len > cap) throw Error(Errc::FrameTooLarge, std::to_string(len) + " bytes");
  out.resize(4 + len);
  read_exact(fd, out.data() + 4, len, deadline, false);
  return out;
}

void write_all(int fd, std::string_view bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t w = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::ConnectionClosed, std::strerror(errno));
    }
    off += static_cast<std::size_t>(w);
  }
}

int connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::ConnectionClosed, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, 0);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw Error(Errc::ConnectionClosed, std::strerror(errno));
  }
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(Errc::ConnectionClosed, host + ":" + std::to_string(port) + ": " + why);
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

FrameServer::FrameServer(PortConfig config, Handler handler, std::size_t cap)
    : config_(std::move(config)), handler_(std::move(handler)), cap_(cap) {}

FrameServer::~FrameServer() { stop(); }

std::uint16_t FrameServer::start() {
  if (listen_fd_ >= 0) return config_.tcp_port;
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::Io, std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.tcp_port);
  ::inet_pton(AF_INET, config_.bind_address().c_str(), &addr.sin_addr);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(Errc::Io, "cannot listen on port " + std::to_string(config_.tcp_port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  config_.tcp_port = ntohs(addr.sin_port);
  listen_fd_ = fd;
  acceptor_ = std::thread([this] { accept_loop(); });
  return config_.tcp_port;
}

void FrameServer::stop() {
  if (listen_fd_ < 0) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int c : conns_) ::shutdown(c, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void FrameServer::accept_loop() {
  const int lfd = listen_fd_;
  for (;;) {
    sockaddr_in peer{};
    socklen_t len = sizeof peer;
    const int fd = ::accept4(lfd, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    char ip[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &peer.sin_addr, ip, sizeof ip);
    if (!config_.visible_to(ip)) {
      ::close(fd);
      continue;
    }
    std::lock_guard lock(mu_);
    conns_.insert(fd);
    workers_.emplace_back([this, fd, p = std::string(ip)] { serve(fd, p); });
  }
}

void FrameServer::serve(int fd, std::string peer) {
  try {
    for (;;) {
      const std::string request = read_frame(fd, cap_, std::chrono::minutes(5));
      write_all(fd, handler_(request, peer));
    }
  } catch (const std::exception&) {
    // Closed, oversized, truncated or timed out: drop the connection.
  }
  std::lock_guard lock(mu_);
  conns_.erase(fd);
  ::close(fd);
}

TcpTransport::TcpTransport(std::string host, std::uint16_t port, std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::string TcpTransport::exchange(const std::string& request_frame) {
  if (fd_ < 0) fd_ = connect_tcp(host_, port_, timeout_);
  try {
    write_all(fd_, request_frame);
    return read_frame(fd_, kDefaultFrameCap * 16, timeout_);
  } catch (...) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

std::unique_ptr<Transport> open_transport(const std::string& endpoint) {
  if (endpoint.rfind("http://", 0) == 0) return std::make_unique<HttpTransport>(endpoint);
  std::string rest = endpoint;
  if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::BadArgs, "endpoint needs host:port: " + endpoint);
  const int port = std::atoi(rest.c_str() + colon + 1);
  if (port <= 0 || port > 65535) throw Error(Errc::BadArgs, "bad port in endpoint " + endpoint);
  return std::make_unique<TcpTransport>(rest.substr(0, colon), static_cast<std::uint16_t>(port));
}

Client::Client(std::unique_ptr<Transport> transport, const crypto::PrivateKey& role_key, crypto::MiniCert role_cert,
               crypto::TrustStore trust, Clock clock)
    : transport_(std::move(transport)),
      key_(role_key),
      cert_(std::move(role_cert)),
      trust_(std::move(trust)),
      clock_(std::move(clock)) {}

Response Client::call(const Command& cmd) {
  AMessage m;
  m.msg_id = fresh_nonce();
  m.nonce = fresh_nonce();
  m.timestamp = clock_();
  m.body = cmd;
  last_msg_id_ = m.msg_id;
  last_request_ = encode(sign_message(m, key_, cert_));
  return finish(transport_->exchange(last_request_), m.msg_id);
}

Response Client::resend(const std::string& request_frame, const std::string& expect_msg_id) {
  last_request_ = request_frame;
  return finish(transport_->exchange(request_frame), expect_msg_id);
}

Response Client::finish(const std::string& response_frame, const std::string& msg_id) {
  last_response_ = response_frame;
  Decoded d;
  try {
    d = decode(response_frame, kDefaultFrameCap * 16);
  } catch (const Error& e) {
    throw Error(Errc::BadResponseSignature, "undecodable response: " + e.detail());
  }
  if (d.msg.direction() != Direction::Response) throw Error(Errc::BadResponseSignature, "reply is not a response");
  if (d.msg.msg_id != msg_id) throw Error(Errc::BadResponseSignature, "response msgId does not echo the command");
  const auto report = crypto::verify_envelope(d.signed_msg, trust_, d.msg.timestamp);
  if (!report.ok() || report.purpose != crypto::Purpose::Platform) {
    throw Error(Errc::BadResponseSignature, report.detail.empty() ? std::string(crypto::to_string(report.chain.status))
                                                                  : report.detail);
  }
  return d.msg.response();
}

}  // namespace aida::proto
