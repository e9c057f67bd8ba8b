#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>

#include "aida/aprotocol.hpp"
#include "aida/error.hpp"

namespace aida::proto {

namespace {

constexpr const char* kTunnelPath = "/aida/tunnel";

}  // namespace

struct Gateway::Impl {
  std::string upstream_host;
  std::uint16_t upstream_port;
  std::size_t cap;
  httplib::Server server;
  std::thread thread;

  void install() {
    // Prefix plus the largest body a frame may declare.
    server.set_payload_max_length(cap + 4);
    server.Post(kTunnelPath, [this](const httplib::Request& req, httplib::Response& res) {
      int fd = -1;
      try {
        fd = connect_tcp(upstream_host, upstream_port, std::chrono::seconds(10));
        write_all(fd, req.body);
        ::shutdown(fd, SHUT_WR);
        res.set_content(read_frame(fd, cap * 16, std::chrono::seconds(30)), "application/octet-stream");
      } catch (const std::exception& e) {
        res.status = 502;
        res.set_content(e.what(), "text/plain");
      }
      if (fd >= 0) ::close(fd);
    });
  }
};

Gateway::Gateway(std::string upstream_host, std::uint16_t upstream_port, std::size_t cap)
    : impl_(std::make_unique<Impl>()) {
  impl_->upstream_host = std::move(upstream_host);
  impl_->upstream_port = upstream_port;
  impl_->cap = cap;
  impl_->install();
}

Gateway::~Gateway() { stop(); }

std::uint16_t Gateway::start(const std::string& host, std::uint16_t port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(Errc::Io, "gateway cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Gateway::run(const std::string& host, std::uint16_t port) {
  if (!impl_->server.listen(host, port)) throw Error(Errc::Io, "gateway cannot listen on " + host + ":" + std::to_string(port));
}

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpTransport::exchange(const std::string& request_frame) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  auto res = cli.Post(kTunnelPath, request_frame, "application/octet-stream");
  if (!res) throw Error(Errc::ConnectionClosed, "tunnel unreachable: " + httplib::to_string(res.error()));
  if (res->status == 413) throw Error(Errc::FrameTooLarge, "tunnel refused the frame size");
  if (res->status != 200) throw Error(Errc::ConnectionClosed, "tunnel answered HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace aida::proto
