#pragma once

// Desk agent: the referent's local signing environment. Holds the role key
// and the signing key, talks to the platform, and serves a small HTTP API to
// the browser UI on loopback. Every signature it produces covers bytes that
// came out of render_to_sign in this process.
//
// API version 1. Every request carries X-Aida-Token. Bodies are canonical
// XML; errors are <Error code=".." detail=".." [label=".."]/>.
//
//   GET  /v1/info
//   GET  /v1/search?type=T&<attr or path>=<value>...   -> <Results>
//   GET  /v1/docs/<docId>                              -> <Render>
//   GET  /v1/manual?output=T                           -> <Manual>
//   POST /v1/apply   <Apply input output [consumeStatus]><Value path>v</Value>..</Apply>
//   POST /v1/draft   unsigned <edoc> header
//   POST /v1/sign    <Sign renderDigest=".."/>

#include <atomic>
#include <memory>
#include <string>

#include "aida/aprotocol.hpp"
#include "aida/cert.hpp"
#include "aida/crypto.hpp"
#include "aida/error.hpp"

namespace aida::agent {

inline constexpr const char* kTokenHeader = "X-Aida-Token";
inline constexpr const char* kTokenEnv = "AIDA_AGENT_TOKEN";

struct AgentIdentity {
  crypto::PrivateKey role_key;
  crypto::MiniCert role_cert;
  crypto::PrivateKey sign_key;
  crypto::MiniCert sign_cert;
  crypto::TrustStore trust;
};

// 32 random bytes, hex.
std::string fresh_token();

// HTTP status used for an error code.
int http_status_for(Errc code);

class DeskAgent {
 public:
  DeskAgent(AgentIdentity identity, std::unique_ptr<proto::Transport> platform, std::string token,
            Clock clock = system_clock());
  ~DeskAgent();
  DeskAgent(const DeskAgent&) = delete;
  DeskAgent& operator=(const DeskAgent&) = delete;

  // Binds `host`:`port` (0 picks one) and serves in the background. Throws
  // Error(BadArgs) for a host that is not a loopback address.
  std::uint16_t start(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
  void stop();
  // Blocks serving until stop().
  void run(const std::string& host, std::uint16_t port);

  const std::string& token() const;
  // Signatures produced since construction.
  std::size_t signatures() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aida::agent
