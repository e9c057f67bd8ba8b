#pragma once

// The aida command-line tool. run() is the whole program; tools/aida.cpp
// only forwards argv.
//
// Exit codes:
//   0 success
//   1 usage error
//   2 document refused (parse, structure, WYSIWYS, validation)
//   3 signature, certificate or key problem
//   4 platform or transport error
//   5 local I/O error

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "aida/error.hpp"

namespace aida::cli {

enum Exit : int { kOk = 0, kUsage = 1, kRefused = 2, kCrypto = 3, kPlatform = 4, kIo = 5 };

int exit_code_for(Errc code);

// Connection and identity settings, from a profile file and flags.
//   <profile name endpoint key cert signKey signCert trust defs/>
// Relative paths are taken from the profile's directory.
struct Profile {
  std::string name;
  std::string endpoint;
  std::filesystem::path key;
  std::filesystem::path cert;
  std::filesystem::path sign_key;
  std::filesystem::path sign_cert;
  std::filesystem::path trust;
  std::filesystem::path defs;

  static Profile load(const std::filesystem::path& path);
  // Throws Error(BadArgs) when the endpoint is not tcp://host:port,
  // http://host:port or host:port.
  void check_endpoint() const;
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aida::cli
