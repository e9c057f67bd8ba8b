#pragma once

// One-command walk through the exam admission scenario on a throwaway data
// root: platform and gateway from the demo fixtures, three admissions, one
// professor session, receipt checks, an expiry check and a restart.

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace aida::demo {

namespace fs = std::filesystem;

inline constexpr const char* kFixturePassphrase = "aida-demo";

struct Options {
  fs::path fixtures;         // the repository's fixtures/ directory
  fs::path work;             // data root; a fresh temp dir when empty
  bool keep = false;         // leave `work` behind
};

struct Result {
  std::vector<std::string> eacs;
  std::vector<std::string> eets;
  bool eacs_pending_42d = false;
  bool processed_all = false;
  bool receipts_verify = false;
  bool expired_rejected = false;
  bool restart_intact = false;
  bool log_gapless = false;
  std::chrono::milliseconds elapsed{0};

  bool ok() const {
    return eacs_pending_42d && processed_all && receipts_verify && expired_rejected && restart_intact && log_gapless;
  }
};

// Runs every step, printing progress to `out`. Errors from a step are
// reported and leave the corresponding flag false.
Result run(const Options& opts, std::ostream& out);

// Fills a data root from the fixtures: definitions, role map, user map and
// the platform identity (sealed with kFixturePassphrase).
void prepare_data_root(const fs::path& fixtures, const fs::path& root);

// Writes the demo PKI, role map, user map and port file to `dir`. Keys are
// sealed with kFixturePassphrase.
void write_fixtures(const fs::path& dir);

}  // namespace aida::demo
