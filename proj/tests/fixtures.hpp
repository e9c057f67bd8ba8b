#pragma once

// Access to the committed fixture tree.

#include <filesystem>
#include <map>
#include <string>

#include "aida/bundle.hpp"
#include "aida/common.hpp"
#include "aida/xml.hpp"

namespace aida::testfx {

inline const std::filesystem::path kRoot = AIDA_FIXTURES_DIR;

inline edoc::DefinitionRegistry registry() { return edoc::DefinitionRegistry::load_tree(kRoot / "defs"); }

inline xml::XNode eeac_content() { return xml::parse(read_file(kRoot / "samples/eeac-content.xml")); }

inline std::map<std::string, std::string> eeac_values() {
  return {
      {"/eEAC/student/id", "s123456"},
      {"/eEAC/student/name", "Maria Rossi"},
      {"/eEAC/student/placeOfBirth", "Torino"},
      {"/eEAC/faculty/name", "Ingegneria dell'Informazione"},
      {"/eEAC/exam/code", "01ABC"},
      {"/eEAC/exam/name", "Sicurezza dei sistemi"},
      {"/eEAC/validity/notBefore", "2026-06-01T09:00:00Z"},
      {"/eEAC/validity/notAfter", "2026-07-13T09:00:00Z"},
  };
}

inline std::map<std::string, std::string> eeet_manual() {
  return {
      {"/eEET/exam/date", "2026-06-20"},
      {"/eEET/exam/mark", "28"},
      {"/eEET/exam/questions", "Threat models; TLS handshake; XML signatures"},
  };
}

}  // namespace aida::testfx
