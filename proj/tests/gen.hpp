#pragma once

// Random subset-document generator shared by property tests and the
// acceptance suite.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "aida/xml.hpp"

namespace aida::testgen {

inline std::string random_name(std::mt19937_64& rng) {
  static const std::vector<std::string> pool = {"a", "b", "doc", "item", "x1", "field.name", "v-2", "Node_3", "z"};
  return pool[rng() % pool.size()];
}

inline std::string random_text(std::mt19937_64& rng, bool allow_blank = true) {
  static const std::vector<std::string> atoms = {
      "a", "Z", "0", " ", "\t", "\n", "&", "<", ">", "\"", "'", "é", "ß", "日本", "€", "x y", ";", "=", "/"};
  const int len = static_cast<int>(rng() % 8) + (allow_blank ? 0 : 1);
  std::string out;
  for (int i = 0; i < len; ++i) out += atoms[rng() % atoms.size()];
  return out;
}

inline xml::XNode random_element(std::mt19937_64& rng, int depth) {
  xml::XNode n = xml::XNode::element(random_name(rng));
  const int nattrs = static_cast<int>(rng() % 4);
  std::vector<std::string> used;
  for (int i = 0; i < nattrs; ++i) {
    std::string k = random_name(rng);
    if (std::find(used.begin(), used.end(), k) != used.end()) continue;
    used.push_back(k);
    n.attrs.emplace_back(k, random_text(rng));
  }
  const int nchildren = depth >= 4 ? 0 : static_cast<int>(rng() % 4);
  for (int i = 0; i < nchildren; ++i) {
    if (rng() % 3 == 0) {
      n.children.push_back(xml::XNode::make_text(random_text(rng, false)));
    } else {
      n.children.push_back(random_element(rng, depth + 1));
    }
  }
  return n;
}

// Source text for `n` with attributes written in a random order and random
// insignificant whitespace inside tags.
inline void shuffled_source(std::mt19937_64& rng, const xml::XNode& n, std::string& out) {
  auto escape = [](const std::string& s, bool attr) {
    std::string o;
    for (char c : s) {
      switch (c) {
        case '&': o += "&amp;"; break;
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '"': o += attr ? "&quot;" : "\""; break;
        default: o += c;
      }
    }
    return o;
  };
  if (n.is_text()) {
    out += escape(n.text, false);
    return;
  }
  auto attrs = n.attrs;
  std::shuffle(attrs.begin(), attrs.end(), rng);
  out += "<" + n.name;
  for (const auto& [k, v] : attrs) out += std::string(1 + rng() % 3, ' ') + k + "=\"" + escape(v, true) + "\"";
  if (rng() % 2) out += " ";
  if (n.children.empty() && rng() % 2) {
    out += "/>";
    return;
  }
  out += ">";
  for (const auto& c : n.children) shuffled_source(rng, c, out);
  out += "</" + n.name + ">";
}

}  // namespace aida::testgen
