#include "aida/xml.hpp"

#include <algorithm>
#include <cstdio>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include "aida/error.hpp"

namespace aida::xml {

XNode XNode::element(std::string name) {
  XNode n;
  n.kind = Kind::Element;
  n.name = std::move(name);
  return n;
}

XNode XNode::make_text(std::string value) {
  XNode n;
  n.kind = Kind::Text;
  n.text = std::move(value);
  return n;
}

XNode XNode::leaf(std::string name, std::string value) {
  XNode n = element(std::move(name));
  n.add_text(std::move(value));
  return n;
}

std::optional<std::string> XNode::attr(std::string_view attr_name) const {
  for (const auto& [k, v] : attrs) {
    if (k == attr_name) return v;
  }
  return std::nullopt;
}

const std::string& XNode::required_attr(std::string_view attr_name) const {
  for (const auto& [k, v] : attrs) {
    if (k == attr_name) return v;
  }
  throw Error(Errc::MalformedXml,
              "element <" + name + "> lacks attribute '" + std::string(attr_name) + "'");
}

XNode& XNode::set_attr(std::string attr_name, std::string value) {
  for (auto& [k, v] : attrs) {
    if (k == attr_name) {
      v = std::move(value);
      return *this;
    }
  }
  attrs.emplace_back(std::move(attr_name), std::move(value));
  return *this;
}

XNode& XNode::add(XNode child) {
  children.push_back(std::move(child));
  return children.back();
}

XNode& XNode::add_text(std::string value) {
  if (value.empty()) return *this;
  children.push_back(make_text(std::move(value)));
  return *this;
}

const XNode* XNode::child(std::string_view child_name) const {
  for (const auto& c : children) {
    if (c.is_element() && c.name == child_name) return &c;
  }
  return nullptr;
}

XNode* XNode::child(std::string_view child_name) {
  for (auto& c : children) {
    if (c.is_element() && c.name == child_name) return &c;
  }
  return nullptr;
}

std::vector<const XNode*> XNode::children_named(std::string_view child_name) const {
  std::vector<const XNode*> out;
  for (const auto& c : children) {
    if (c.is_element() && c.name == child_name) out.push_back(&c);
  }
  return out;
}

std::vector<const XNode*> XNode::element_children() const {
  std::vector<const XNode*> out;
  for (const auto& c : children) {
    if (c.is_element()) out.push_back(&c);
  }
  return out;
}

std::string XNode::inner_text() const {
  std::string out;
  for (const auto& c : children) {
    if (c.is_text()) out += c.text;
  }
  return out;
}

std::optional<std::string> XNode::child_text(std::string_view child_name) const {
  const XNode* c = child(child_name);
  if (c == nullptr) return std::nullopt;
  return c->inner_text();
}

bool is_valid_name(std::string_view name) {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin() + 1, name.end(), [&](char c) {
    return alpha(c) || (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
  });
}

bool is_forbidden_codepoint(char32_t cp) {
  if (cp < 0x20) return cp != 0x09 && cp != 0x0A && cp != 0x0D;
  if (cp == 0x7F) return true;
  if (cp >= 0x200B && cp <= 0x200F) return true;
  if (cp >= 0x202A && cp <= 0x202E) return true;
  return cp == 0x2060 || cp == 0xFEFF;
}

std::vector<char32_t> decode_utf8(std::string_view bytes) {
  std::vector<char32_t> out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    char32_t cp = 0;
    int extra = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      throw Error(Errc::MalformedXml, "invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    for (int k = 1; k <= extra; ++k) {
      if (i + k >= bytes.size()) {
        throw Error(Errc::MalformedXml, "truncated UTF-8 sequence at offset " + std::to_string(i));
      }
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) {
        throw Error(Errc::MalformedXml, "invalid UTF-8 continuation at offset " + std::to_string(i + k));
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    const bool overlong = (extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
                          (extra == 3 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw Error(Errc::MalformedXml, "invalid UTF-8 code point at offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::optional<char32_t> find_forbidden(std::string_view utf8) {
  for (char32_t cp : decode_utf8(utf8)) {
    if (is_forbidden_codepoint(cp)) return cp;
  }
  return std::nullopt;
}

bool is_nfc(std::string_view utf8) {
  if (std::all_of(utf8.begin(), utf8.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; })) {
    return true;
  }
  UErrorCode status = U_ZERO_ERROR;
  const UNormalizer2* nfc = unorm2_getNFCInstance(&status);
  if (U_FAILURE(status)) throw Error(Errc::Internal, "ICU NFC instance unavailable");

  int32_t needed = 0;
  u_strFromUTF8(nullptr, 0, &needed, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  if (status != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(status)) {
    throw Error(Errc::MalformedXml, "invalid UTF-8");
  }
  status = U_ZERO_ERROR;
  std::u16string wide(static_cast<std::size_t>(needed), u'\0');
  u_strFromUTF8(wide.data(), needed, nullptr, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  if (U_FAILURE(status)) throw Error(Errc::MalformedXml, "invalid UTF-8");

  const UBool ok = unorm2_isNormalized(nfc, wide.data(), needed, &status);
  if (U_FAILURE(status)) throw Error(Errc::Internal, "ICU normalization check failed");
  return ok != 0;
}

namespace {

constexpr int kMaxDepth = 256;

std::string describe_cp(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_whitespace_only(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

bool has_element_child(const XNode& n) {
  return std::any_of(n.children.begin(), n.children.end(), [](const XNode& c) { return c.is_element(); });
}

class Parser {
 public:
  explicit Parser(std::string_view in) : in_(in) {}

  XNode run() {
    skip_space();
    reject_markup_declarations();
    if (!peek_is('<')) fail("expected root element");
    XNode root = parse_element(0);
    skip_space();
    if (pos_ < in_.size()) {
      reject_markup_declarations();
      fail("content after root element");
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::MalformedXml, what + " at offset " + std::to_string(pos_));
  }

  bool peek_is(char c) const { return pos_ < in_.size() && in_[pos_] == c; }
  bool starts_with(std::string_view s) const { return in_.substr(pos_).starts_with(s); }

  void skip_space() {
    while (pos_ < in_.size() && is_space(in_[pos_])) ++pos_;
  }

  // Comments, PIs, CDATA and DOCTYPE are refused wherever they appear.
  void reject_markup_declarations() const {
    if (starts_with("<!--")) throw Error(Errc::ForbiddenConstruct, "comment at offset " + std::to_string(pos_));
    if (starts_with("<![CDATA[")) throw Error(Errc::ForbiddenConstruct, "CDATA section at offset " + std::to_string(pos_));
    if (starts_with("<!DOCTYPE")) throw Error(Errc::ForbiddenConstruct, "DOCTYPE at offset " + std::to_string(pos_));
    if (starts_with("<!")) throw Error(Errc::ForbiddenConstruct, "markup declaration at offset " + std::to_string(pos_));
    if (starts_with("<?")) throw Error(Errc::ForbiddenConstruct, "processing instruction at offset " + std::to_string(pos_));
  }

  std::string parse_name() {
    const std::size_t start = pos_;
    while (pos_ < in_.size()) {
      const char c = in_[pos_];
      if (is_space(c) || c == '=' || c == '>' || c == '/' || c == '<' || c == '"' || c == '\'') break;
      ++pos_;
    }
    std::string name(in_.substr(start, pos_ - start));
    if (name.find(':') != std::string::npos) {
      pos_ = start;
      fail("namespaced name '" + name + "'");
    }
    if (!is_valid_name(name)) {
      pos_ = start;
      fail("invalid name '" + name + "'");
    }
    return name;
  }

  void parse_reference(std::string& out) {
    // at '&'
    const std::size_t semi = in_.find(';', pos_);
    if (semi == std::string_view::npos || semi - pos_ > 12) fail("unterminated entity reference");
    const std::string_view ref = in_.substr(pos_ + 1, semi - pos_ - 1);
    if (ref == "lt") {
      out += '<';
    } else if (ref == "gt") {
      out += '>';
    } else if (ref == "amp") {
      out += '&';
    } else if (ref == "quot") {
      out += '"';
    } else if (ref == "apos") {
      out += '\'';
    } else if (ref.size() > 1 && ref[0] == '#') {
      const bool hex = ref[1] == 'x';
      const std::string_view digits = ref.substr(hex ? 2 : 1);
      if (digits.empty()) fail("empty character reference");
      std::uint32_t cp = 0;
      for (char c : digits) {
        std::uint32_t d = 0;
        if (c >= '0' && c <= '9') {
          d = static_cast<std::uint32_t>(c - '0');
        } else if (hex && c >= 'a' && c <= 'f') {
          d = static_cast<std::uint32_t>(c - 'a' + 10);
        } else if (hex && c >= 'A' && c <= 'F') {
          d = static_cast<std::uint32_t>(c - 'A' + 10);
        } else {
          fail("bad character reference");
        }
        cp = cp * (hex ? 16 : 10) + d;
        if (cp > 0x10FFFF) fail("character reference out of range");
      }
      if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF)) fail("invalid character reference");
      if (is_forbidden_codepoint(cp)) {
        throw Error(Errc::ForbiddenChar, describe_cp(cp) + " via character reference at offset " + std::to_string(pos_));
      }
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
    pos_ = semi + 1;
  }

  std::string parse_attr_value() {
    if (!peek_is('"') && !peek_is('\'')) fail("expected quoted attribute value");
    const char quote = in_[pos_++];
    std::string value;
    while (true) {
      if (pos_ >= in_.size()) fail("unterminated attribute value");
      const char c = in_[pos_];
      if (c == quote) {
        ++pos_;
        return value;
      }
      if (c == '<') fail("'<' in attribute value");
      if (c == '&') {
        parse_reference(value);
      } else {
        value += c;
        ++pos_;
      }
    }
  }

  XNode parse_element(int depth) {
    if (depth > kMaxDepth) fail("nesting too deep");
    ++pos_;  // '<'
    XNode node = XNode::element(parse_name());

    while (true) {
      const bool had_space = pos_ < in_.size() && is_space(in_[pos_]);
      skip_space();
      if (pos_ >= in_.size()) fail("unterminated start tag");
      if (in_[pos_] == '/') {
        if (!starts_with("/>")) fail("expected '/>'");
        pos_ += 2;
        return node;
      }
      if (in_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      std::string attr_name = parse_name();
      skip_space();
      if (!peek_is('=')) fail("expected '=' after attribute name");
      ++pos_;
      skip_space();
      std::string value = parse_attr_value();
      if (node.attr(attr_name)) fail("duplicate attribute '" + attr_name + "'");
      node.attrs.emplace_back(std::move(attr_name), std::move(value));
    }

    std::string text;
    auto flush_text = [&] {
      if (!text.empty()) {
        node.children.push_back(XNode::make_text(std::move(text)));
        text.clear();
      }
    };
    while (true) {
      if (pos_ >= in_.size()) fail("unterminated element <" + node.name + ">");
      const char c = in_[pos_];
      if (c == '<') {
        flush_text();
        if (starts_with("</")) {
          pos_ += 2;
          const std::size_t at = pos_;
          const std::string closing = parse_name();
          if (closing != node.name) {
            pos_ = at;
            fail("mismatched end tag </" + closing + "> for <" + node.name + ">");
          }
          skip_space();
          if (!peek_is('>')) fail("expected '>'");
          ++pos_;
          break;
        }
        reject_markup_declarations();
        node.children.push_back(parse_element(depth + 1));
      } else if (c == '&') {
        parse_reference(text);
      } else {
        text += c;
        ++pos_;
      }
    }

    if (has_element_child(node)) {
      std::erase_if(node.children, [](const XNode& ch) { return ch.is_text() && is_whitespace_only(ch.text); });
    }
    return node;
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

void check_value(std::string_view value) {
  if (auto cp = find_forbidden(value)) throw Error(Errc::ForbiddenChar, describe_cp(*cp));
  if (!is_nfc(value)) throw Error(Errc::NotNfc, "value is not in Unicode NFC");
}

void escape_into(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
}

void canon_into(std::string& out, const XNode& node) {
  if (node.is_text()) {
    escape_into(out, node.text);
    return;
  }
  out += '<';
  out += node.name;
  std::vector<const std::pair<std::string, std::string>*> sorted;
  sorted.reserve(node.attrs.size());
  for (const auto& a : node.attrs) sorted.push_back(&a);
  // std::string compares bytes; for UTF-8 that is code point order.
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
  for (const auto* a : sorted) {
    out += ' ';
    out += a->first;
    out += "=\"";
    escape_into(out, a->second);
    out += '"';
  }
  out += '>';
  // Adjacent text nodes form one run, exactly as a parser would see them.
  const bool drop_ws = has_element_child(node);
  std::string run;
  auto flush = [&] {
    if (!(drop_ws && is_whitespace_only(run))) escape_into(out, run);
    run.clear();
  };
  for (const auto& c : node.children) {
    if (c.is_text()) {
      run += c.text;
      continue;
    }
    flush();
    canon_into(out, c);
  }
  flush();
  out += "</";
  out += node.name;
  out += '>';
}

void pretty_into(std::string& out, const XNode& node, int indent) {
  const bool has_text = std::any_of(node.children.begin(), node.children.end(),
                                    [](const XNode& c) { return c.is_text() && !is_whitespace_only(c.text); });
  if (has_text || !has_element_child(node)) {
    out.append(static_cast<std::size_t>(indent), ' ');
    canon_into(out, node);
    out += '\n';
    return;
  }
  XNode shell = node;
  shell.children.clear();
  std::string open = a_canon(shell);
  open.resize(open.size() - (node.name.size() + 3));
  out.append(static_cast<std::size_t>(indent), ' ');
  out += open;
  out += '\n';
  for (const auto& c : node.children) {
    if (c.is_element()) pretty_into(out, c, indent + 2);
  }
  out.append(static_cast<std::size_t>(indent), ' ');
  out += "</" + node.name + ">\n";
}

}  // namespace

XNode parse(std::string_view bytes) {
  if (auto cp = find_forbidden(bytes)) {
    throw Error(Errc::ForbiddenChar, describe_cp(*cp));
  }
  if (!is_nfc(bytes)) throw Error(Errc::NotNfc, "input is not in Unicode NFC");
  XNode root = Parser(bytes).run();
  // character references can still assemble a non-NFC sequence
  check_invariants(root);
  return root;
}

void check_invariants(const XNode& node) {
  if (node.is_text()) {
    check_value(node.text);
    return;
  }
  if (!is_valid_name(node.name)) throw Error(Errc::MalformedXml, "invalid element name '" + node.name + "'");
  for (std::size_t i = 0; i < node.attrs.size(); ++i) {
    const auto& [k, v] = node.attrs[i];
    if (!is_valid_name(k)) throw Error(Errc::MalformedXml, "invalid attribute name '" + k + "'");
    for (std::size_t j = 0; j < i; ++j) {
      if (node.attrs[j].first == k) throw Error(Errc::MalformedXml, "duplicate attribute '" + k + "'");
    }
    check_value(v);
  }
  for (const auto& c : node.children) check_invariants(c);
}

std::string a_canon(const XNode& node) {
  std::string out;
  canon_into(out, node);
  return out;
}

std::string pretty(const XNode& node) {
  std::string out;
  pretty_into(out, node, 0);
  return out;
}

}  // namespace aida::xml
