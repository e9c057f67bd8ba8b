#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "aida/aprotocol.hpp"
#include "aida/crypto.hpp"
#include "aida/error.hpp"

namespace aida::proto {

using xml::XNode;

namespace {

[[noreturn]] void schema(const std::string& why) { throw Error(Errc::SchemaViolation, why); }

std::optional<XNode> single_element(const XNode& n, const std::string& where) {
  const auto elems = n.element_children();
  if (elems.size() > 1) schema(where + " holds more than one element");
  if (elems.empty()) return std::nullopt;
  for (const auto& c : n.children) {
    if (c.is_text()) schema(where + " mixes text and an element");
  }
  return *elems.front();
}

xml::TypeDef build_typedef() {
  xml::TypeDef d;
  d.type_id = "AMessage";
  d.version = 1;
  d.root = "AMessage";
  auto& root = d.define("/AMessage");
  root.attributes["msgId"] = {true, "[A-Za-z0-9_.-]{1,64}", nullptr};
  root.attributes["nonce"] = {true, "[0-9a-f]{32,128}", nullptr};
  root.attributes["timestamp"] = {true, "[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}Z", nullptr};
  root.attributes["direction"] = {true, "command|response", nullptr};
  auto& cmd = d.define("/AMessage/Command");
  cmd.required = false;
  cmd.attributes["name"] = {true, "[A-Za-z]{1,64}", nullptr};
  auto& arg = d.define("/AMessage/Command/Arg");
  arg.required = false;
  arg.repeatable = true;
  arg.text_allowed = true;
  arg.opaque = true;
  arg.attributes["name"] = {true, "[A-Za-z][A-Za-z0-9_.-]{0,63}", nullptr};
  arg.attributes["key"] = {false, std::nullopt, nullptr};
  auto& resp = d.define("/AMessage/Response");
  resp.required = false;
  resp.attributes["status"] = {true, "[A-Z][A-Za-z_]{1,63}", nullptr};
  resp.attributes["detail"] = {false, std::nullopt, nullptr};
  auto& payload = d.define("/AMessage/Response/Payload");
  payload.required = false;
  payload.opaque = true;
  d.finalize();
  return d;
}

}  // namespace

Command& Command::add(std::string arg_name, std::string text, std::string key) {
  args.push_back({std::move(arg_name), std::move(key), std::move(text), std::nullopt});
  return *this;
}

Command& Command::add_node(std::string arg_name, XNode node) {
  args.push_back({std::move(arg_name), {}, {}, std::move(node)});
  return *this;
}

const Arg* Command::find(std::string_view arg_name) const {
  for (const auto& a : args) {
    if (a.name == arg_name) return &a;
  }
  return nullptr;
}

std::optional<std::string> Command::text(std::string_view arg_name) const {
  const Arg* a = find(arg_name);
  if (a == nullptr) return std::nullopt;
  return a->text;
}

std::vector<const Arg*> Command::all(std::string_view arg_name) const {
  std::vector<const Arg*> out;
  for (const auto& a : args) {
    if (a.name == arg_name) out.push_back(&a);
  }
  return out;
}

XNode AMessage::to_xml() const {
  XNode n = XNode::element("AMessage");
  n.set_attr("msgId", msg_id);
  n.set_attr("nonce", nonce);
  n.set_attr("timestamp", format_ts(timestamp));
  if (direction() == Direction::Command) {
    n.set_attr("direction", "command");
    const Command& c = command();
    XNode& cx = n.add(XNode::element("Command"));
    cx.set_attr("name", c.name);
    for (const auto& a : c.args) {
      XNode& ax = cx.add(XNode::element("Arg"));
      ax.set_attr("name", a.name);
      if (!a.key.empty()) ax.set_attr("key", a.key);
      if (a.node) {
        ax.add(*a.node);
      } else if (!a.text.empty()) {
        ax.add_text(a.text);
      }
    }
  } else {
    n.set_attr("direction", "response");
    const Response& r = response();
    XNode& rx = n.add(XNode::element("Response"));
    rx.set_attr("status", r.status);
    if (!r.detail.empty()) rx.set_attr("detail", r.detail);
    if (r.payload) rx.add(XNode::element("Payload")).add(*r.payload);
  }
  return n;
}

AMessage AMessage::from_xml(const XNode& node) {
  const auto report = xml::validate_structure(node, amessage_typedef());
  if (!report.ok()) schema(report.summary());
  AMessage m;
  m.msg_id = node.required_attr("msgId");
  m.nonce = node.required_attr("nonce");
  try {
    m.timestamp = parse_ts(node.required_attr("timestamp"));
  } catch (const Error&) {
    schema("bad timestamp");
  }
  const XNode* cmd = node.child("Command");
  const XNode* resp = node.child("Response");
  if ((cmd == nullptr) == (resp == nullptr)) schema("exactly one of Command or Response is required");
  const std::string& dir = node.required_attr("direction");
  if (cmd != nullptr) {
    if (dir != "command") schema("direction does not match body");
    Command c;
    c.name = cmd->required_attr("name");
    for (const XNode* a : cmd->children_named("Arg")) {
      Arg arg;
      arg.name = a->required_attr("name");
      arg.key = a->attr("key").value_or("");
      arg.node = single_element(*a, "Arg " + arg.name);
      if (!arg.node) arg.text = a->inner_text();
      c.args.push_back(std::move(arg));
    }
    m.body = std::move(c);
  } else {
    if (dir != "response") schema("direction does not match body");
    Response r;
    r.status = resp->required_attr("status");
    r.detail = resp->attr("detail").value_or("");
    if (const XNode* p = resp->child("Payload")) {
      if (!p->inner_text().empty()) schema("Payload carries loose text");
      r.payload = single_element(*p, "Payload");
    }
    m.body = std::move(r);
  }
  return m;
}

const xml::TypeDef& amessage_typedef() {
  static const xml::TypeDef def = build_typedef();
  return def;
}

std::string fresh_nonce() { return to_hex(crypto::random_bytes(16)); }

std::string frame(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(payload.size() + 4);
  out += static_cast<char>((n >> 24) & 0xFF);
  out += static_cast<char>((n >> 16) & 0xFF);
  out += static_cast<char>((n >> 8) & 0xFF);
  out += static_cast<char>(n & 0xFF);
  out += payload;
  return out;
}

std::string encode(const crypto::SignedDoc& signed_msg) { return frame(signed_msg.canonical()); }

Decoded decode(std::string_view bytes, std::size_t cap) {
  if (bytes.size() < 4) throw Error(Errc::MalformedFrame, "frame shorter than its length prefix");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t len = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
  if (len > cap) throw Error(Errc::FrameTooLarge, std::to_string(len) + " bytes");
  if (bytes.size() - 4 != len) throw Error(Errc::MalformedFrame, "declared length does not match frame size");
  crypto::SignedDoc signed_msg;
  try {
    signed_msg = crypto::SignedDoc::parse(bytes.substr(4));
  } catch (const Error& e) {
    throw Error(Errc::MalformedFrame, std::string(to_string(e.code())) + ": " + e.detail());
  }
  AMessage msg = AMessage::from_xml(signed_msg.content);
  return {std::move(signed_msg), std::move(msg)};
}

crypto::SignedDoc sign_message(const AMessage& msg, const crypto::PrivateKey& key, const crypto::MiniCert& cert) {
  const auto purpose = msg.direction() == Direction::Command ? crypto::Purpose::Role : crypto::Purpose::Platform;
  return crypto::sign_envelope(msg.to_xml(), key, cert, purpose, msg.timestamp);
}

crypto::SignedDoc make_response(const std::string& msg_id, Response response, const crypto::PrivateKey& key,
                                const crypto::MiniCert& cert, Timestamp now) {
  AMessage m;
  m.msg_id = msg_id;
  m.nonce = fresh_nonce();
  m.timestamp = now;
  m.body = std::move(response);
  return sign_message(m, key, cert);
}

void ReplayGuard::check_and_record(const std::string& nonce, Timestamp msg_time, Timestamp now) {
  if (msg_time < now - window_ || msg_time > now + window_) {
    throw Error(Errc::ReplaySuspect, "timestamp " + format_ts(msg_time) + " outside the window around " + format_ts(now));
  }
  std::lock_guard lock(mu_);
  // Entries this old can never match a message inside the window.
  std::erase_if(seen_, [&](const auto& e) { return e.second < now - 2 * window_; });
  if (!seen_.emplace(nonce, msg_time).second) throw Error(Errc::Replay, "nonce already seen");
}

std::size_t ReplayGuard::size() const {
  std::lock_guard lock(mu_);
  return seen_.size();
}

bool PortConfig::visible_to(const std::string& ipv4) const {
  if (visibility == "any") return true;
  auto parse = [](const std::string& s, std::uint32_t& out) {
    unsigned a, b, c, d;
    char tail;
    if (std::sscanf(s.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4) return false;
    if (a > 255 || b > 255 || c > 255 || d > 255) return false;
    out = (a << 24) | (b << 16) | (c << 8) | d;
    return true;
  };
  std::uint32_t ip = 0;
  if (!parse(ipv4, ip)) return false;
  if (visibility == "loopback") return (ip >> 24) == 127;
  for (const auto& cidr : cidrs) {
    const auto slash = cidr.find('/');
    std::uint32_t net = 0;
    if (!parse(cidr.substr(0, slash), net)) continue;
    const int bits = slash == std::string::npos ? 32 : std::atoi(cidr.c_str() + slash + 1);
    if (bits < 0 || bits > 32) continue;
    const std::uint32_t mask = bits == 0 ? 0 : ~std::uint32_t{0} << (32 - bits);
    if ((ip & mask) == (net & mask)) return true;
  }
  return false;
}

std::vector<PortConfig> ports_from_xml(const XNode& node) {
  if (node.name != "ports") throw Error(Errc::MalformedXml, "expected <ports>");
  std::vector<PortConfig> out;
  for (const XNode* p : node.children_named("port")) {
    PortConfig c;
    c.name = p->required_attr("name");
    if (c.name != "scenario" && c.name != "service" && c.name != "admin") {
      throw Error(Errc::MalformedXml, "unknown port name '" + c.name + "'");
    }
    const int port = std::atoi(p->required_attr("tcpPort").c_str());
    if (port < 0 || port > 65535) throw Error(Errc::MalformedXml, "tcpPort out of range");
    c.tcp_port = static_cast<std::uint16_t>(port);
    c.visibility = p->attr("visibility").value_or("loopback");
    if (c.visibility != "loopback" && c.visibility != "any" && c.visibility != "cidr") {
      throw Error(Errc::MalformedXml, "visibility must be loopback, any or cidr");
    }
    c.enabled = p->attr("enabled").value_or("true") != "false";
    for (const XNode* cmd : p->children_named("command")) c.restricted.insert(cmd->inner_text());
    for (const XNode* a : p->children_named("allow")) c.cidrs.push_back(a->required_attr("cidr"));
    out.push_back(std::move(c));
  }
  return out;
}

XNode ports_to_xml(const std::vector<PortConfig>& ports) {
  XNode n = XNode::element("ports");
  for (const auto& c : ports) {
    XNode& p = n.add(XNode::element("port"));
    p.set_attr("name", c.name);
    p.set_attr("tcpPort", std::to_string(c.tcp_port));
    p.set_attr("visibility", c.visibility);
    p.set_attr("enabled", c.enabled ? "true" : "false");
    for (const auto& cmd : c.restricted) p.add(XNode::leaf("command", cmd));
    for (const auto& cidr : c.cidrs) p.add(XNode::element("allow")).set_attr("cidr", cidr);
  }
  return n;
}

}  // namespace aida::proto
