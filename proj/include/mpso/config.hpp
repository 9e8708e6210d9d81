#pragma once

#include <charconv>
#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>

#include "mpso/protocols.hpp"
#include "mpso/tcp.hpp"

// Flat key = value run configuration, shared by the CLI and the tests.
namespace mpso {

struct RunConfig {
  SessionConfig session;
  u64 seed = 1;
  std::map<PartyId, std::string> inputs;  // per-party input files
  std::size_t random_n = 0;               // > 0: draw random inputs instead
  std::map<PartyId, Endpoint> peers;
  u16 base_port = 0;  // fills missing peers with 127.0.0.1:base_port+p
  std::string corr_dir = "corr";
  unsigned timeout_ms = 30000;

  Seed master() const { return seed_from_u64(seed); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline u64 parse_u64(std::string_view key, std::string_view v) {
  u64 out = 0;
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad integer for '" + std::string(key) + "': '" + std::string(v) + "'");
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for '" + std::string(key) + "'");
}

inline Endpoint parse_endpoint(std::string_view v) {
  auto colon = v.rfind(':');
  if (colon == std::string_view::npos) throw ConfigError("endpoint must be host:port, got '" + std::string(v) + "'");
  Endpoint e;
  e.host = std::string(v.substr(0, colon));
  u64 port = parse_u64("port", v.substr(colon + 1));
  if (port == 0 || port > 65535) throw ConfigError("port out of range");
  e.port = static_cast<u16>(port);
  return e;
}

// "input.3" -> 3
inline PartyId indexed_key(std::string_view key, std::string_view prefix) {
  u64 p = parse_u64(key, key.substr(prefix.size()));
  if (p == 0 || p > 64) throw ConfigError("party index out of range in '" + std::string(key) + "'");
  return static_cast<PartyId>(p);
}

}  // namespace detail

inline void apply_setting(RunConfig& rc, std::string_view key, std::string_view value) {
  using namespace detail;
  auto& s = rc.session;
  if (key == "func") s.func = parse_func(value);
  else if (key == "m") s.m = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "n") s.n = parse_u64(key, value);
  else if (key == "sigma") s.sigma = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "formula") s.formula = std::string(value);
  else if (key == "session") s.session = static_cast<u16>(parse_u64(key, value));
  else if (key == "ideal_oprf") s.ideal_oprf = parse_bool(key, value);
  else if (key == "seed") rc.seed = parse_u64(key, value);
  else if (key == "random_n") rc.random_n = parse_u64(key, value);
  else if (key == "corr_dir") rc.corr_dir = std::string(value);
  else if (key == "timeout_ms") rc.timeout_ms = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "base_port") rc.base_port = static_cast<u16>(parse_u64(key, value));
  else if (key.starts_with("input.")) rc.inputs[indexed_key(key, "input.")] = std::string(value);
  else if (key.starts_with("peer.")) rc.peers[indexed_key(key, "peer.")] = parse_endpoint(value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// "key=value" form used by CLI overrides.
inline void apply_assignment(RunConfig& rc, std::string_view kv) {
  auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(kv) + "'");
  apply_setting(rc, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

inline void parse_config_text(RunConfig& rc, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  unsigned lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_assignment(rc, t);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Relative input and correlation paths in a file are taken relative to that file.
inline void load_config_file(RunConfig& rc, const std::filesystem::path& p) {
  auto before = rc;
  parse_config_text(rc, read_text(p));
  auto base = p.parent_path();
  auto rebase = [&](std::string& s) {
    if (!s.empty() && std::filesystem::path(s).is_relative()) s = (base / s).string();
  };
  for (auto& [party, path] : rc.inputs)
    if (before.inputs[party] != path) rebase(path);
  if (rc.corr_dir != before.corr_dir) rebase(rc.corr_dir);
}

// After all sources are applied: fill defaults and check consistency.
inline void finalize(RunConfig& rc) {
  if (rc.random_n && rc.session.n == 0) rc.session.n = rc.random_n;
  if (rc.random_n > rc.session.n) throw ConfigError("random_n exceeds n");
  if (!rc.random_n && rc.inputs.empty()) throw ConfigError("no inputs: give input.<p> files or random_n");
  if (rc.base_port)
    for (PartyId p = 1; p <= rc.session.m; ++p)
      if (!rc.peers.count(p)) rc.peers[p] = Endpoint{"127.0.0.1", static_cast<u16>(rc.base_port + p)};
  derive(rc.session);
}

// One element per line: value[,payload]; decimal or 0x-hex; '#' starts a comment.
inline PartyInput parse_input_text(std::string_view text) {
  PartyInput in;
  std::istringstream ss{std::string(text)};
  std::string line;
  unsigned lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto t = detail::trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    auto comma = t.find(',');
    try {
      in.X.push_back(Element::from_u64(detail::parse_u64("element", detail::trim(t.substr(0, comma)))));
      if (comma != std::string::npos) in.payloads.push_back(detail::parse_u64("payload", detail::trim(t.substr(comma + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError("input line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!in.payloads.empty() && in.payloads.size() != in.X.size())
    throw ConfigError("either every input line carries a payload or none does");
  return in;
}

// Random mode: each party gets n distinct elements from a universe of 4n.
inline std::vector<PartyInput> random_inputs(unsigned m, std::size_t n, const Seed& master, bool payloads) {
  Prg prg(derive_seed(master, "inputs"));
  std::vector<PartyInput> in(m + 1);
  const u64 universe = 4 * static_cast<u64>(n);
  for (PartyId p = 1; p <= m; ++p) {
    std::set<u64> s;
    while (s.size() < n) s.insert(prg.below(universe));
    for (u64 x : s) in[p].X.push_back(Element::from_u64(x));
    if (payloads)
      for (std::size_t k = 0; k < n; ++k) in[p].payloads.push_back(prg.next_u64() >> 32);
  }
  return in;
}

inline PartyInput load_party_input(const RunConfig& rc, PartyId p) {
  if (rc.random_n)
    return random_inputs(rc.session.m, rc.random_n, rc.master(), rc.session.func == Functionality::mpsi_card_sum)[p];
  auto it = rc.inputs.find(p);
  if (it == rc.inputs.end()) throw ConfigError("no input file for party " + std::to_string(p));
  return parse_input_text(read_text(it->second));
}

inline std::vector<PartyInput> load_all_inputs(const RunConfig& rc) {
  if (rc.random_n)
    return random_inputs(rc.session.m, rc.random_n, rc.master(), rc.session.func == Functionality::mpsi_card_sum);
  std::vector<PartyInput> in(rc.session.m + 1);
  for (PartyId p = 1; p <= rc.session.m; ++p) in[p] = load_party_input(rc, p);
  return in;
}

inline std::filesystem::path corr_path(const std::filesystem::path& dir, PartyId p) {
  return dir / ("party" + std::to_string(p) + ".corr");
}

}  // namespace mpso
