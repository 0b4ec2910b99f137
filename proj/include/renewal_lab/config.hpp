#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "error.hpp"

namespace renewal_lab {

// key = value lines; '#' starts a comment; ':' is accepted in place of '='
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto pos = line.find('=');
    if (pos == std::string::npos) pos = line.find(':');
    if (pos == std::string::npos)
      throw error(errc::invalid_parameter,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, pos));
    auto val = trim(line.substr(pos + 1));
    if (key.empty())
      throw error(errc::invalid_parameter,
                  "config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw error(errc::invalid_parameter, "duplicate config key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

inline double parse_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw error(errc::invalid_parameter, "'" + key + "' is not a number: '" + s + "'");
  return v;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace renewal_lab
