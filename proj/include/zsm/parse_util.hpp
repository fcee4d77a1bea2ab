#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace zsm::parse {

inline int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || p != end)
    throw std::invalid_argument("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || p != end)
    throw std::invalid_argument("key '" + key + "': expected a non-negative integer, got '" + v +
                                "'");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (v.empty() || pos != v.size())
    throw std::invalid_argument("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace zsm::parse
