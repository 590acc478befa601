#ifndef BLIPTEST_UTIL_HPP
#define BLIPTEST_UTIL_HPP

#include <charconv>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

namespace bliptest {

// printf-style formatting into std::string.
inline std::string strf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int need = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string out(need > 0 ? static_cast<size_t>(need) : 0, '\0');
  if (need > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, ap2);
  va_end(ap2);
  return out;
}

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Fixed 12-significant-digit formatting used for report output.
inline std::string format_g12(double v) { return strf("%.12g", v); }

// Level values are doubles but almost always small integers; keys and CSV
// cells use the shortest exact form ("1" not "1.0").
inline std::string format_level(double v) { return format_double(v); }

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// FNV-1a over a byte string; used for config provenance hashes.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace bliptest

#endif
