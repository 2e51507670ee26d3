#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace bridgen {

// Error categories; the CLI maps them onto distinct exit codes.
enum class ErrorCode {
  Config,    // bad configuration / arguments
  Data,      // unreadable or malformed input data
  Domain,    // argument outside an operation's domain
  Singular,  // singular geometry (coincident points, t >= T, ...)
  Numeric,   // non-finite values, divergence, integration failure
  Io,        // filesystem failures
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

inline void check(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

inline void warn(const std::string& msg) {
  std::fprintf(stderr, "[bridgen] warning: %s\n", msg.c_str());
}

// FNV-1a, used for content fingerprints (stats files, checkpoints).
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
  return fnv1a(s.data(), s.size());
}

}  // namespace bridgen
