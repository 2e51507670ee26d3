#include "bridgen/config.hpp"

#include <cstdio>
#include <sstream>

#include "bridgen/common.hpp"
#include "bridgen/io.hpp"

namespace bridgen::config {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    check(eq != std::string::npos, ErrorCode::Config,
          "line " + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    check(!key.empty(), ErrorCode::Config,
          "line " + std::to_string(line_no) + ": empty key");
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  try {
    return parse(io::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config)
      throw Error(ErrorCode::Config, path + ": " + e.what());
    throw;
  }
}

bool KvConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}
void KvConfig::set(const std::string& key, double value) {
  entries_[key] = format_double(value);
}
void KvConfig::set(const std::string& key, long value) {
  entries_[key] = std::to_string(value);
}
void KvConfig::set(const std::string& key, std::uint64_t value) {
  entries_[key] = std::to_string(value);
}

std::string KvConfig::get(const std::string& key,
                          const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string KvConfig::require(const std::string& key) const {
  auto it = entries_.find(key);
  check(it != entries_.end(), ErrorCode::Config,
        "missing config key '" + key + "'");
  return it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw Error(ErrorCode::Config, "key '" + key + "' is not a number");
  }
}

long KvConfig::get_long(const std::string& key, long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (...) {
    throw Error(ErrorCode::Config, "key '" + key + "' is not an integer");
  }
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  return static_cast<int>(get_long(key, fallback));
}

std::uint64_t KvConfig::get_u64(const std::string& key,
                                std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw Error(ErrorCode::Config, "key '" + key + "' is not an integer");
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::Config, "key '" + key + "' is not a boolean");
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

void KvConfig::save(const std::string& path) const {
  io::write_file(path, serialize());
}

}  // namespace bridgen::config
