#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace qdn {

// Plain key=value configuration. Lines starting with '#' and blank lines
// are ignored; values keep internal spaces. CLI flags override these.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value);

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace qdn
