#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fcnt {

/// Line-oriented `key=value` record. Keys may repeat; order is preserved.
/// Blank lines and lines starting with '#' are skipped when parsing.
class KvFile {
 public:
  void set(const std::string& key, const std::string& value);
  void add(const std::string& key, const std::string& value);
  template <typename T>
  void set(const std::string& key, const T& value) {
    set(key, to_string(value));
  }

  bool has(const std::string& key) const;
  /// First value for `key`; throws ValidationError when absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::vector<std::string> get_all(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  static KvFile parse(const std::string& text);
  static KvFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  static std::string to_string(const std::string& v) { return v; }
  static std::string to_string(const char* v) { return v; }
  static std::string to_string(double v);
  static std::string to_string(bool v) { return v ? "true" : "false"; }
  template <typename T>
  static std::string to_string(const T& v) {
    return std::to_string(v);
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Splits "a,b,c" on `sep`; empty input gives an empty list.
std::vector<std::string> split(const std::string& text, char sep);

}  // namespace fcnt
