#pragma once

// Flat key=value files with optional [section] headers. Keys are addressed as
// "section.key" ("key" when no section is open). '#' starts a comment.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthkit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Inserts or replaces a value (line number 0).
  void set(const std::string& key, const std::string& value);

  /// Throws ConfigError naming every key (with its line) that no getter read.
  void reject_unused() const;

  const std::string& origin() const { return origin_; }
  std::vector<std::string> keys() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

/// Writes "key=value" lines; keys containing a dot are grouped under [section].
std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& items);

}  // namespace depthkit
