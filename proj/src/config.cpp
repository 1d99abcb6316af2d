#include "depthkit/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace depthkit {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (kv.entries_.count(full)) throw ConfigError(where + "duplicate key '" + full + "'");
    kv.entries_[full] = Entry{trim(line.substr(eq + 1)), lineno};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const KeyValueFile::Entry* KeyValueFile::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValueFile::fail(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  const int line = it == entries_.end() ? 0 : it->second.line;
  throw ConfigError(origin_ + ":" + std::to_string(line) + ": key '" + key + "': " + what);
}

std::optional<std::string> KeyValueFile::raw(const std::string& key) const {
  if (const Entry* e = find(key)) return e->value;
  return std::nullopt;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    if (pos != e->value.size()) fail(key, "trailing characters in number");
    return v;
  } catch (const std::logic_error&) {
    fail(key, "expected a number, got '" + e->value + "'");
  }
}

long KeyValueFile::get_int(const std::string& key, long fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t pos = 0;
    const long v = std::stol(e->value, &pos);
    if (pos != e->value.size()) fail(key, "expected an integer");
    return v;
  } catch (const std::logic_error&) {
    fail(key, "expected an integer, got '" + e->value + "'");
  }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(key, "expected a boolean, got '" + e->value + "'");
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  entries_[key] = Entry{value, 0};
}

void KeyValueFile::reject_unused() const {
  std::string msg;
  for (const auto& [key, entry] : entries_)
    if (!used_.count(key))
      msg += "\n  " + origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'";
  if (!msg.empty()) throw ConfigError("unrecognised configuration keys:" + msg);
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& kv : entries_) out.push_back(kv.first);
  return out;
}

std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& items) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  std::vector<std::string> order;
  for (const auto& [key, value] : items) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (!sections.count(section)) order.push_back(section);
    sections[section].emplace_back(name, value);
  }
  std::ostringstream out;
  // Unsectioned keys must come before any header.
  std::stable_partition(order.begin(), order.end(), [](const std::string& s) { return s.empty(); });
  for (const auto& section : order) {
    if (!section.empty()) out << "\n[" << section << "]\n";
    for (const auto& [k, v] : sections[section]) out << k << " = " << v << "\n";
  }
  return out.str();
}

}  // namespace depthkit
