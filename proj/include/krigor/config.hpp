// Flat INI-style configuration: [section] headers, key = value lines, full
// line comments starting with '#' or ';'.  Keys are unique within a section;
// every stored value remembers its source line so type errors can point at
// the offending text.
#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace krigor {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, int col,
              const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + what),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

class Config {
 public:
  static Config parse_string(const std::string& text,
                             const std::string& source = "<config>") {
    Config cfg;
    cfg.source_ = source;
    cfg.text_ = text;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      const std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line[0] == '[') {
        if (line.back() != ']')
          throw ConfigError(source, lineno, int(raw.size()),
                            "section header missing closing ']'");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError(source, lineno, 2, "empty section name");
        continue;
      }
      const size_t eq = raw.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source, lineno, 1,
                          "expected 'key = value' or '[section]'");
      const std::string key = trim(raw.substr(0, eq));
      const std::string value = trim(raw.substr(eq + 1));
      if (key.empty())
        throw ConfigError(source, lineno, 1, "empty key before '='");
      Entry& e = cfg.entries_[section + "." + key];
      if (e.line != 0)
        throw ConfigError(source, lineno, 1,
                          "duplicate key '" + key + "' in section [" +
                              section + "] (first at line " +
                              std::to_string(e.line) + ")");
      e.value = value;
      e.line = lineno;
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& section, const std::string& key) const {
    return entries_.count(section + "." + key) > 0;
  }

  const std::string& get(const std::string& section,
                         const std::string& key) const {
    return entry(section, key).value;
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    auto it = entries_.find(section + "." + key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  double get_double(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    return parse_double(e.value, e.line, section, key);
  }
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const {
    auto it = entries_.find(section + "." + key);
    if (it == entries_.end()) return fallback;
    return parse_double(it->second.value, it->second.line, section, key);
  }

  long get_long(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    return parse_long(e.value, e.line, section, key);
  }
  long get_long_or(const std::string& section, const std::string& key,
                   long fallback) const {
    auto it = entries_.find(section + "." + key);
    if (it == entries_.end()) return fallback;
    return parse_long(it->second.value, it->second.line, section, key);
  }

  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const {
    auto it = entries_.find(section + "." + key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second.value;
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError(source_, it->second.line, 1,
                      "[" + section + "] " + key + ": expected a boolean, got '" +
                          v + "'");
  }

  // Comma-separated list of numbers.
  std::vector<double> get_list(const std::string& section,
                               const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<double> out;
    std::string item;
    std::istringstream ss(e.value);
    while (std::getline(ss, item, ','))
      out.push_back(parse_double(trim(item), e.line, section, key));
    if (out.empty())
      throw ConfigError(source_, e.line, 1,
                        "[" + section + "] " + key + ": empty list");
    return out;
  }

  std::vector<std::string> get_names(const std::string& section,
                                     const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(e.value);
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  int line_of(const std::string& section, const std::string& key) const {
    return entry(section, key).line;
  }

  const std::string& text() const { return text_; }
  const std::string& source() const { return source_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  const Entry& entry(const std::string& section, const std::string& key) const {
    auto it = entries_.find(section + "." + key);
    if (it == entries_.end())
      throw std::runtime_error(source_ + ": missing required key '" + key +
                               "' in section [" + section + "]");
    return it->second;
  }

  double parse_double(const std::string& v, int line,
                      const std::string& section,
                      const std::string& key) const {
    const char* begin = v.c_str();
    char* end = nullptr;
    const double x = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
      throw ConfigError(source_, line, 1,
                        "[" + section + "] " + key + ": expected a number, got '" +
                            v + "'");
    return x;
  }

  long parse_long(const std::string& v, int line, const std::string& section,
                  const std::string& key) const {
    const char* begin = v.c_str();
    char* end = nullptr;
    const long x = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
      throw ConfigError(source_, line, 1,
                        "[" + section + "] " + key +
                            ": expected an integer, got '" + v + "'");
    return x;
  }

  std::string source_;
  std::string text_;
  std::map<std::string, Entry> entries_;
};

}  // namespace krigor
