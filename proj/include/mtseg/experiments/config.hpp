#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtseg {

/// Flat key = value configuration, one entry per line, '#' comments,
/// sections expressed with dotted key prefixes (e.g. train.iterations).
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: missing '=' at " + path + ":" +
                                 std::to_string(lineno));
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config: empty key at " + path + ":" +
                                 std::to_string(lineno));
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::runtime_error("config: bad number for " + key + ": " + it->second);
    }
  }

  long get_long(const std::string& key, long dflt) const {
    const double v = get_double(key, static_cast<double>(dflt));
    return static_cast<long>(v);
  }

  int get_int(const std::string& key, int dflt) const {
    return static_cast<int>(get_long(key, dflt));
  }

  bool get_bool(const std::string& key, bool dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw std::runtime_error("config: bad bool for " + key + ": " + it->second);
  }

  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto t = trim(tok);
      if (!t.empty()) out.push_back(std::stod(t));
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace mtseg
