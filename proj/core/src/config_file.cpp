#include "mcdet/config_file.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mcdet/error.hpp"

namespace mcdet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + " line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + " line " + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a number, got '" + *v + "'");
  }
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long d = std::stoll(*v, &used);
    if (used != v->size() || d < 0) throw std::invalid_argument(*v);
    return static_cast<std::size_t>(d);
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a non-negative integer, got '" + *v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(origin_ + ": key '" + key + "' expects true or false, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::string text = *v;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<double> out;
  for (std::string tok; in >> tok;) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key '" + key + "' expects a list of numbers, got '" + *v + "'");
    }
  }
  return out;
}

void KeyValueConfig::reject_unused() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

}  // namespace mcdet
