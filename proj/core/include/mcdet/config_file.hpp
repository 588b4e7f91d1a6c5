#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mcdet {

/// Flat `key = value` file. Blank lines and `#` comments are ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError listing keys never read through a getter.
  void reject_unused() const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  const std::string* lookup(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace mcdet
