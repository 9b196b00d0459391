#pragma once

#include <map>
#include <string>
#include <vector>

namespace crrl::config {

/// Minimal INI reader: `[section]` headers, `key = value` pairs, `#` or `;`
/// comments. Keys are flattened to "section.key". Later assignments win,
/// which is also how --set overrides are applied.
class Ini {
 public:
  static Ini parse_file(const std::string& path);
  static Ini parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  /// Applies a single "section.key=value" override.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<long> get_long_list(const std::string& key,
                                  const std::vector<long>& fallback) const;
  std::vector<long> get_int_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace crrl::config
