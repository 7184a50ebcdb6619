// Plain key = value configuration files; '#' starts a comment.
#pragma once

#include <map>
#include <string>
#include <string_view>

namespace amr {

class Config {
 public:
  Config() = default;
  static Config parse(std::string_view text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  /// Throws Error when missing or not a number.
  double number(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace amr
