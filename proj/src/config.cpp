#include "amr/config.hpp"

#include <fstream>
#include <sstream>

#include "amr/quadrant.hpp"

namespace amr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config c;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
    c.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

int Config::get(const std::string& key, int fallback) const {
  return has(key) ? static_cast<int>(number(key)) : fallback;
}

double Config::number(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("config: missing key " + key);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != it->second.size() || it->second.empty()) throw Error("config: " + key + " is not a number");
  return v;
}

}  // namespace amr
