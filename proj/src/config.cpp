#include "reach/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "reach/errors.hpp"

namespace reach {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

void check_schema(const pt::ptree& tree, const std::string& origin) {
  const auto version = tree.get_optional<std::string>("schema_version");
  if (!version) {
    throw ConfigError(origin + ": missing mandatory key 'schema_version'");
  }
  if (trim(*version) != std::to_string(Config::kSchemaVersion)) {
    throw ConfigError(origin + ": unsupported schema_version '" + *version +
                      "' (expected " + std::to_string(Config::kSchemaVersion) + ")");
  }
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  Config cfg;
  try {
    pt::read_ini(in, cfg.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  check_schema(cfg.tree_, path.string());
  return cfg;
}

Config Config::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  Config cfg;
  try {
    pt::read_ini(in, cfg.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("<string>: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  check_schema(cfg.tree_, "<string>");
  return cfg;
}

std::optional<std::string> Config::raw(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(key);
  if (!v) return std::nullopt;
  return trim(*v);
}

bool Config::has(const std::string& key) const { return raw(key).has_value(); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

std::string Config::require_string(const std::string& key) const {
  auto v = raw(key);
  if (!v) throw ConfigError("missing required key '" + key + "'");
  return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + *v + "'");
  }
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  long long out = 0;
  const auto* end = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || ptr != end) {
    // Accept integral values written in floating notation, e.g. 2e5.
    const double d = get_double(key, 0.0);
    if (d != static_cast<double>(static_cast<long long>(d))) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + *v + "'");
    }
    return static_cast<long long>(d);
  }
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& tok : split_list(*v, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad number '" + tok + "'");
    }
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  return split_list(*v, ',');
}

void Config::set(const std::string& key, const std::string& value) {
  tree_.put(key, value);
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value, got '" +
                      std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::vector<std::string> Config::keys(const std::string& section) const {
  std::vector<std::string> out;
  const auto child = tree_.get_child_optional(section);
  if (!child) return out;
  for (const auto& [k, v] : *child) out.push_back(k);
  return out;
}

std::string Config::canonical() const {
  std::map<std::string, std::string> flat;
  for (const auto& [k, v] : tree_) {
    if (v.empty()) {
      flat[k] = trim(v.data());
    } else {
      for (const auto& [k2, v2] : v) flat[k + "." + k2] = trim(v2.data());
    }
  }
  std::string out;
  for (const auto& [k, v] : flat) out += k + "=" + v + "\n";
  return out;
}

std::string Config::to_ini() const {
  std::map<std::string, std::string> top;
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : tree_) {
    if (v.empty()) {
      top[k] = trim(v.data());
    } else {
      for (const auto& [k2, v2] : v) sections[k][k2] = trim(v2.data());
    }
  }
  std::string out;
  for (const auto& [k, v] : top) out += k + " = " + v + "\n";
  for (const auto& [name, keys] : sections) {
    out += "\n[" + name + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
  }
  return out;
}

std::string Config::hash_hex() const { return hex64(fnv1a64(canonical())); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    const auto tok = trim(text.substr(start, pos == std::string_view::npos ? text.npos : pos - start));
    if (!tok.empty()) out.push_back(tok);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace reach
