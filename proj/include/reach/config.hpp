#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>

namespace reach {

/// INI-style key-value file with `[section]` headers. Keys are addressed as
/// "section.key"; top-level keys have no section. Every file must carry a
/// top-level `schema_version`.
class Config {
 public:
  static constexpr int kSchemaVersion = 1;

  Config() = default;
  static Config load(const std::filesystem::path& path);
  static Config parse(std::string_view text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  std::string require_string(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  /// Applies "section.key=value".
  void apply_override(std::string_view assignment);

  /// Keys of one section, in file order.
  std::vector<std::string> keys(const std::string& section) const;

  /// Canonical text form (sections and keys sorted); used for hashing.
  std::string canonical() const;
  std::string hash_hex() const;
  /// INI text that parses back to the same config.
  std::string to_ini() const;

 private:
  std::optional<std::string> raw(const std::string& key) const;

  boost::property_tree::ptree tree_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Splits "a, b ,c" into trimmed tokens; empty tokens are dropped.
std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace reach
