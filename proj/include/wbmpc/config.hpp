#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wbmpc::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file (library, specialist, config) is absent.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& path)
      : std::runtime_error("missing artifact: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat `name = value` text. Comments start with `#` or `;`.
KeyValues parse_key_values(std::istream& in);

/// INI-style text with `[section]` headers; keys before any header land in "".
std::map<std::string, KeyValues> parse_sections(std::istream& in);
std::map<std::string, KeyValues> load_sections(const std::string& path);

double to_double(const std::string& key, const std::string& value);
int to_int(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);

}  // namespace wbmpc::config
