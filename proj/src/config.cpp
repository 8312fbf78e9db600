#include "wbmpc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <istream>

namespace wbmpc::config {
namespace {

namespace pt = boost::property_tree;

pt::ptree read_ini(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return tree;
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  const pt::ptree tree = read_ini(in);
  KeyValues kv;
  for (const auto& [key, child] : tree) {
    if (!child.empty()) throw ConfigError("unexpected section '" + key + "' in flat key-value file");
    kv.emplace_back(key, child.data());
  }
  return kv;
}

std::map<std::string, KeyValues> parse_sections(std::istream& in) {
  const pt::ptree tree = read_ini(in);
  std::map<std::string, KeyValues> out;
  for (const auto& [key, child] : tree) {
    if (child.empty()) {
      out[""].emplace_back(key, child.data());
      continue;
    }
    auto& section = out[key];
    for (const auto& [k, v] : child) section.emplace_back(k, v.data());
  }
  return out;
}

std::map<std::string, KeyValues> load_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact(path);
  return parse_sections(in);
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': expected a number, got '" + value + "'");
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  int v = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': expected an integer, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace wbmpc::config
