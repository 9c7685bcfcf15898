#include "util/config.hpp"

#include <fstream>
#include <sstream>

#include "util/error.hpp"
#include "util/strings.hpp"

namespace fedlt::util {

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw_error(ErrorKind::Config,
                  "config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw_error(ErrorKind::Config, "config line " + std::to_string(lineno) + ": empty key");
    cfg.entries_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Config, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& def) const {
  auto v = get(key);
  return v ? *v : def;
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
  auto v = get(key);
  if (!v) return def;
  try {
    return parse_double(*v, key);
  } catch (const Error& e) {
    throw_error(ErrorKind::Config, std::string(e.what()));
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long def) const {
  auto v = get(key);
  if (!v) return def;
  try {
    return parse_int(*v, key);
  } catch (const Error& e) {
    throw_error(ErrorKind::Config, std::string(e.what()));
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) const {
  auto v = get(key);
  if (!v) return def;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw_error(ErrorKind::Config, "config key '" + key + "': expected boolean, got '" + *v + "'");
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
  return out.str();
}

void KeyValueConfig::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw_error(ErrorKind::Io, "cannot write config file '" + path + "'");
  out << serialize();
}

}  // namespace fedlt::util
