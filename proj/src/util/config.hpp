#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedlt::util {

/// Flat key-value configuration with dotted section names:
///
///   # comment
///   data.alpha = 0.5
///   run.variants = fedyoyo,fedavg
///
/// Keys are unique; a re-serialized config parses back equal (keys are kept
/// sorted, values verbatim).
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_text(const std::string& text);
  static KeyValueConfig load_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  long long get_int(const std::string& key, long long def) const;
  bool get_bool(const std::string& key, bool def) const;

  std::string serialize() const;
  void save_file(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  bool operator==(const KeyValueConfig& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace fedlt::util
