#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace confgen::cfg {

// Flat key=value settings. Every key can come from a config file or be
// overridden by a command-line flag of the same name; unknown keys are
// rejected up front.
class RunConfig {
 public:
  // Known keys with their defaults (as strings) and a help line.
  struct KeySpec {
    std::string key;
    std::string default_value;
    std::string help;
  };

  static const std::vector<KeySpec>& known_keys();

  RunConfig();  // defaults

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool is_known(const std::string& key) const;

  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::int64_t get_i64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace confgen::cfg
