#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "status.hpp"

namespace mecd {

// Flat "key = value" run configuration with section prefixes (model., train.,
// loss., causal., synth., ...). Keys are fixed; unknown keys are rejected.
// Precedence is defaults < file < overrides, applied in that order by the
// caller.
class RunConfig {
 public:
  RunConfig();  // defaults

  static bool is_known_key(const std::string& key);
  static std::vector<std::string> known_keys();

  void set(const std::string& key, const std::string& value);  // Usage error on unknown key
  const std::string& get(const std::string& key) const;

  void load_file(const std::filesystem::path& path);
  std::string serialize() const;  // canonical key order, reparseable
  void write_file(const std::filesystem::path& path) const;

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // on/off, true/false, 1/0
  uint64_t get_u64(const std::string& key) const;
  std::vector<uint64_t> get_u64_list(const std::string& key) const;  // comma separated

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mecd
