#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flowlab/diffusion.hpp"
#include "flowlab/training.hpp"

namespace flowlab {

/// Flat `key = value` document; `#` starts a comment, blank lines are ignored,
/// values may be wrapped in double quotes.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Later keys win.
  void merge(const KeyValueConfig& other);

  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ValidationError naming the first key outside `allowed`.
  void check_known(const std::set<std::string>& allowed) const;
  /// Sorted `key = value` lines.
  std::string dump() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_int_list(const std::vector<int>& v);
Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

const std::set<std::string>& train_config_keys();
TrainConfig train_config_from(const KeyValueConfig& kv);
KeyValueConfig to_key_values(const TrainConfig& c);

const std::set<std::string>& diffusion_config_keys();
DiffusionConfig diffusion_config_from(const KeyValueConfig& kv);
KeyValueConfig to_key_values(const DiffusionConfig& c);

}  // namespace flowlab
