#include "flowlab/config.hpp"

#include <charconv>
#include <sstream>

#include "flowlab/error.hpp"
#include "flowlab/plan_io.hpp"

namespace flowlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(source + ":" + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    kv.entries_[key] = value;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) { return parse(load_text(path), path); }

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ValidationError("config key '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ValidationError("config key '" + key + "': expected a nonnegative integer, got '" + s + "'");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return parse_double(it->second);
  } catch (const ValidationError&) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<int> out;
  for (const auto& f : split_csv_line(it->second)) {
    const std::string s = trim(f);
    int v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw ValidationError("config key '" + key + "': expected comma-separated integers, got '" + it->second + "'");
    out.push_back(v);
  }
  return out;
}

void KeyValueConfig::check_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : entries_)
    if (!allowed.count(k)) throw ValidationError("unknown config key '" + k + "'");
}

std::string KeyValueConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "' (expected silu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "silu"; }

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys{"target", "coupling", "lipman_r", "beta", "batch", "ot_batch", "epochs",
                                          "samples", "lr", "adam_beta1", "adam_beta2", "adam_eps", "seed", "eps",
                                          "hidden", "time_pairs", "activation", "prior_seed"};
  return keys;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  kv.check_known(train_config_keys());
  TrainConfig c;
  c.target = kv.get("target", c.target);
  c.coupling = parse_coupling(kv.get("coupling", to_string(c.coupling)));
  c.lipman_r = kv.get_double("lipman_r", c.lipman_r);
  c.beta = kv.get_double("beta", c.beta);
  c.batch = kv.get_int("batch", c.batch);
  c.ot_batch = kv.get_int("ot_batch", c.ot_batch);
  c.epochs = kv.get_int("epochs", c.epochs);
  c.samples = kv.get_int("samples", c.samples);
  c.adam.lr = kv.get_double("lr", c.adam.lr);
  c.adam.beta1 = kv.get_double("adam_beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("adam_beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("adam_eps", c.adam.eps);
  c.seed = kv.get_u64("seed", c.seed);
  c.eps = kv.get_double("eps", c.eps);
  c.hidden = kv.get_int_list("hidden", c.hidden);
  c.time_pairs = kv.get_int("time_pairs", c.time_pairs);
  c.activation = parse_activation(kv.get("activation", to_string(c.activation)));
  c.prior_seed = kv.get_u64("prior_seed", c.prior_seed);
  c.validate();
  return c;
}

KeyValueConfig to_key_values(const TrainConfig& c) {
  KeyValueConfig kv;
  kv.set("target", c.target);
  kv.set("coupling", to_string(c.coupling));
  kv.set("lipman_r", format_double(c.lipman_r));
  kv.set("beta", format_double(c.beta));
  kv.set("batch", std::to_string(c.batch));
  kv.set("ot_batch", std::to_string(c.ot_batch));
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("samples", std::to_string(c.samples));
  kv.set("lr", format_double(c.adam.lr));
  kv.set("adam_beta1", format_double(c.adam.beta1));
  kv.set("adam_beta2", format_double(c.adam.beta2));
  kv.set("adam_eps", format_double(c.adam.eps));
  kv.set("seed", std::to_string(c.seed));
  kv.set("eps", format_double(c.eps));
  kv.set("hidden", format_int_list(c.hidden));
  kv.set("time_pairs", std::to_string(c.time_pairs));
  kv.set("activation", to_string(c.activation));
  kv.set("prior_seed", std::to_string(c.prior_seed));
  return kv;
}

const std::set<std::string>& diffusion_config_keys() {
  static const std::set<std::string> keys{"beta_min", "beta_max", "horizon", "steps", "batch", "t_min", "scaled",
                                          "lr", "seed", "hidden", "time_pairs", "activation"};
  return keys;
}

DiffusionConfig diffusion_config_from(const KeyValueConfig& kv) {
  kv.check_known(diffusion_config_keys());
  DiffusionConfig c;
  c.schedule = VpSchedule(kv.get_double("beta_min", c.schedule.beta_min), kv.get_double("beta_max", c.schedule.beta_max),
                          kv.get_double("horizon", c.schedule.horizon));
  c.steps = kv.get_int("steps", c.steps);
  c.batch = kv.get_int("batch", c.batch);
  c.t_min = kv.get_double("t_min", c.t_min);
  c.scaled = kv.get_int("scaled", c.scaled ? 1 : 0) != 0;
  c.adam.lr = kv.get_double("lr", c.adam.lr);
  c.seed = kv.get_u64("seed", c.seed);
  c.hidden = kv.get_int_list("hidden", c.hidden);
  c.time_pairs = kv.get_int("time_pairs", c.time_pairs);
  c.activation = parse_activation(kv.get("activation", to_string(c.activation)));
  return c;
}

KeyValueConfig to_key_values(const DiffusionConfig& c) {
  KeyValueConfig kv;
  kv.set("beta_min", format_double(c.schedule.beta_min));
  kv.set("beta_max", format_double(c.schedule.beta_max));
  kv.set("horizon", format_double(c.schedule.horizon));
  kv.set("steps", std::to_string(c.steps));
  kv.set("batch", std::to_string(c.batch));
  kv.set("t_min", format_double(c.t_min));
  kv.set("scaled", c.scaled ? "1" : "0");
  kv.set("lr", format_double(c.adam.lr));
  kv.set("seed", std::to_string(c.seed));
  kv.set("hidden", format_int_list(c.hidden));
  kv.set("time_pairs", std::to_string(c.time_pairs));
  kv.set("activation", to_string(c.activation));
  return kv;
}

}  // namespace flowlab
